"""
  Central finite-difference gradient checks.

  Kink policy: while evaluating f at x+h and x-h every kinked op (relu, max_reduce,
  min_index_select) logs which branch it took. A coordinate whose two evaluations
  took different branches straddles a kink; it is reported as skipped rather
  than compared.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union
import numpy as np
from dual_level_forecaster.gradcore.tensor import Tensor, backward, branch_recorder

REL_ERROR_FLOOR = 1e-4


@dataclass
class GradCheckReport:
  max_rel_error:float = 0.0
  checked:int = 0
  skipped:list[tuple[int, int]] = field(default_factory=list)   # (input index, flat coordinate)
  worst:tuple[int, int] | None = None

  @property
  def passed(self) -> bool:
    return self.checked > 0


def _evaluate(f:Callable, arrays:list[np.ndarray]) -> tuple[float, list]:
  with branch_recorder() as log:
    value = f(*[Tensor(a) for a in arrays])
  return float(value.data), list(log)


def relative_error(analytic:float, numeric:float, floor:float=REL_ERROR_FLOOR) -> float:
  return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(f:Callable[..., Tensor], x:Union[Tensor, Sequence[Tensor]], h:float=1e-5) -> GradCheckReport:
  """
    Compare backward() of the scalar function f against central differences,
    coordinate by coordinate, over one tensor or a sequence of input tensors.
  """
  inputs = [x] if isinstance(x, Tensor) else list(x)
  base = [np.array(t.data, dtype=np.float64) for t in inputs]

  leaves = [Tensor(a.copy(), requires_grad=True) for a in base]
  loss = f(*leaves)
  analytic = [np.zeros_like(a) for a in base]
  if loss.requires_grad:
    grads = backward(loss)
    analytic = [grads.get(leaf, np.zeros_like(leaf.data)) for leaf in leaves]

  report = GradCheckReport()
  for i, arr in enumerate(base):
    for j in range(arr.size):
      plus = [a.copy() for a in base]
      minus = [a.copy() for a in base]
      plus[i].flat[j] += h
      minus[i].flat[j] -= h
      fp, branches_p = _evaluate(f, plus)
      fm, branches_m = _evaluate(f, minus)
      if branches_p != branches_m:
        report.skipped.append((i, j))
        continue
      numeric = (fp - fm) / (2.0 * h)
      err = relative_error(float(analytic[i].flat[j]), numeric)
      report.checked += 1
      if report.worst is None or err > report.max_rel_error:
        report.max_rel_error = err
        report.worst = (i, j)
  if report.skipped:
    logging.debug(f"grad_check skipped {len(report.skipped)} kink-adjacent coordinates")
  return report
