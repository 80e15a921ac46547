"""
  Intent codes: a learnable discrete codebook bundled with Gaussian noise.

  local mode  - every person draws its own codebook rows (without replacement over M)
  global mode - one row per prediction slot m, shared by all persons; noise stays per person
"""
from dataclasses import dataclass
import numpy as np
from dual_level_forecaster.mytypes import IntentMode, UsageError, ShapeError
from dual_level_forecaster.gradcore import ops
from dual_level_forecaster.gradcore.tensor import Tensor

CODEBOOK_KEY = 'intent.codebook'
CODEBOOK_INIT_STD = 0.02


@dataclass
class Codebook:
  entries:Tensor    # (M_codes, code_dim)

  def __post_init__(self):
    if self.entries.ndim != 2 or self.entries.shape[0] < 1:
      raise ShapeError(msg=f"codebook must be (M_codes >= 1, code_dim), got {self.entries.shape}")

  @property
  def size(self) -> int:
    return self.entries.shape[0]

  @property
  def code_dim(self) -> int:
    return self.entries.shape[1]

  @classmethod
  def initialise(cls, m_codes:int, code_dim:int, rng:np.random.Generator) -> "Codebook":
    if m_codes < 1:
      raise UsageError(msg=f"codebook needs at least one entry, got {m_codes}")
    data = rng.standard_normal((m_codes, code_dim)) * CODEBOOK_INIT_STD
    return cls(Tensor(data, requires_grad=True, name=CODEBOOK_KEY))


@dataclass
class IntentBatch:
  mode:IntentMode
  discrete_indices:np.ndarray   # (M, N) int
  continuous:np.ndarray         # (M, N, code_dim)
  combined:Tensor               # (M, N, code_dim)

  @property
  def count(self) -> int:
    return self.discrete_indices.shape[0]

  def source_intents(self) -> tuple[tuple[int, ...], ...]:
    return tuple(tuple(int(i) for i in row) for row in self.discrete_indices)


def _check_counts(codebook:Codebook, m:int, n:int):
  if m < 1 or n < 1:
    raise UsageError(msg=f"need M >= 1 and N >= 1, got M={m}, N={n}")
  if m > codebook.size:
    raise UsageError(msg=f"cannot draw {m} distinct codes from a codebook of {codebook.size}")


def combine(continuous, entries:Tensor, indices:np.ndarray) -> Tensor:
  """continuous + entries[indices]; gradient lands only on referenced rows."""
  rows = ops.take(entries, indices, axis=0)
  return ops.add(continuous, rows)


def _finish(mode:IntentMode, codebook:Codebook, indices:np.ndarray, noise:np.ndarray,
            use_discrete:bool, use_continuous:bool) -> IntentBatch:
  if not use_continuous:
    noise = np.zeros_like(noise)
  if use_discrete:
    combined = combine(Tensor(noise), codebook.entries, indices)
  else:
    combined = Tensor(noise)
  return IntentBatch(mode, indices, noise, combined)


def sample_local(codebook:Codebook, m:int, n:int, rng:np.random.Generator,
                 use_discrete:bool=True, use_continuous:bool=True) -> IntentBatch:
  _check_counts(codebook, m, n)
  indices = np.empty((m, n), dtype=np.int64)
  for person in range(n):
    indices[:, person] = rng.permutation(codebook.size)[:m]
  noise = rng.standard_normal((m, n, codebook.code_dim))
  return _finish(IntentMode.LOCAL, codebook, indices, noise, use_discrete, use_continuous)


def sample_global(codebook:Codebook, m:int, n:int, rng:np.random.Generator,
                  use_discrete:bool=True, use_continuous:bool=True) -> IntentBatch:
  _check_counts(codebook, m, n)
  shared = rng.permutation(codebook.size)[:m]
  indices = np.repeat(shared[:, None], n, axis=1).astype(np.int64)
  noise = rng.standard_normal((m, n, codebook.code_dim))
  return _finish(IntentMode.GLOBAL, codebook, indices, noise, use_discrete, use_continuous)


def stack_codes(batches:list[IntentBatch]) -> Tensor:
  """(B, M, N, d) code tensor for a batch of scenes."""
  return ops.stack([b.combined for b in batches], axis=0)
