from dataclasses import dataclass, field
import numpy as np
from dual_level_forecaster.mytypes import ShapeError


@dataclass
class AdamState:
  lr:float = 1e-4
  beta1:float = 0.9
  beta2:float = 0.999
  eps:float = 1e-8
  step:int = 0
  m:dict[str, np.ndarray] = field(default_factory=dict)
  v:dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params:dict[str, np.ndarray], grads:dict[str, np.ndarray],
              state:AdamState) -> tuple[dict[str, np.ndarray], AdamState]:
  """
    One bias-corrected Adam update. Parameters without a gradient entry are
    treated as having zero gradient. Returns new arrays; inputs are not mutated.
  """
  step = state.step + 1
  new_params: dict[str, np.ndarray] = {}
  new_m: dict[str, np.ndarray] = {}
  new_v: dict[str, np.ndarray] = {}
  c1 = 1.0 - state.beta1 ** step
  c2 = 1.0 - state.beta2 ** step
  for name, value in params.items():
    g = grads.get(name)
    if g is None:
      g = np.zeros_like(value)
    if g.shape != value.shape:
      raise ShapeError(msg=f"adam_step: gradient shape {g.shape} vs parameter shape {value.shape}", key=name)
    m = state.m.get(name, np.zeros_like(value))
    v = state.v.get(name, np.zeros_like(value))
    m = state.beta1 * m + (1.0 - state.beta1) * g
    v = state.beta2 * v + (1.0 - state.beta2) * g * g
    m_hat = m / c1
    v_hat = v / c2
    new_params[name] = value - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_m[name] = m
    new_v[name] = v
  new_state = AdamState(lr=state.lr, beta1=state.beta1, beta2=state.beta2, eps=state.eps,
                        step=step, m=new_m, v=new_v)
  return new_params, new_state
