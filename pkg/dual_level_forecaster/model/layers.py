"""
  Pre-LN transformer building blocks over gradcore.

  Parameters live in flat dicts of named Tensors ("<prefix>.W", "<prefix>.b", ...)
  so they map one-to-one onto checkpoint tensor-table records.
"""
import math
import numpy as np
from dual_level_forecaster.gradcore import ops
from dual_level_forecaster.gradcore.tensor import Tensor

Params = dict[str, Tensor]


def _param(params:Params, name:str, data:np.ndarray):
  params[name] = Tensor(np.asarray(data, dtype=np.float64), requires_grad=True, name=name)


def init_linear(params:Params, prefix:str, d_in:int, d_out:int, rng:np.random.Generator):
  _param(params, f"{prefix}.W", rng.standard_normal((d_in, d_out)) / math.sqrt(d_in))
  _param(params, f"{prefix}.b", np.zeros(d_out))


def linear(x, params:Params, prefix:str) -> Tensor:
  return ops.linear(x, params[f"{prefix}.W"], params[f"{prefix}.b"])


def init_layer_norm(params:Params, prefix:str, d:int):
  _param(params, f"{prefix}.gamma", np.ones(d))
  _param(params, f"{prefix}.beta", np.zeros(d))


def layer_norm(x, params:Params, prefix:str) -> Tensor:
  normed = ops.layer_norm(x, axis=-1)
  gamma = ops.expand(params[f"{prefix}.gamma"], normed.shape)
  beta = ops.expand(params[f"{prefix}.beta"], normed.shape)
  return ops.add(ops.mul(normed, gamma), beta)


def init_attention(params:Params, prefix:str, d:int, rng:np.random.Generator):
  for proj in ('q', 'k', 'v', 'o'):
    _param(params, f"{prefix}.W{proj}", rng.standard_normal((d, d)) / math.sqrt(d))
    _param(params, f"{prefix}.b{proj}", np.zeros(d))


def attention(query, memory, params:Params, prefix:str, heads:int) -> Tensor:
  view = {f"{kind}{proj}": params[f"{prefix}.{kind}{proj}"] for kind in ('W', 'b') for proj in 'qkvo'}
  return ops.multi_head_attention(query, memory, view, heads)


def init_feedforward(params:Params, prefix:str, d:int, ff_dim:int, rng:np.random.Generator):
  init_linear(params, f"{prefix}.ff1", d, ff_dim, rng)
  init_linear(params, f"{prefix}.ff2", ff_dim, d, rng)


def feedforward(x, params:Params, prefix:str) -> Tensor:
  return linear(ops.gelu(linear(x, params, f"{prefix}.ff1")), params, f"{prefix}.ff2")


def init_encoder_layer(params:Params, prefix:str, d:int, ff_dim:int, rng:np.random.Generator):
  init_layer_norm(params, f"{prefix}.ln1", d)
  init_attention(params, f"{prefix}.attn", d, rng)
  init_layer_norm(params, f"{prefix}.ln2", d)
  init_feedforward(params, prefix, d, ff_dim, rng)


def encoder_layer(x, params:Params, prefix:str, heads:int) -> Tensor:
  """x: (B, L, d)"""
  h = layer_norm(x, params, f"{prefix}.ln1")
  x = ops.add(x, attention(h, h, params, f"{prefix}.attn", heads))
  h = layer_norm(x, params, f"{prefix}.ln2")
  return ops.add(x, feedforward(h, params, prefix))


def init_decoder_layer(params:Params, prefix:str, d:int, ff_dim:int, rng:np.random.Generator):
  init_layer_norm(params, f"{prefix}.ln1", d)
  init_attention(params, f"{prefix}.self", d, rng)
  init_layer_norm(params, f"{prefix}.ln2", d)
  init_attention(params, f"{prefix}.cross", d, rng)
  init_layer_norm(params, f"{prefix}.ln3", d)
  init_feedforward(params, prefix, d, ff_dim, rng)


def decoder_layer(x, memory, params:Params, prefix:str, heads:int) -> Tensor:
  """
  x: (B, G, T, d) query groups, memory: (B, S, d).
  Self-attention stays inside each group of T queries; every query row
  cross-attends to the memory on its own, so groups never see each other.
  """
  b, g, t, d = x.shape
  h = ops.reshape(layer_norm(x, params, f"{prefix}.ln1"), (b * g, t, d))
  x = ops.add(x, ops.reshape(attention(h, h, params, f"{prefix}.self", heads), (b, g, t, d)))
  h = ops.reshape(layer_norm(x, params, f"{prefix}.ln2"), (b, g * t, d))
  x = ops.add(x, ops.reshape(attention(h, memory, params, f"{prefix}.cross", heads), (b, g, t, d)))
  h = layer_norm(x, params, f"{prefix}.ln3")
  return ops.add(x, feedforward(h, params, prefix))


def sinusoidal_encoding(positions, d:int) -> np.ndarray:
  """Fixed (L, d) sinusoidal table for arbitrary (possibly negative) integer positions."""
  positions = np.asarray(positions, dtype=np.float64)[:, None]
  i = np.arange(d)[None, :]
  rates = 1.0 / np.power(10000.0, (2 * (i // 2)) / d)
  angles = positions * rates
  return np.where(i % 2 == 0, np.sin(angles), np.cos(angles))


def frozen(params:Params) -> Params:
  """Copy of params that records no tape, for inference."""
  return {name: Tensor(t.data.copy(), name=name) for name, t in params.items()}


def to_arrays(params:Params) -> dict[str, np.ndarray]:
  return {name: t.data for name, t in params.items()}


def from_arrays(arrays:dict[str, np.ndarray], requires_grad:bool=True) -> Params:
  return {name: Tensor(np.array(a, dtype=np.float64), requires_grad=requires_grad, name=name)
          for name, a in arrays.items()}
