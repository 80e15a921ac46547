"""
  Differentiable primitives over gradcore Tensors.

  Broadcasting is limited to equal shapes or a 0-d operand; anything else has to be
  made explicit with expand/reshape. matmul additionally accepts a shared 2-D right
  operand (weights) against a batched left operand.
"""
import math
from typing import Sequence
import numpy as np
from dual_level_forecaster.mytypes import ShapeError
from dual_level_forecaster.gradcore.tensor import Tensor, as_tensor, record, log_branch

_GELU_C = math.sqrt(2.0 / math.pi)


def _pair(op:str, a, b) -> tuple[Tensor, Tensor]:
  a, b = as_tensor(a), as_tensor(b)
  if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
    raise ShapeError(msg=f"{op}: incompatible shapes {a.shape} and {b.shape}")
  return a, b


def _unbroadcast(g:np.ndarray, shape:tuple) -> np.ndarray:
  if shape == () and g.shape != ():
    return np.asarray(g.sum())
  return g


def _norm_axis(axis:int, ndim:int, op:str) -> int:
  if not -ndim <= axis < ndim:
    raise ShapeError(msg=f"{op}: axis {axis} out of range for rank {ndim}")
  return axis % ndim


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
  a, b = _pair('add', a, b)
  return record(a.data + b.data, 'add', (a, b),
                lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
  a, b = _pair('sub', a, b)
  return record(a.data - b.data, 'sub', (a, b),
                lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
  a, b = _pair('mul', a, b)
  return record(a.data * b.data, 'mul', (a, b),
                lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
  a, b = _pair('div', a, b)
  out = a.data / b.data

  def _back(g):
    ga = g / b.data
    gb = -g * a.data / (b.data * b.data)
    return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

  return record(out, 'div', (a, b), _back)


def neg(x) -> Tensor:
  x = as_tensor(x)
  return record(-x.data, 'neg', (x,), lambda g: (-g,))


def exp(x) -> Tensor:
  x = as_tensor(x)
  out = np.exp(x.data)
  return record(out, 'exp', (x,), lambda g: (g * out,))


def sqrt(x) -> Tensor:
  x = as_tensor(x)
  out = np.sqrt(x.data)
  return record(out, 'sqrt', (x,), lambda g: (g / (2.0 * out),))


def square(x) -> Tensor:
  x = as_tensor(x)
  return record(x.data * x.data, 'square', (x,), lambda g: (2.0 * g * x.data,))


def squared_error(a, b) -> Tensor:
  """Elementwise (a - b)^2."""
  a, b = _pair('squared_error', a, b)
  diff = a.data - b.data
  return record(diff * diff, 'squared_error', (a, b),
                lambda g: (_unbroadcast(2.0 * g * diff, a.shape), _unbroadcast(-2.0 * g * diff, b.shape)))


def relu(x) -> Tensor:
  x = as_tensor(x)
  mask = x.data > 0
  log_branch('relu', mask)
  return record(np.where(mask, x.data, 0.0), 'relu', (x,), lambda g: (g * mask,))


def gelu(x) -> Tensor:
  """tanh approximation of the Gaussian error linear unit"""
  x = as_tensor(x)
  v = x.data
  inner = _GELU_C * (v + 0.044715 * v ** 3)
  t = np.tanh(inner)
  out = 0.5 * v * (1.0 + t)

  def _back(g):
    dinner = _GELU_C * (1.0 + 3.0 * 0.044715 * v * v)
    return (g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * dinner),)

  return record(out, 'gelu', (x,), _back)


# ---------------------------------------------------------------- linear algebra

def matmul(a, b) -> Tensor:
  a, b = as_tensor(a), as_tensor(b)
  if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
    raise ShapeError(msg=f"matmul: incompatible shapes {a.shape} and {b.shape}")
  shared = b.ndim == 2 and a.ndim > 2
  if not shared and a.shape[:-2] != b.shape[:-2]:
    raise ShapeError(msg=f"matmul: batch dims differ {a.shape} and {b.shape}")
  out = a.data @ b.data

  def _back(g):
    ga = g @ np.swapaxes(b.data, -1, -2)
    if shared:
      k, m = b.shape
      gb = a.data.reshape(-1, k).T @ g.reshape(-1, m)
    else:
      gb = np.swapaxes(a.data, -1, -2) @ g
    return ga, gb

  return record(out, 'matmul', (a, b), _back)


# ---------------------------------------------------------------- normalisation

def softmax(x, axis:int=-1) -> Tensor:
  x = as_tensor(x)
  axis = _norm_axis(axis, x.ndim, 'softmax')
  shifted = x.data - x.data.max(axis=axis, keepdims=True)
  e = np.exp(shifted)
  y = e / e.sum(axis=axis, keepdims=True)

  def _back(g):
    return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

  return record(y, 'softmax', (x,), _back)


def layer_norm(x, axis:int=-1, eps:float=1e-5) -> Tensor:
  x = as_tensor(x)
  axis = _norm_axis(axis, x.ndim, 'layer_norm')
  mu = x.data.mean(axis=axis, keepdims=True)
  centred = x.data - mu
  var = (centred * centred).mean(axis=axis, keepdims=True)
  inv = 1.0 / np.sqrt(var + eps)
  xhat = centred * inv

  def _back(g):
    gm = g.mean(axis=axis, keepdims=True)
    gx = (g * xhat).mean(axis=axis, keepdims=True)
    return (inv * (g - gm - xhat * gx),)

  return record(xhat, 'layer_norm', (x,), _back)


# ---------------------------------------------------------------- structure

def concat(tensors:Sequence, axis:int=0) -> Tensor:
  tensors = [as_tensor(t) for t in tensors]
  if not tensors:
    raise ShapeError(msg="concat: no tensors given")
  ndim = tensors[0].ndim
  axis = _norm_axis(axis, ndim, 'concat')
  for t in tensors[1:]:
    if t.ndim != ndim or t.shape[:axis] != tensors[0].shape[:axis] \
        or t.shape[axis + 1:] != tensors[0].shape[axis + 1:]:
      raise ShapeError(msg=f"concat: incompatible shapes {[t.shape for t in tensors]} on axis {axis}")
  sizes = [t.shape[axis] for t in tensors]
  bounds = np.cumsum(sizes)[:-1]
  out = np.concatenate([t.data for t in tensors], axis=axis)
  return record(out, 'concat', tensors, lambda g: tuple(np.split(g, bounds, axis=axis)))


def stack(tensors:Sequence, axis:int=0) -> Tensor:
  tensors = [as_tensor(t) for t in tensors]
  axis = axis % (tensors[0].ndim + 1)
  lifted = [reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors]
  return concat(lifted, axis=axis)


def slice_(x, key) -> Tensor:
  x = as_tensor(x)
  out = x.data[key]
  if out.base is not None:
    out = out.copy()

  def _back(g):
    grad = np.zeros_like(x.data)
    np.add.at(grad, key, g)
    return (grad,)

  return record(np.asarray(out, dtype=np.float64), 'slice', (x,), _back)


def take(x, indices, axis:int=0) -> Tensor:
  """Gather along one axis; repeated indices accumulate gradient."""
  x = as_tensor(x)
  axis = _norm_axis(axis, x.ndim, 'take')
  idx = np.asarray(indices, dtype=np.int64)
  if idx.size and (idx.min() < -x.shape[axis] or idx.max() >= x.shape[axis]):
    raise ShapeError(msg=f"take: index out of range for axis {axis} of size {x.shape[axis]}")
  flat = idx.ravel()
  gathered = np.take(x.data, flat, axis=axis)
  out_shape = x.shape[:axis] + idx.shape + x.shape[axis + 1:]

  def _back(g):
    grad = np.zeros_like(x.data)
    g_flat = np.moveaxis(g.reshape(gathered.shape), axis, 0)
    np.add.at(np.moveaxis(grad, axis, 0), flat, g_flat)
    return (grad,)

  return record(gathered.reshape(out_shape), 'take', (x,), _back)


def reshape(x, shape) -> Tensor:
  x = as_tensor(x)
  shape = tuple(shape)
  try:
    out = x.data.reshape(shape)
  except ValueError:
    raise ShapeError(msg=f"reshape: cannot reshape {x.shape} to {shape}")
  return record(out, 'reshape', (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes:Sequence[int]) -> Tensor:
  x = as_tensor(x)
  axes = tuple(axes)
  if sorted(a % x.ndim for a in axes) != list(range(x.ndim)):
    raise ShapeError(msg=f"transpose: bad permutation {axes} for rank {x.ndim}")
  inverse = tuple(np.argsort(axes))
  return record(np.transpose(x.data, axes), 'transpose', (x,), lambda g: (np.transpose(g, inverse),))


def expand(x, shape) -> Tensor:
  """Explicit numpy-style broadcast of x to shape."""
  x = as_tensor(x)
  shape = tuple(shape)
  try:
    out = np.broadcast_to(x.data, shape)
  except ValueError:
    raise ShapeError(msg=f"expand: cannot broadcast {x.shape} to {shape}")
  lead = len(shape) - x.ndim
  kept = tuple(i for i, d in enumerate(x.shape) if d == 1 and shape[lead + i] != 1)

  def _back(g):
    if lead:
      g = g.sum(axis=tuple(range(lead)))
    if kept:
      g = g.sum(axis=kept, keepdims=True)
    return (g,)

  return record(np.array(out), 'expand', (x,), _back)


# ---------------------------------------------------------------- reductions

def _reduce_back(g:np.ndarray, shape:tuple, axis, keepdims:bool, scale:float=1.0) -> np.ndarray:
  if axis is not None and not keepdims:
    g = np.expand_dims(g, axis)
  return np.broadcast_to(g * scale, shape).copy()


def _axes(axis, ndim:int, op:str):
  if axis is None:
    return None
  if isinstance(axis, int):
    return (_norm_axis(axis, ndim, op),)
  return tuple(sorted(_norm_axis(a, ndim, op) for a in axis))


def sum(x, axis=None, keepdims:bool=False) -> Tensor:
  x = as_tensor(x)
  axes = _axes(axis, x.ndim, 'sum')
  out = np.asarray(x.data.sum(axis=axes, keepdims=keepdims))
  return record(out, 'sum', (x,), lambda g: (_reduce_back(g, x.shape, axes, keepdims),))


def mean(x, axis=None, keepdims:bool=False) -> Tensor:
  x = as_tensor(x)
  axes = _axes(axis, x.ndim, 'mean')
  count = x.size if axes is None else int(np.prod([x.shape[a] for a in axes]))
  out = np.asarray(x.data.mean(axis=axes, keepdims=keepdims))
  return record(out, 'mean', (x,), lambda g: (_reduce_back(g, x.shape, axes, keepdims, 1.0 / count),))


def cumsum(x, axis:int=0) -> Tensor:
  x = as_tensor(x)
  axis = _norm_axis(axis, x.ndim, 'cumsum')

  def _back(g):
    return (np.flip(np.cumsum(np.flip(g, axis=axis), axis=axis), axis=axis),)

  return record(np.cumsum(x.data, axis=axis), 'cumsum', (x,), _back)


def _select(x:Tensor, axis:int, idx:np.ndarray, op:str) -> Tensor:
  picked = np.take_along_axis(x.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)

  def _back(g):
    grad = np.zeros_like(x.data)
    np.put_along_axis(grad, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
    return (grad,)

  return record(picked, op, (x,), _back)


def max_reduce(x, axis:int=-1) -> Tensor:
  """Maximum along axis; gradient goes to the first maximal entry only."""
  x = as_tensor(x)
  axis = _norm_axis(axis, x.ndim, 'max_reduce')
  idx = np.argmax(x.data, axis=axis)
  log_branch('max_reduce', idx)
  return _select(x, axis, idx, 'max_reduce')


def min_index_select(x, axis:int=0) -> tuple[Tensor, np.ndarray]:
  """
  Minimum along axis plus the winning indices (lowest index on ties).
  Non-selected entries receive exactly zero gradient.
  """
  x = as_tensor(x)
  axis = _norm_axis(axis, x.ndim, 'min_index_select')
  idx = np.argmin(x.data, axis=axis)
  log_branch('min_index_select', idx)
  return _select(x, axis, idx, 'min_index_select'), idx


# ---------------------------------------------------------------- composites

def linear(x, weight, bias=None) -> Tensor:
  x = as_tensor(x)
  lifted = x if x.ndim >= 2 else reshape(x, (1,) + x.shape)
  out = matmul(lifted, weight)
  if bias is not None:
    out = add(out, expand(bias, out.shape))
  return out if x.ndim >= 2 else reshape(out, out.shape[1:])


def multi_head_attention(query, memory, params:dict, heads:int) -> Tensor:
  """
  Scaled dot-product attention of query (B, Lq, d) over memory (B, Lk, d) with
  `heads` heads. params holds Wq/bq, Wk/bk, Wv/bv, Wo/bo.
  """
  query, memory = as_tensor(query), as_tensor(memory)
  if query.ndim != 3 or memory.ndim != 3 or query.shape[0] != memory.shape[0] \
      or query.shape[2] != memory.shape[2]:
    raise ShapeError(msg=f"multi_head_attention: query {query.shape} vs memory {memory.shape}")
  b, lq, d = query.shape
  lk = memory.shape[1]
  if d % heads:
    raise ShapeError(msg=f"multi_head_attention: d_model {d} not divisible by {heads} heads")
  dh = d // heads

  def split(t, length):
    return transpose(reshape(t, (b, length, heads, dh)), (0, 2, 1, 3))

  q = split(linear(query, params['Wq'], params['bq']), lq)
  k = split(linear(memory, params['Wk'], params['bk']), lk)
  v = split(linear(memory, params['Wv'], params['bv']), lk)
  scores = mul(matmul(q, transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
  context = matmul(softmax(scores, axis=-1), v)
  merged = reshape(transpose(context, (0, 2, 1, 3)), (b, lq, d))
  return linear(merged, params['Wo'], params['bo'])
