"""
  Dense float64 tensors with a recorded tape for reverse-mode differentiation.

  Every op that has at least one input with requires_grad produces an output
  carrying a TapeNode (op name, inputs, backward closure). The tape is never
  consumed: backward() can be called repeatedly on the same graph and always
  returns a fresh gradient map.
"""
import contextvars
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional
import numpy as np
from dual_level_forecaster.mytypes import UsageError

BackwardFn = Callable[[np.ndarray], tuple[Optional[np.ndarray], ...]]

# when set to a list, kinked ops (relu, max, min-select) append their branch pattern
_branch_log: contextvars.ContextVar[Optional[list]] = contextvars.ContextVar('branch_log', default=None)


@dataclass
class TapeNode:
  op:str
  inputs:tuple
  backward:BackwardFn
  saved:dict[str, Any] = field(default_factory=dict)


class Tensor:
    __array_priority__ = 100  # keep numpy from hijacking mixed operators

    def __init__(self, data, requires_grad:bool=False, name:Optional[str]=None):
        self.data = np.array(data, dtype=np.float64) if not isinstance(data, np.ndarray) \
            or data.dtype != np.float64 else data
        self.requires_grad = requires_grad
        self.name = name
        self.node: Optional[TapeNode] = None
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self.node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        label = f", name={self.name}" if self.name else ""
        op = f", op={self.node.op}" if self.node else ""
        return f"Tensor(shape={self.shape}{label}{op})"

    # operators delegate to gradcore.ops
    def __add__(self, other):
        from dual_level_forecaster.gradcore import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from dual_level_forecaster.gradcore import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from dual_level_forecaster.gradcore import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from dual_level_forecaster.gradcore import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from dual_level_forecaster.gradcore import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from dual_level_forecaster.gradcore import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from dual_level_forecaster.gradcore import ops
        return ops.div(self, other)

    def __neg__(self):
        from dual_level_forecaster.gradcore import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from dual_level_forecaster.gradcore import ops
        return ops.matmul(self, other)

    def __getitem__(self, key):
        from dual_level_forecaster.gradcore import ops
        return ops.slice_(self, key)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def record(data:np.ndarray, op:str, inputs:Iterable[Tensor], backward:BackwardFn, **saved) -> Tensor:
    inputs = tuple(inputs)
    out = Tensor(data)
    if any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.node = TapeNode(op, inputs, backward, saved)
    return out


def log_branch(op:str, pattern:np.ndarray):
    log = _branch_log.get()
    if log is not None:
        log.append((op, np.ascontiguousarray(pattern).tobytes()))


class branch_recorder:
    """Context manager collecting the branch pattern of every kinked op evaluated inside it."""

    def __enter__(self) -> list:
        self.log: list = []
        self._token = _branch_log.set(self.log)
        return self.log

    def __exit__(self, *exc):
        _branch_log.reset(self._token)
        return False


def topological_order(root:Tensor) -> list[Tensor]:
    """Recorded tensors reachable from root, inputs before outputs."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        tensor, expanded = stack.pop()
        if expanded:
            order.append(tensor)
            continue
        if id(tensor) in visited:
            continue
        visited.add(id(tensor))
        stack.append((tensor, True))
        if tensor.node is not None:
            for parent in tensor.node.inputs:
                if id(parent) not in visited:
                    stack.append((parent, False))
    return order


def backward(loss:Tensor) -> dict[Tensor, np.ndarray]:
    """
    Reverse-mode gradients of a scalar loss with respect to every leaf tensor
    that requires grad. Leaf .grad attributes are overwritten with the result.
    """
    if loss.data.ndim != 0:
        raise UsageError(msg=f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise UsageError(msg="loss is not connected to any tensor that requires grad")

    order = topological_order(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[Tensor, np.ndarray] = {}
    for tensor in reversed(order):
        g = grads.pop(id(tensor), None)
        if g is None:
            continue
        if tensor.node is None:
            if tensor.requires_grad:
                leaves[tensor] = g
            continue
        input_grads = tensor.node.backward(g)
        for parent, pg in zip(tensor.node.inputs, input_grads):
            if pg is None or not parent.requires_grad:
                continue
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + pg
            else:
                grads[id(parent)] = pg
    for leaf, g in leaves.items():
        leaf.grad = g
    return leaves


def first_non_finite(root:Tensor) -> Optional[Tensor]:
    for tensor in topological_order(root):
        if not np.all(np.isfinite(tensor.data)):
            return tensor
    return None
