"""Dense tensors with reverse-mode automatic differentiation.

A :class:`Tensor` wraps a numpy array.  Every differentiable operation in
:mod:`dualpointer.autodiff.functional` returns a new tensor that remembers
its parents and a closure mapping the output gradient to parent gradients.
:meth:`Tensor.backward` walks that graph in reverse topological order.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

_DEFAULT_DTYPE = np.float32


class ShapeError(ValueError):
    """Operand shapes do not conform."""


def get_default_dtype() -> type:
    return _DEFAULT_DTYPE


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype!r}; use float32 or float64")
    _DEFAULT_DTYPE = dtype


@contextlib.contextmanager
def default_dtype(dtype) -> Iterator[None]:
    """Temporarily switch the dtype used for new tensors (64-bit for grad checks)."""
    previous = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """A node in the autodiff graph.

    Leaf tensors created with ``requires_grad=True`` are parameters; they
    accumulate into ``grad`` on every :meth:`backward` call.  Constants
    (``requires_grad=False``) never receive a gradient.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "name", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        *,
        dtype=None,
        name: str | None = None,
        _parents: tuple["Tensor", ...] = (),
        _backward: BackwardFn | None = None,
        op: str = "leaf",
    ):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
                dtype = data.dtype
            else:
                dtype = _DEFAULT_DTYPE
        self.data = np.asarray(data, dtype=dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.op = op
        self.name = name
        self._parents = _parents
        self._backward = _backward

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.item())

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self.op}{label})"

    def __len__(self) -> int:
        return self.shape[0]

    # -- operator sugar (implemented in functional) -------------------------
    def __add__(self, other):
        from . import functional as F
        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import functional as F
        return F.sub(self, other)

    def __rsub__(self, other):
        from . import functional as F
        return F.sub(other, self)

    def __mul__(self, other):
        from . import functional as F
        return F.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import functional as F
        if isinstance(other, Tensor):
            return F.div(self, other)
        return F.mul(self, 1.0 / other)

    def __neg__(self):
        from . import functional as F
        return F.mul(self, -1.0)

    def __matmul__(self, other):
        from . import functional as F
        return F.matmul(self, other)

    def __getitem__(self, index):
        from . import functional as F
        return F.index(self, index)

    def sum(self, axis=None):
        from . import functional as F
        return F.sum(self, axis)

    def mean(self, axis=None):
        from . import functional as F
        return F.mean(self, axis)

    def reshape(self, *shape):
        from . import functional as F
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)

    def transpose(self, *axes):
        from . import functional as F
        return F.transpose(self, axes or None)

    @property
    def T(self):
        return self.transpose()

    # -- reverse mode -------------------------------------------------------
    def backward(self, grad: np.ndarray | None = None) -> None:
        """Propagate d(self)/d(leaf) into every reachable parameter's ``grad``.

        Gradients accumulate: calling backward twice without zeroing adds.
        """
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.dtype).reshape(self.shape)
        order = topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    if node.grad is None:
                        node.grad = np.array(g, dtype=node.dtype, copy=True)
                    else:
                        node.grad += g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


def topological_order(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root`` that require grad, parents before children."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def tensor(data, requires_grad: bool = False, dtype=None, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype, name=name)


def as_tensor(value, dtype=None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)
