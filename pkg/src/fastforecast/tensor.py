"""Dense float64 arrays with a reverse-mode gradient tape.

Every differentiable operation in the package is built from the primitives
in this module.  A primitive computes its forward value with numpy and, when
a :class:`GradTape` is active and an input requires gradients, records a
closure that maps the output gradient to per-input gradients.  Replaying the
tape in reverse (``tape.backward``) fills ``Tensor.grad`` for every leaf.

Design constraints honoured here:
  * float64 everywhere,
  * non-finite values raise :class:`FiniteError` immediately,
  * broadcasting in ``add``/``sub``/``mul`` is limited to scalar-with-tensor
    and identical shapes; row/column-vector broadcasts are separate named
    primitives (``add_rowwise`` etc.) with their own gradient rules.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from .errors import FiniteError, ShapeError

# exp() of anything above this overflows float64 (~709.78); clamp with margin
EXP_CLAMP = 700.0

_state = threading.local()


def _active_tape() -> "GradTape | None":
    return getattr(_state, "tape", None)


def _observer() -> "list | None":
    return getattr(_state, "alloc_log", None)


class AllocationLog:
    """Records the shape and byte size of every tensor an op creates.

    Used by the complexity probe to verify, structurally, that a kernel
    never materialises a sequence-length-squared buffer.
    """

    def __init__(self):
        self.shapes: list[tuple[int, ...]] = []
        self.total_bytes: int = 0

    def __enter__(self):
        if _observer() is not None:
            raise RuntimeError("allocation log already active on this thread")
        _state.alloc_log = self
        return self

    def __exit__(self, *exc):
        _state.alloc_log = None
        return False

    def _note(self, arr: np.ndarray) -> None:
        self.shapes.append(arr.shape)
        self.total_bytes += arr.nbytes


class Tensor:
    """A dense float64 array, optionally tracked for gradients.

    ``data`` is a C-contiguous ndarray; ``grad`` is filled by
    ``GradTape.backward`` and has the same shape as ``data``.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        if not np.all(np.isfinite(arr)):
            raise FiniteError("tensor initialised with NaN/Inf")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        if requires_grad:
            tape = _active_tape()
            if tape is not None:
                tape.watch(self)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; scalars are treated as constants
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class _Node:
    __slots__ = ("inputs", "out", "backward")

    def __init__(self, inputs, out, backward):
        self.inputs = inputs
        self.out = out
        self.backward = backward


class GradTape:
    """Ordered record of primitive ops, replayed in reverse for gradients.

    Use as a context manager; ops executed inside the context are recorded
    in execution order (a valid topological order).  The tape is append-only
    during the forward pass and cleared only via :meth:`reset`.
    """

    def __init__(self):
        self._nodes: list[_Node] = []
        self._watched: list[Tensor] = []

    def __enter__(self):
        if _active_tape() is not None:
            raise RuntimeError("gradient tapes do not nest")
        _state.tape = self
        return self

    def __exit__(self, *exc):
        _state.tape = None
        return False

    def watch(self, t: Tensor) -> None:
        """Register a leaf so it receives a (possibly zero) gradient."""
        self._watched.append(t)

    def reset(self) -> None:
        self._nodes.clear()
        self._watched.clear()

    def __len__(self) -> int:
        return len(self._nodes)

    def backward(self, loss: Tensor) -> None:
        """Fill ``grad`` for every requires_grad leaf reachable from ``loss``.

        Watched leaves that do not influence the loss get zero gradients.
        """
        if loss.data.shape != ():
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
        grads: dict[Tensor, np.ndarray] = {loss: np.ones((), dtype=np.float64)}
        for node in reversed(self._nodes):
            g = grads.pop(node.out, None)
            if g is None:
                continue
            for t, ig in zip(node.inputs, node.backward(g)):
                if ig is None or not t.requires_grad:
                    continue
                acc = grads.get(t)
                grads[t] = ig if acc is None else acc + ig
        for t, g in grads.items():
            if t.requires_grad:
                g = np.asarray(g, dtype=np.float64)
                t.grad = np.ascontiguousarray(g) if g.ndim else g
        for t in self._watched:
            if t not in grads:
                t.grad = np.zeros_like(t.data)


def track_allocations() -> AllocationLog:
    """Context manager recording every intermediate tensor's shape/bytes."""
    return AllocationLog()


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(inputs: Sequence[Tensor], out_data: np.ndarray,
          backward: Callable[[np.ndarray], tuple], check: bool = True) -> Tensor:
    """Wrap an op result, record it on the active tape, log allocations."""
    if check and not np.all(np.isfinite(out_data)):
        raise FiniteError("operation produced NaN/Inf")
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.grad = None
    out.requires_grad = any(t.requires_grad for t in inputs)
    log = _observer()
    if log is not None:
        log._note(out_data)
    if out.requires_grad:
        tape = _active_tape()
        if tape is not None:
            tape._nodes.append(_Node(tuple(inputs), out, backward))
    return out


def _require_2d(name: str, *ts: Tensor) -> None:
    for t in ts:
        if t.data.ndim != 2:
            raise ShapeError(f"{name} expects rank-2 tensors, got shape {t.shape}")


def _require_same_shape(name: str, a: Tensor, b: Tensor) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{name}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# binary elementwise (scalar-with-tensor or same-shape only)
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    if isinstance(b, (int, float)) and isinstance(a, Tensor):
        c = float(b)
        return _make((a,), a.data + c, lambda g: (g,))
    if isinstance(a, (int, float)) and isinstance(b, Tensor):
        return add(b, a)
    a, b = _as_tensor(a), _as_tensor(b)
    _require_same_shape("add", a, b)
    return _make((a, b), a.data + b.data, lambda g: (g, g))


def sub(a, b) -> Tensor:
    if isinstance(b, (int, float)) and isinstance(a, Tensor):
        c = float(b)
        return _make((a,), a.data - c, lambda g: (g,))
    if isinstance(a, (int, float)) and isinstance(b, Tensor):
        c = float(a)
        return _make((b,), c - b.data, lambda g: (-g,))
    a, b = _as_tensor(a), _as_tensor(b)
    _require_same_shape("sub", a, b)
    return _make((a, b), a.data - b.data, lambda g: (g, -g))


def mul(a, b) -> Tensor:
    if isinstance(b, (int, float)) and isinstance(a, Tensor):
        return scale(a, float(b))
    if isinstance(a, (int, float)) and isinstance(b, Tensor):
        return scale(b, float(a))
    a, b = _as_tensor(a), _as_tensor(b)
    _require_same_shape("mul", a, b)
    ad, bd = a.data, b.data
    return _make((a, b), ad * bd, lambda g: (g * bd, g * ad))


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make((x,), x.data * c, lambda g: (g * c,))


# ---------------------------------------------------------------------------
# unary elementwise
# ---------------------------------------------------------------------------

def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = _stable_sigmoid(x.data)
    return _make((x,), s, lambda g: (g * s * (1.0 - s),))


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    return _make((x,), t, lambda g: (g * (1.0 - t * t),))


def exp(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        e = np.exp(x.data)
    return _make((x,), e, lambda g: (g * e,))


def exp_clamped(x: Tensor, limit: float = EXP_CLAMP) -> Tensor:
    """exp with the argument clamped from above; gradient is zero past the clamp."""
    mask = x.data < limit
    e = np.exp(np.minimum(x.data, limit))
    return _make((x,), e, lambda g: (g * e * mask,))


def log1p(x: Tensor) -> Tensor:
    v = np.log1p(x.data)
    xd = x.data
    return _make((x,), v, lambda g: (g / (1.0 + xd),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _make((x,), np.maximum(x.data, 0.0), lambda g: (g * mask,))


def sqrt(x: Tensor) -> Tensor:
    r = np.sqrt(x.data)
    return _make((x,), r, lambda g: (g * (0.5 / r),))


def recip(x: Tensor) -> Tensor:
    r = 1.0 / x.data
    return _make((x,), r, lambda g: (-g * r * r,))


def clip_min(x: Tensor, floor: float) -> Tensor:
    """max(x, floor) elementwise; gradient passes only where x > floor."""
    mask = x.data > floor
    return _make((x,), np.maximum(x.data, floor), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# matrix ops and reductions
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _require_2d("matmul", a, b)
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: inner extents {a.shape} x {b.shape} disagree")
    ad, bd = a.data, b.data

    def backward(g):
        return (g @ bd.T if a.requires_grad else None,
                ad.T @ g if b.requires_grad else None)

    return _make((a, b), ad @ bd, backward)


def transpose(x: Tensor) -> Tensor:
    _require_2d("transpose", x)
    return _make((x,), x.data.T, lambda g: (g.T,), check=False)


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax with per-row max subtraction for stability."""
    _require_2d("softmax_rows", x)
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - dot),)

    return _make((x,), out, backward)


def tsum(x: Tensor) -> Tensor:
    """Full reduction to a scalar (shape ())."""
    shape = x.data.shape
    return _make((x,), np.asarray(x.data.sum()),
                 lambda g: (np.full(shape, float(g)),))


def rowsum(x: Tensor) -> Tensor:
    """(m, n) -> (m, 1)."""
    _require_2d("rowsum", x)
    shape = x.data.shape
    return _make((x,), x.data.sum(axis=1, keepdims=True),
                 lambda g: (np.broadcast_to(g, shape),))


def colsum(x: Tensor) -> Tensor:
    """(m, n) -> (1, n)."""
    _require_2d("colsum", x)
    shape = x.data.shape
    return _make((x,), x.data.sum(axis=0, keepdims=True),
                 lambda g: (np.broadcast_to(g, shape),))


# ---------------------------------------------------------------------------
# row/column-vector broadcasts (named, with explicit gradient rules)
# ---------------------------------------------------------------------------

def _require_vec(name: str, x: Tensor, v: Tensor, axis: int) -> None:
    _require_2d(name, x, v)
    want = (x.data.shape[0], 1) if axis == 0 else (1, x.data.shape[1])
    if v.data.shape != want:
        raise ShapeError(f"{name}: vector shape {v.shape} does not match {want}")


def add_rowwise(x: Tensor, v: Tensor) -> Tensor:
    """Add v[i] (shape (m,1)) to every element of row i of x."""
    _require_vec("add_rowwise", x, v, axis=0)
    return _make((x, v), x.data + v.data,
                 lambda g: (g, g.sum(axis=1, keepdims=True)))


def scale_rowwise(x: Tensor, s: Tensor) -> Tensor:
    """Multiply row i of x by s[i] (shape (m,1))."""
    _require_vec("scale_rowwise", x, s, axis=0)
    xd, sd = x.data, s.data
    return _make((x, s), xd * sd,
                 lambda g: (g * sd, (g * xd).sum(axis=1, keepdims=True)))


def add_colwise(x: Tensor, v: Tensor) -> Tensor:
    """Add v[j] (shape (1,n)) to every element of column j of x."""
    _require_vec("add_colwise", x, v, axis=1)
    return _make((x, v), x.data + v.data,
                 lambda g: (g, g.sum(axis=0, keepdims=True)))


def scale_colwise(x: Tensor, v: Tensor) -> Tensor:
    """Multiply column j of x by v[j] (shape (1,n))."""
    _require_vec("scale_colwise", x, v, axis=1)
    xd, vd = x.data, v.data
    return _make((x, v), xd * vd,
                 lambda g: (g * vd, (g * xd).sum(axis=0, keepdims=True)))


# ---------------------------------------------------------------------------
# shape movement
# ---------------------------------------------------------------------------

def concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    if axis not in (0, 1):
        raise ShapeError("concat supports axis 0 or 1")
    parts = tuple(parts)
    _require_2d("concat", *parts)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        if axis == 0:
            return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(parts)))
        return tuple(g[:, offsets[i]:offsets[i + 1]] for i in range(len(parts)))

    return _make(parts, np.concatenate([p.data for p in parts], axis=axis),
                 backward, check=False)


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    _require_2d("slice_rows", x)
    shape = x.data.shape

    def backward(g):
        z = np.zeros(shape)
        z[start:stop] = g
        return (z,)

    return _make((x,), x.data[start:stop], backward, check=False)


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    _require_2d("slice_cols", x)
    shape = x.data.shape

    def backward(g):
        z = np.zeros(shape)
        z[:, start:stop] = g
        return (z,)

    return _make((x,), x.data[:, start:stop], backward, check=False)


def take_rows(x: Tensor, idx) -> Tensor:
    """Gather rows by index; gradient scatter-adds (handles repeats)."""
    _require_2d("take_rows", x)
    idx = np.asarray(idx, dtype=np.intp)
    shape = x.data.shape

    def backward(g):
        z = np.zeros(shape)
        np.add.at(z, idx, g)
        return (z,)

    return _make((x,), x.data[idx], backward, check=False)
