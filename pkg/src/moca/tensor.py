"""Dense float64 tensors with tape-based reverse-mode differentiation.

The engine is deliberately small: the primitive set below is exactly what
MLP autoencoders and the latent-matching losses in this package need. A
`Tape` records the forward trace while active (thread-local, so distinct
tapes may run on distinct threads); `backward` replays it once in reverse
creation order, which is a valid reverse topological order because tensors
are immutable once created.

Gradients only flow where `requires_grad` is set, so computations through
frozen parameters (e.g. a momentum-updated key encoder) are never recorded
and are severed from the graph for free.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DegenerateInputError, ShapeError

NORM_EPS = 1e-12

_tls = threading.local()


def _tape_stack() -> list:
    stack = getattr(_tls, "stack", None)
    if stack is None:
        stack = []
        _tls.stack = stack
    return stack


def _active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """Immutable dense array of float64 plus autodiff metadata."""

    __slots__ = ("data", "requires_grad", "_tape", "_node")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self._tape = None
        self._node = -1

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; scalars are accepted on either side
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
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Recorded forward trace: nodes in creation (= topological) order.

    Entering the tape as a context manager makes it the recording target for
    the current thread. Leaves with requires_grad are registered the first
    time an operation consumes them; `watch` registers one explicitly so it
    receives a (possibly zero) gradient even if never used.
    """

    def __init__(self):
        self._nodes: list[tuple[tuple[int, ...], Callable | None]] = []
        self._leaves: dict[int, Tensor] = {}  # node id -> leaf tensor

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack().pop()
        assert popped is self
        return False

    def __len__(self):
        return len(self._nodes)

    def watch(self, tensor: Tensor) -> None:
        if not tensor.requires_grad:
            raise ContractError("watch() requires a tensor with requires_grad=True")
        self._ensure_node(tensor)

    def _ensure_node(self, tensor: Tensor) -> int:
        if tensor._tape is self:
            return tensor._node
        # A tensor from another (dead) tape or a fresh leaf: register as leaf here.
        idx = len(self._nodes)
        self._nodes.append(((), None))
        tensor._tape = self
        tensor._node = idx
        self._leaves[idx] = tensor
        return idx

    def _record(self, out: Tensor, parents: Sequence[Tensor], vjp: Callable) -> None:
        parent_ids = tuple(
            self._ensure_node(p) if p.requires_grad else -1 for p in parents
        )
        idx = len(self._nodes)
        self._nodes.append((parent_ids, vjp))
        out._tape = self
        out._node = idx

    def gradient(self, loss: Tensor) -> dict:
        return backward(loss, self)


def _maybe_record(out: Tensor, parents: Sequence[Tensor], vjp: Callable) -> Tensor:
    tape = _active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape._record(out, parents, vjp)
    return out


def backward(loss: Tensor, tape: Tape) -> dict:
    """Gradients of a scalar loss w.r.t. every leaf registered on the tape.

    Returns a dict keyed by leaf Tensor; leaves not on the path to the loss
    map to zero arrays. Each recorded node is visited exactly once, in
    reverse topological order.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._tape is not tape or loss._node < 0:
        raise ContractError("loss is not reachable from this tape's nodes")
    grads: dict[int, np.ndarray] = {loss._node: np.ones_like(loss.data)}
    for idx in range(loss._node, -1, -1):
        g = grads.pop(idx, None)
        if g is None:
            continue
        parent_ids, vjp = tape._nodes[idx]
        if vjp is None:
            if idx in tape._leaves:
                grads[idx] = g  # keep leaf gradients
            continue
        for pid, pg in zip(parent_ids, vjp(g)):
            if pid < 0 or pg is None:
                continue
            acc = grads.get(pid)
            grads[pid] = pg if acc is None else acc + pg
    return {
        leaf: grads.get(idx, np.zeros_like(leaf.data))
        for idx, leaf in tape._leaves.items()
    }


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- elementwise ----------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data + b.data)
    need_a, need_b = a.requires_grad, b.requires_grad

    def vjp(g):
        return (
            _unbroadcast(g, a.shape) if need_a else None,
            _unbroadcast(g, b.shape) if need_b else None,
        )

    return _maybe_record(out, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data - b.data)
    need_a, need_b = a.requires_grad, b.requires_grad

    def vjp(g):
        return (
            _unbroadcast(g, a.shape) if need_a else None,
            _unbroadcast(-g, b.shape) if need_b else None,
        )

    return _maybe_record(out, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    ad, bd = a.data, b.data
    out = Tensor(ad * bd)
    need_a, need_b = a.requires_grad, b.requires_grad

    def vjp(g):
        return (
            _unbroadcast(g * bd, a.shape) if need_a else None,
            _unbroadcast(g * ad, b.shape) if need_b else None,
        )

    return _maybe_record(out, (a, b), vjp)


def square(a: Tensor) -> Tensor:
    ad = a.data
    out = Tensor(ad * ad)
    return _maybe_record(out, (a,), lambda g: (2.0 * ad * g,))


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    out = Tensor(y)
    return _maybe_record(out, (a,), lambda g: (g * y,))


def reciprocal(a: Tensor) -> Tensor:
    y = 1.0 / a.data
    out = Tensor(y)
    return _maybe_record(out, (a,), lambda g: (-g * y * y,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0.0
    out = Tensor(np.where(mask, a.data, 0.0))
    return _maybe_record(out, (a,), lambda g: (g * mask,))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = Tensor(y)
    return _maybe_record(out, (a,), lambda g: (g * (1.0 - y * y),))


# -- linear algebra --------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul needs 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    ad, bd = a.data, b.data
    out = Tensor(ad @ bd)
    need_a, need_b = a.requires_grad, b.requires_grad

    def vjp(g):
        return (g @ bd.T if need_a else None, ad.T @ g if need_b else None)

    return _maybe_record(out, (a, b), vjp)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose needs a 2-d tensor, got {a.shape}")
    out = Tensor(a.data.T.copy())
    return _maybe_record(out, (a,), lambda g: (g.T,))


# -- reductions ------------------------------------------------------------

def tsum(a: Tensor) -> Tensor:
    out = Tensor(a.data.sum())
    return _maybe_record(out, (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def mean(a: Tensor) -> Tensor:
    n = a.data.size
    out = Tensor(a.data.mean())
    return _maybe_record(out, (a,), lambda g: (np.broadcast_to(g / n, a.shape).copy(),))


def sum_rows(a: Tensor) -> Tensor:
    """Row sums of a 2-d tensor, kept as a column (m, 1)."""
    if a.data.ndim != 2:
        raise ShapeError(f"sum_rows needs a 2-d tensor, got {a.shape}")
    out = Tensor(a.data.sum(axis=1, keepdims=True))
    return _maybe_record(out, (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def logsumexp_rows(a: Tensor) -> Tensor:
    """log sum exp over each row, max-shifted; exact for single-column input."""
    if a.data.ndim != 2:
        raise ShapeError(f"logsumexp_rows needs a 2-d tensor, got {a.shape}")
    m = a.data.max(axis=1, keepdims=True)
    shifted = a.data - m
    np.exp(shifted, out=shifted)
    total = shifted.sum(axis=1, keepdims=True)
    out = Tensor(m + np.log(total))
    shifted /= total  # in place: `shifted` becomes the row softmax

    def vjp(g):
        return (g * shifted,)

    return _maybe_record(out, (a,), vjp)


def logaddexp(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise log(exp(a) + exp(b)), overflow-safe."""
    out_data = np.logaddexp(a.data, b.data)
    out = Tensor(out_data)
    need_a, need_b = a.requires_grad, b.requires_grad

    def vjp(g):
        return (
            _unbroadcast(g * np.exp(a.data - out_data), a.shape) if need_a else None,
            _unbroadcast(g * np.exp(b.data - out_data), b.shape) if need_b else None,
        )

    return _maybe_record(out, (a, b), vjp)


# -- structure -------------------------------------------------------------

def concat_cols(parts: Iterable[Tensor]) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ContractError("concat_cols needs at least one part")
    for p in parts:
        if p.data.ndim != 2 or p.shape[0] != parts[0].shape[0]:
            raise ShapeError("concat_cols needs 2-d parts with equal row counts")
    widths = [p.shape[1] for p in parts]
    out = Tensor(np.concatenate([p.data for p in parts], axis=1))

    def vjp(g):
        grads, at = [], 0
        for w in widths:
            grads.append(g[:, at:at + w])
            at += w
        return tuple(grads)

    return _maybe_record(out, tuple(parts), vjp)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"slice_cols needs a 2-d tensor, got {a.shape}")
    if not (0 <= start < stop <= a.shape[1]):
        raise ShapeError(f"slice_cols [{start}:{stop}] out of range for {a.shape}")
    out = Tensor(a.data[:, start:stop].copy())

    def vjp(g):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        return (full,)

    return _maybe_record(out, (a,), vjp)


def sort_columns(a: Tensor) -> Tensor:
    """Sort each column ascending; backward routes gradients through the
    permutation chosen on the forward values (the 1-d matching)."""
    if a.data.ndim != 2:
        raise ShapeError(f"sort_columns needs a 2-d tensor, got {a.shape}")
    order = np.argsort(a.data, axis=0, kind="stable")
    out = Tensor(np.take_along_axis(a.data, order, axis=0))

    def vjp(g):
        back = np.empty_like(g)
        np.put_along_axis(back, order, g, axis=0)
        return (back,)

    return _maybe_record(out, (a,), vjp)


def l2_normalize(a: Tensor, eps: float = NORM_EPS) -> Tensor:
    """Normalize each row to unit Euclidean norm.

    The gradient is the projection onto the tangent space of the sphere,
    scaled by the inverse input norm.
    """
    if a.data.ndim != 2:
        raise ShapeError(f"l2_normalize needs a 2-d tensor, got {a.shape}")
    norms = np.sqrt((a.data * a.data).sum(axis=1, keepdims=True))
    if np.any(norms <= eps):
        bad = int(np.argmax(norms <= eps))
        raise DegenerateInputError(
            f"row {bad} has norm {norms[bad, 0]:.3e} <= {eps:.0e}; cannot normalize"
        )
    y = a.data / norms
    out = Tensor(y)

    def vjp(g):
        return ((g - y * (g * y).sum(axis=1, keepdims=True)) / norms,)

    return _maybe_record(out, (a,), vjp)


# -- verification ----------------------------------------------------------

def grad_check(f: Callable[[Tensor], Tensor], point, h: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    The error at each coordinate is |analytic - numeric| / max(1, |numeric|),
    with the numeric side a symmetric difference of step `h`.
    """
    base = np.array(point.data if isinstance(point, Tensor) else point, dtype=np.float64)
    with Tape() as tape:
        p = Tensor(base.copy(), requires_grad=True)
        tape.watch(p)
        out = f(p)
    analytic = backward(out, tape)[p]

    worst = 0.0
    flat = base.reshape(-1)
    for i in range(flat.size):
        plus = flat.copy()
        plus[i] += h
        minus = flat.copy()
        minus[i] -= h
        f_plus = f(Tensor(plus.reshape(base.shape))).item()
        f_minus = f(Tensor(minus.reshape(base.shape))).item()
        numeric = (f_plus - f_minus) / (2.0 * h)
        err = abs(analytic.reshape(-1)[i] - numeric) / max(1.0, abs(numeric))
        worst = max(worst, err)
    return worst
