"""Dense float64 tensors with taped reverse-mode differentiation.

Everything is stored row-major in 64-bit floats. Operations executed while a
Tape is active are recorded together with a backward rule; Tape.backward walks
the record once, in reverse, and accumulates d(loss)/d(leaf) into the .grad
buffer of every leaf created with requires_grad=True. Outside a tape the same
operations run as plain numpy arithmetic.
"""
from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, ShapeError, TapeError

_state = threading.local()

_debug_checks = False


def set_debug(enabled: bool) -> None:
    """Toggle after-every-op finiteness checks (slow; meant for tests)."""
    global _debug_checks
    _debug_checks = enabled


def _tape_stack() -> list:
    stack = getattr(_state, "tapes", None)
    if stack is None:
        stack = []
        _state.tapes = stack
    return stack


def _active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class Rng:
    """Seeded, splittable random source.

    Children spawned with split() are statistically independent streams, so a
    single root seed can drive initialization, shuffling and dropout without
    any stream interfering with another. The seed path is kept for audit.
    """

    def __init__(self, seed):
        if isinstance(seed, np.random.SeedSequence):
            self._seq = seed
        else:
            self._seq = np.random.SeedSequence(int(seed))
        self._gen = np.random.default_rng(self._seq)
        self.seed_path = (self._seq.entropy, tuple(self._seq.spawn_key))

    def split(self) -> "Rng":
        return Rng(self._seq.spawn(1)[0])

    def normal(self, shape, scale=1.0) -> np.ndarray:
        return self._gen.normal(0.0, scale, size=shape)

    def uniform(self, shape, low=0.0, high=1.0) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, low, high) -> int:
        return int(self._gen.integers(low, high))


class Tensor:
    """Immutable-by-convention dense array that can sit on a gradient tape.

    Ops never write into an input's buffer. requires_grad marks leaves;
    derived tensors are tracked through the tape they were recorded on.
    """

    __slots__ = ("data", "requires_grad", "grad", "_tape")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor values must be finite (no NaN/Inf)")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._tape = None

    @classmethod
    def _from_op(cls, data: np.ndarray) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data if data.dtype == np.float64 else data.astype(np.float64)
        out.requires_grad = False
        out.grad = None
        out._tape = None
        if _debug_checks and not np.all(np.isfinite(out.data)):
            raise FloatingPointError("non-finite value produced by an op")
        return out

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    # -- operator sugar -----------------------------------------------------
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
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)

    def relu(self):
        return relu(self)

    def log(self):
        return log(self)

    def abs(self):
        return abs_(self)

    def sum(self):
        return sum_(self)

    def mean(self):
        return mean(self)

    def reshape(self, shape):
        return reshape(self, shape)

    def permute(self, axes):
        return permute(self, axes)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


class Tape:
    """Ordered record of executed ops; supports exactly one backward pass.

    Entries are appended in execution order, which is a topological order of
    the value graph, so a single reverse sweep propagates every adjoint.
    """

    def __init__(self):
        self._entries: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise TapeError("tape context exited out of order")
        stack.pop()
        return False

    def __len__(self) -> int:
        return len(self._entries)

    def reset(self) -> None:
        self._entries.clear()
        self._consumed = False

    def backward(self, loss: Tensor) -> None:
        if self._consumed:
            raise TapeError("backward on a consumed tape; call reset() or use a fresh tape")
        if loss.data.size != 1:
            raise TapeError(f"loss must be scalar, got shape {loss.shape}")
        if loss._tape is not self:
            raise TapeError("loss was not recorded on this tape")
        self._consumed = True
        adjoints: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for out, inputs, backward_fn in reversed(self._entries):
            g = adjoints.pop(id(out), None)
            if g is None:
                continue
            for inp, gin in zip(inputs, backward_fn(g)):
                if gin is None:
                    continue
                if inp._tape is self:
                    seen = adjoints.get(id(inp))
                    adjoints[id(inp)] = gin if seen is None else seen + gin
                elif inp.requires_grad and inp._tape is None:
                    if inp.grad is None:
                        inp.grad = np.zeros_like(inp.data)
                    inp.grad += gin


def backward(loss: Tensor) -> None:
    """Run the backward pass of the tape that recorded `loss`."""
    if loss._tape is None:
        raise TapeError("loss is not attached to a tape; run the forward pass inside `with Tape():`")
    loss._tape.backward(loss)


def _record(out_data: np.ndarray, inputs: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    out = Tensor._from_op(out_data)
    tape = _active_tape()
    if tape is not None and not tape._consumed:
        if any(t.requires_grad or t._tape is tape for t in inputs):
            out._tape = tape
            tape._entries.append((out, tuple(inputs), backward_fn))
    return out


def _lift(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=np.float64)
    if arr.size != 1:
        raise ShapeError("only scalars may be mixed with tensors implicitly")
    return Tensor(arr)


def _binary_shapes(a: Tensor, b: Tensor) -> None:
    # Broadcasting is deliberately restricted: equal shapes, or one side scalar.
    if a.shape == b.shape or a.size == 1 or b.size == 1:
        return
    raise ShapeError(f"shapes {a.shape} and {b.shape} neither match nor include a scalar")


def _sum_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    return np.sum(g).reshape(shape)


# -- arithmetic --------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _binary_shapes(a, b)

    def back(g):
        return _sum_to(g, a.shape), _sum_to(g, b.shape)

    return _record(a.data + b.data, (a, b), back)


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _binary_shapes(a, b)

    def back(g):
        return _sum_to(g, a.shape), _sum_to(-g, b.shape)

    return _record(a.data - b.data, (a, b), back)


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _binary_shapes(a, b)

    def back(g):
        return _sum_to(g * b.data, a.shape), _sum_to(g * a.data, b.shape)

    return _record(a.data * b.data, (a, b), back)


def neg(a: Tensor) -> Tensor:
    a = _lift(a)
    return _record(-a.data, (a,), lambda g: (-g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions disagree: {a.shape} @ {b.shape}")

    def back(g):
        return g @ b.data.T, a.data.T @ g

    return _record(a.data @ b.data, (a, b), back)


# -- pointwise nonlinearities -------------------------------------------------

def tanh(a: Tensor) -> Tensor:
    a = _lift(a)
    out = np.tanh(a.data)
    return _record(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    a = _lift(a)
    # 0.5*(1+tanh(x/2)) is the overflow-safe form and is exact at 0.
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _record(out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a: Tensor) -> Tensor:
    a = _lift(a)
    mask = a.data > 0

    def back(g):
        return (g * mask,)

    return _record(np.where(mask, a.data, 0.0), (a,), back)


def log(a: Tensor) -> Tensor:
    a = _lift(a)
    if np.any(a.data <= 0):
        raise DomainError("log of a nonpositive value")

    def back(g):
        return (g / a.data,)

    return _record(np.log(a.data), (a,), back)


def abs_(a: Tensor) -> Tensor:
    a = _lift(a)
    sign = np.sign(a.data)
    return _record(np.abs(a.data), (a,), lambda g: (g * sign,))


def dropout(x: Tensor, p: float, *, training: bool, rng: Rng | None = None) -> Tensor:
    """Zero each element with probability p and rescale survivors by 1/(1-p).

    Eval mode (training=False) is the identity map, exactly. Train mode needs
    an Rng; the mask is drawn from it and baked into the backward rule.
    """
    if not 0.0 <= p < 1.0:
        raise DomainError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout requires an rng")
    mask = (rng.uniform(x.shape) >= p) / (1.0 - p)
    return _record(x.data * mask, (x,), lambda g: (g * mask,))


# -- reductions and structure -------------------------------------------------

def sum_(a: Tensor) -> Tensor:
    a = _lift(a)

    def back(g):
        return (np.full(a.shape, float(g)),)

    return _record(np.asarray(np.sum(a.data)), (a,), back)


def mean(a: Tensor) -> Tensor:
    a = _lift(a)
    n = a.size

    def back(g):
        return (np.full(a.shape, float(g) / n),)

    return _record(np.asarray(np.mean(a.data)), (a,), back)


def reshape(a: Tensor, shape) -> Tensor:
    a = _lift(a)
    shape = tuple(shape)

    def back(g):
        return (g.reshape(a.shape),)

    return _record(a.data.reshape(shape).copy(), (a,), back)


def permute(a: Tensor, axes) -> Tensor:
    a = _lift(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def back(g):
        return (np.transpose(g, inverse),)

    return _record(np.ascontiguousarray(np.transpose(a.data, axes)), (a,), back)


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {a.shape}")
    return permute(a, (1, 0))


def time_index(a: Tensor, t: int) -> Tensor:
    """Select step t of the trailing time axis, dropping that axis."""
    a = _lift(a)
    T = a.shape[-1]
    if not -T <= t < T:
        raise ShapeError(f"time index {t} out of range for length {T}")
    t = t % T

    def back(g):
        full = np.zeros(a.shape)
        full[..., t] = g
        return (full,)

    return _record(np.ascontiguousarray(a.data[..., t]), (a,), back)


def last_step(a: Tensor) -> Tensor:
    return time_index(a, -1)


def stack_last(tensors: Sequence[Tensor]) -> Tensor:
    """Stack same-shaped tensors along a new trailing axis."""
    tensors = [_lift(t) for t in tensors]
    if not tensors:
        raise ShapeError("nothing to stack")
    shape = tensors[0].shape
    if any(t.shape != shape for t in tensors):
        raise ShapeError("stack_last needs equal shapes")

    def back(g):
        return tuple(g[..., i] for i in range(len(tensors)))

    return _record(np.stack([t.data for t in tensors], axis=-1), tuple(tensors), back)


def add_bias(x: Tensor, b: Tensor, axis: int) -> Tensor:
    """Add a 1-D bias along one axis of x."""
    x, b = _lift(x), _lift(b)
    if b.ndim != 1:
        raise ShapeError(f"bias must be 1-D, got shape {b.shape}")
    axis = axis % x.ndim
    if x.shape[axis] != b.shape[0]:
        raise ShapeError(f"bias length {b.shape[0]} does not match axis {axis} of {x.shape}")
    view = [1] * x.ndim
    view[axis] = b.shape[0]
    other_axes = tuple(i for i in range(x.ndim) if i != axis)

    def back(g):
        return g, g.sum(axis=other_axes)

    return _record(x.data + b.data.reshape(view), (x, b), back)


def row_normalize(a: Tensor) -> Tensor:
    """Divide each row of a matrix by its row sum (sums must be positive)."""
    a = _lift(a)
    if a.ndim != 2:
        raise ShapeError(f"row_normalize expects a matrix, got shape {a.shape}")
    s = a.data.sum(axis=1, keepdims=True)
    if np.any(s <= 0):
        raise DomainError("row_normalize requires positive row sums")
    out = a.data / s

    def back(g):
        return (g / s - (g * a.data).sum(axis=1, keepdims=True) / (s * s),)

    return _record(out, (a,), back)


# -- convolution and graph mixing ----------------------------------------------

def _conv_core(x: Tensor, w: Tensor, dilation: int) -> Tensor:
    B, C_in, N, T = x.shape
    C_out, kC_in, K = w.shape
    if kC_in != C_in:
        raise ShapeError(f"kernel expects {kC_in} input channels, data has {C_in}")
    pad = (K - 1) * dilation
    xp = np.pad(x.data, ((0, 0), (0, 0), (0, 0), (pad, 0)))
    out = np.zeros((B, C_out, N, T))
    offs = [(K - 1 - j) * dilation for j in range(K)]
    for j, off in enumerate(offs):
        out += np.einsum("oi,bint->bont", w.data[:, :, j], xp[:, :, :, off:off + T])

    def back(g):
        dw = np.empty_like(w.data)
        dxp = np.zeros_like(xp)
        for j, off in enumerate(offs):
            seg = xp[:, :, :, off:off + T]
            dw[:, :, j] = np.einsum("bont,bint->oi", g, seg)
            dxp[:, :, :, off:off + T] += np.einsum("oi,bont->bint", w.data[:, :, j], g)
        return dxp[:, :, :, pad:], dw

    return _record(out, (x, w), back)


def causal_conv1d(x: Tensor, kernel: Tensor, dilation: int = 1) -> Tensor:
    """Dilated causal 1-D convolution along the trailing time axis.

    Tap j of the kernel reads x at t - j*dilation; the input is left-padded
    with (K-1)*dilation zeros so the output keeps the input length and never
    sees a future sample. Accepts [C_in, T] or [B, C_in, N, T].
    """
    x, kernel = _lift(x), _lift(kernel)
    if dilation < 1:
        raise DomainError(f"dilation must be >= 1, got {dilation}")
    if kernel.ndim != 3 or kernel.shape[2] < 1:
        raise ShapeError(f"kernel must be [C_out, C_in, K] with K >= 1, got {kernel.shape}")
    if x.size == 0:
        raise ShapeError("empty input")
    if x.ndim == 2:
        C_in, T = x.shape
        wide = reshape(x, (1, C_in, 1, T))
        out = _conv_core(wide, kernel, dilation)
        return reshape(out, (kernel.shape[0], T))
    if x.ndim == 4:
        return _conv_core(x, kernel, dilation)
    raise ShapeError(f"causal_conv1d expects [C,T] or [B,C,N,T], got shape {x.shape}")


def channel_linear(x: Tensor, w: Tensor) -> Tensor:
    """Mix the channel axis (axis 1) of [B,C,...] features with a [C,D] matrix."""
    x, w = _lift(x), _lift(w)
    if w.ndim != 2:
        raise ShapeError(f"weight must be [C, D], got {w.shape}")
    if x.ndim not in (3, 4) or x.shape[1] != w.shape[0]:
        raise ShapeError(f"cannot mix channels of {x.shape} with weight {w.shape}")
    if x.ndim == 4:
        spec, gspec_x, gspec_w = "bcnt,cd->bdnt", "cd,bdnt->bcnt", "bcnt,bdnt->cd"
    else:
        spec, gspec_x, gspec_w = "bcn,cd->bdn", "cd,bdn->bcn", "bcn,bdn->cd"

    def back(g):
        return np.einsum(gspec_x, w.data, g), np.einsum(gspec_w, x.data, g)

    return _record(np.einsum(spec, x.data, w.data), (x, w), back)


def graph_mix(a: Tensor, x: Tensor) -> Tensor:
    """Aggregate node features along edges: out[v] = sum_w a[v,w] * x[w].

    a is [N, N]; x is [B, C, N, T]. Differentiable in both arguments so the
    learned adjacency receives gradient through every propagation step.
    """
    a, x = _lift(a), _lift(x)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"adjacency must be square, got {a.shape}")
    if x.ndim != 4 or x.shape[2] != a.shape[0]:
        raise ShapeError(f"node axis of {x.shape} does not match adjacency {a.shape}")

    def back(g):
        da = np.einsum("bcvt,bcwt->vw", g, x.data)
        dx = np.einsum("vw,bcvt->bcwt", a.data, g)
        return da, dx

    return _record(np.einsum("vw,bcwt->bcvt", a.data, x.data), (a, x), back)


# -- verification ---------------------------------------------------------------

def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5) -> float:
    """Compare reverse-mode gradients of f at x against central differences.

    f must map a tensor to a scalar tensor and be deterministic. Returns the
    max over coordinates of |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
    """
    if eps <= 0:
        raise DomainError("eps must be positive")
    leaf = Tensor(x.data.copy(), requires_grad=True)
    tape = Tape()
    with tape:
        out = f(leaf)
    if out.data.size != 1:
        raise TapeError("grad_check needs a scalar-valued function")
    tape.backward(out)
    g_ad = np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad

    g_fd = np.zeros_like(leaf.data)
    flat = leaf.data.reshape(-1)
    fd_flat = g_fd.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(Tensor(leaf.data)).item()
        flat[i] = orig - eps
        lo = f(Tensor(leaf.data)).item()
        flat[i] = orig
        fd_flat[i] = (hi - lo) / (2.0 * eps)

    denom = np.maximum(1.0, np.maximum(np.abs(g_ad), np.abs(g_fd)))
    return float(np.max(np.abs(g_ad - g_fd) / denom))


def grad_check_params(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5) -> float:
    """grad_check over a set of parameter leaves instead of a single input.

    loss_fn closes over the params, which are perturbed in place for the
    finite-difference probes. Returns the worst relative error across every
    coordinate of every parameter.
    """
    if eps <= 0:
        raise DomainError("eps must be positive")
    for p in params:
        p.zero_grad()
    tape = Tape()
    with tape:
        out = loss_fn()
    if out.data.size != 1:
        raise TapeError("grad_check_params needs a scalar-valued loss")
    tape.backward(out)

    worst = 0.0
    for p in params:
        g_ad = np.zeros_like(p.data) if p.grad is None else p.grad
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = loss_fn().item()
            flat[i] = orig - eps
            lo = loss_fn().item()
            flat[i] = orig
            fd = (hi - lo) / (2.0 * eps)
            ad = g_ad.reshape(-1)[i]
            err = abs(ad - fd) / max(1.0, abs(ad), abs(fd))
            worst = max(worst, err)
    return worst
