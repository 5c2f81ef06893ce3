"""Dense tensors, differentiable ops and a reverse-mode tape.

Operations executed while a :class:`Tape` is active (``with Tape() as tape``)
are appended to it in execution order; :meth:`Tape.backward` walks that list
once, in reverse.  Outside a tape the same functions just compute values, which
is how evaluation runs.

Reduction order: every sum goes through numpy's pairwise summation along a
fixed axis of a C-contiguous array, and every matrix product goes through
BLAS with the thread count pinned by the caller.  For a given shape, dtype and
thread count the results are therefore reproducible bit for bit.
"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels

FLOAT_DTYPES = (np.float32, np.float64)


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    """A forward op produced NaN or Inf from finite inputs."""


class Tensor:
    """An immutable N-d float array, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "name", "__weakref__")

    def __init__(self, data, dtype=None, requires_grad: bool = False, name: str | None = None, copy: bool = True):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.type not in FLOAT_DTYPES:
            arr = arr.astype(np.float64 if dtype is None else dtype)
        if copy and arr is data:
            arr = arr.copy()
        self.data = arr if arr.flags.c_contiguous else arr.copy(order="C")  # keeps 0-d arrays 0-d
        self.data.flags.writeable = False
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"


class Parameter(Tensor):
    """A trainable tensor with its own gradient buffer.

    Unlike plain tensors the value is updated in place by optimizers, so the
    read-only flag is lifted.
    """

    __slots__ = ("grad", "trainable")

    def __init__(self, data, dtype=None, name: str | None = None, trainable: bool = True):
        super().__init__(data, dtype=dtype, requires_grad=trainable, name=name)
        self.data = np.array(self.data)
        self.trainable = trainable
        self.grad = np.zeros_like(self.data)

    def assign(self, value) -> None:
        value = np.asarray(value, dtype=self.dtype)
        if value.shape != self.shape:
            raise ShapeError(f"cannot assign {value.shape} into parameter of shape {self.shape}")
        self.data[...] = value

    def zero_grad(self) -> None:
        self.grad[...] = 0


@dataclass
class OpRecord:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


_state = threading.local()


def _tape_stack() -> list:
    if not hasattr(_state, "tapes"):
        _state.tapes = []
    return _state.tapes


def active_tape() -> Optional["Tape"]:
    stack = _tape_stack()
    return stack[-1] if stack else None


@dataclass
class Tape:
    """Ordered record of the ops of one forward pass.

    A tape is single-use: after :meth:`backward` it refuses a second pass.
    """

    records: list[OpRecord] = field(default_factory=list)
    parameters: dict[int, Parameter] = field(default_factory=dict)
    _grads: dict[int, np.ndarray] = field(default_factory=dict)
    _done: bool = False

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _tape_stack().pop()

    def record(self, rec: OpRecord) -> None:
        for t in rec.inputs:
            if isinstance(t, Parameter) and t.trainable:
                self.parameters.setdefault(id(t), t)
        self.records.append(rec)

    def backward(self, loss: Tensor) -> dict[str, np.ndarray]:
        """Propagate d(loss)/d(.) through the tape.

        Gradients are added into ``Parameter.grad`` of every trainable
        parameter seen on the tape.  A parameter the loss does not depend on
        simply receives zeros.  Returns ``{param name: gradient}``.
        """
        if self._done:
            raise RuntimeError("tape already consumed by a backward pass")
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        self._done = True
        grads = self._grads
        grads[id(loss)] = np.ones_like(loss.data)
        for rec in reversed(self.records):
            g = grads.pop(id(rec.output), None)
            if g is None:
                continue
            in_grads = rec.backward(g)
            for t, gi in zip(rec.inputs, in_grads):
                if gi is None or not t.requires_grad:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
        out = {}
        for key, p in self.parameters.items():
            g = grads.get(key)
            if g is not None:
                p.grad += g
            out[p.name or str(key)] = p.grad
        return out

    def grad(self, t: Tensor) -> Optional[np.ndarray]:
        """Gradient of a non-parameter input tensor after :meth:`backward`."""
        return self._grads.get(id(t))


# Branch logging lets gradient checks detect when a finite-difference stencil
# straddles a kink (leaky ReLU sign flip, max-pool argmax change).
_branch_log: Optional[list] = None


@contextmanager
def branch_trace():
    global _branch_log
    prev, _branch_log = _branch_log, []
    try:
        yield _branch_log
    finally:
        _branch_log = prev


def _check_finite(op: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{op} produced non-finite values")


def _emit(op: str, inputs: tuple[Tensor, ...], out: np.ndarray, backward) -> Tensor:
    _check_finite(op, out)
    tape = active_tape()
    track = tape is not None and any(t.requires_grad for t in inputs)
    result = Tensor(out, requires_grad=track, copy=False)
    if track:
        tape.record(OpRecord(op, inputs, result, backward))
    return result


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and reductions


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _emit("add", (a, b), out, backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data * b.data

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _emit("mul", (a, b), out, backward)


def sum(a) -> Tensor:  # noqa: A001
    a = _as_tensor(a)
    out = np.asarray(a.data.sum())

    def backward(g):
        return (np.broadcast_to(g, a.shape).copy(),)

    return _emit("sum", (a,), out, backward)


def weighted_sum(terms: Sequence[Tensor], weights: Sequence[float]) -> Tensor:
    """sum_i weights[i] * terms[i] over scalar terms, accumulated left to right."""
    if len(terms) != len(weights):
        raise ShapeError(f"{len(terms)} terms but {len(weights)} weights")
    if not terms:
        raise ValueError("weighted_sum needs at least one term")
    dtype = terms[0].dtype
    acc = dtype.type(0)
    for t, w in zip(terms, weights):
        if t.data.size != 1:
            raise ShapeError(f"weighted_sum terms must be scalars, got {t.shape}")
        acc = acc + dtype.type(w) * t.data.reshape(())
    out = np.asarray(acc, dtype=dtype)

    def backward(g):
        return tuple(np.asarray(g * dtype.type(w), dtype=dtype).reshape(t.shape) for t, w in zip(terms, weights))

    return _emit("weighted_sum", tuple(terms), out, backward)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = tuple(_as_tensor(t) for t in tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        return tuple(
            np.ascontiguousarray(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis))
            for i in range(len(tensors))
        )

    return _emit("concat", tensors, out, backward)


def leaky_relu(x, slope: float = 0.01) -> Tensor:
    """x where x >= 0, slope*x otherwise.  The derivative at exactly 0 is taken as 1."""
    if not 0.0 < slope < 1.0:
        raise ValueError(f"leaky ReLU slope must lie in (0, 1), got {slope}")
    x = _as_tensor(x)
    pos = x.data >= 0
    if _branch_log is not None:
        _branch_log.append(pos)
    s = x.dtype.type(slope)
    out = np.where(pos, x.data, s * x.data)

    def backward(g):
        return (np.where(pos, g, s * g),)

    return _emit("leaky_relu", (x,), out, backward)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out = a.data @ b.data

    def backward(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return _emit("matmul", (a, b), out, backward)


def linear(x, w, b=None) -> Tensor:
    """Dense layer ``x @ w + b`` with w shaped (in, out)."""
    x, w = _as_tensor(x), _as_tensor(w)
    if x.data.ndim != 2 or w.data.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"dense shape mismatch: input {x.shape}, weight {w.shape}")
    out = x.data @ w.data
    inputs: tuple[Tensor, ...] = (x, w)
    if b is not None:
        b = _as_tensor(b)
        if b.shape != (w.shape[1],):
            raise ShapeError(f"dense bias shape {b.shape} does not match {w.shape[1]} outputs")
        out = out + b.data
        inputs = (x, w, b)

    def backward(g):
        gx = g @ w.data.T if x.requires_grad else None
        gw = x.data.T @ g if w.requires_grad else None
        if b is None:
            return gx, gw
        return gx, gw, g.sum(axis=0)

    return _emit("linear", inputs, out, backward)


def conv2d(x, kernel, bias=None) -> Tensor:
    """3x3 cross-correlation, stride 1, zero padding 1 (spatial size preserved)."""
    x, kernel = _as_tensor(x), _as_tensor(kernel)
    if x.data.ndim != 4:
        raise ShapeError(f"conv2d expects N x C x H x W input, got {x.shape}")
    if kernel.data.ndim != 4 or kernel.shape[2:] != (3, 3):
        raise ShapeError(f"conv2d expects F x C x 3 x 3 kernel, got {kernel.shape}")
    N, C, H, W = x.shape
    F = kernel.shape[0]
    if kernel.shape[1] != C:
        raise ShapeError(f"conv2d channel mismatch: input has {C} channels, kernel expects {kernel.shape[1]}")
    cols = _kernels.im2col3x3(x.data).reshape(N * H * W, C * 9)
    wmat = kernel.data.reshape(F, C * 9)
    out = cols @ wmat.T
    inputs: tuple[Tensor, ...] = (x, kernel)
    if bias is not None:
        bias = _as_tensor(bias)
        if bias.shape != (F,):
            raise ShapeError(f"conv2d bias shape {bias.shape} does not match {F} filters")
        out = out + bias.data
        inputs = (x, kernel, bias)
    out = out.reshape(N, H, W, F).transpose(0, 3, 1, 2)

    def backward(g):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(N * H * W, F)
        gx = None
        if x.requires_grad:
            dcols = (g2 @ wmat).reshape(N, H, W, C, 3, 3)
            gx = _kernels.col2im3x3(dcols, H, W)
        gk = (g2.T @ cols).reshape(kernel.shape) if kernel.requires_grad else None
        if bias is None:
            return gx, gk
        return gx, gk, g2.sum(axis=0)

    return _emit("conv2d", inputs, np.ascontiguousarray(out), backward)


# ---------------------------------------------------------------------------
# pooling and normalization


def max_pool2(x) -> Tensor:
    """2x2 window, stride 2.  Ties route the gradient to the first window element (row-major)."""
    x = _as_tensor(x)
    if x.data.ndim != 4:
        raise ShapeError(f"max_pool2 expects N x C x H x W input, got {x.shape}")
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise ShapeError(f"max_pool2 needs even spatial extents, got {x.shape[2]}x{x.shape[3]}")
    out, idx = _kernels.maxpool2_forward(x.data)
    if _branch_log is not None:
        _branch_log.append(idx)

    def backward(g):
        return (_kernels.maxpool2_backward(g, idx),)

    return _emit("max_pool2", (x,), out, backward)


def global_avg_pool(x) -> Tensor:
    x = _as_tensor(x)
    if x.data.ndim != 4 or x.shape[2] < 1 or x.shape[3] < 1:
        raise ShapeError(f"global_avg_pool expects N x C x H x W input, got {x.shape}")
    N, C, H, W = x.shape
    out = x.data.reshape(N, C, H * W).mean(axis=2)
    scale = x.dtype.type(1.0 / (H * W))

    def backward(g):
        return (np.broadcast_to((g * scale)[:, :, None, None], x.shape).copy(),)

    return _emit("global_avg_pool", (x,), out, backward)


def batch_norm(
    x,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.9,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel batch normalization over (N,) or (N, H, W).

    In training mode the batch statistics are used and the running buffers are
    updated in place: ``running = momentum * running + (1 - momentum) * batch``
    (unbiased variance for the running estimate).
    """
    x = _as_tensor(x)
    if x.data.ndim not in (2, 4):
        raise ShapeError(f"batch_norm expects 2-d or 4-d input, got {x.shape}")
    C = x.shape[1]
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ShapeError(f"batch_norm parameters {gamma.shape}/{beta.shape} do not match {C} channels")
    axes = (0,) if x.data.ndim == 2 else (0, 2, 3)
    bshape = (1, C) if x.data.ndim == 2 else (1, C, 1, 1)
    m = x.data.size // C
    dt = x.dtype.type
    if training:
        if x.shape[0] < 2:
            raise ValueError("batch_norm in train mode needs a batch of at least 2")
        mu = x.data.mean(axis=axes)
        xc = x.data - mu.reshape(bshape)
        var = (xc * xc).mean(axis=axes)
        running_mean *= momentum
        running_mean += (1 - momentum) * mu
        running_var *= momentum
        running_var += (1 - momentum) * var * (m / (m - 1))
    else:
        mu = running_mean.astype(x.dtype)
        var = running_var.astype(x.dtype)
        xc = x.data - mu.reshape(bshape)
    invstd = (dt(1) / np.sqrt(var + dt(eps))).astype(x.dtype)
    xhat = xc * invstd.reshape(bshape)
    out = gamma.data.reshape(bshape) * xhat + beta.data.reshape(bshape)

    def backward(g):
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        dxhat = g * gamma.data.reshape(bshape)
        if training:
            s1 = dxhat.sum(axis=axes).reshape(bshape)
            s2 = (dxhat * xhat).sum(axis=axes).reshape(bshape)
            gx = (invstd.reshape(bshape) / dt(m)) * (dt(m) * dxhat - s1 - xhat * s2)
        else:
            gx = dxhat * invstd.reshape(bshape)
        return gx, dgamma, dbeta

    return _emit("batch_norm", (x, gamma, beta), out, backward)


# ---------------------------------------------------------------------------
# softmax and loss


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax(logits) -> Tensor:
    logits = _as_tensor(logits)
    if logits.data.ndim != 2:
        raise ShapeError(f"softmax expects N x K logits, got {logits.shape}")
    p = _softmax(logits.data)

    def backward(g):
        return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

    return _emit("softmax", (logits,), p, backward)


def check_one_hot(targets: np.ndarray, shape: tuple[int, ...]) -> None:
    t = np.asarray(targets)
    if t.shape != shape:
        raise ShapeError(f"targets shape {t.shape} does not match logits {shape}")
    ok = np.all((t == 0) | (t == 1)) and np.all(t.sum(axis=1) == 1)
    if not ok:
        raise ValueError("targets must be one-hot: exactly one 1 per row, zeros elsewhere")


def cross_entropy(logits, targets) -> Tensor:
    """Batch-mean of -log softmax(logits)[correct class], via log-sum-exp."""
    logits = _as_tensor(logits)
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy expects N x K logits, got {logits.shape}")
    t = np.asarray(targets.data if isinstance(targets, Tensor) else targets)
    check_one_hot(t, logits.shape)
    t = t.astype(logits.dtype)
    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    picked = (z * t).sum(axis=1)
    N = z.shape[0]
    out = np.asarray((lse - picked).mean(), dtype=logits.dtype)

    def backward(g):
        return (g * (_softmax(z) - t) / logits.dtype.type(N),)

    return _emit("cross_entropy", (logits,), out, backward)


def softmax_cross_entropy(logits, targets) -> tuple[Tensor, Tensor]:
    """Return ``(loss, probabilities)``; both are differentiable w.r.t. the logits."""
    return cross_entropy(logits, targets), softmax(logits)
