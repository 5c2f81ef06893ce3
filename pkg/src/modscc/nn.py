"""Parameter storage and the small layer set the networks are built from."""
from __future__ import annotations

import zlib

import numpy as np

from . import tensor as T
from .tensor import Parameter, Tensor


def param_rng(seed: int, name: str) -> np.random.Generator:
    """RNG stream keyed by (seed, parameter name).

    Two networks that share a parameter name get the same initial value for it
    regardless of construction order, which is what makes the reduced-weight
    Mo-DsCC comparable to an independently built baseline.
    """
    return np.random.default_rng([seed, zlib.crc32(name.encode())])


class ParamStore:
    """Named parameters plus non-trainable buffers (batch-norm running stats)."""

    def __init__(self, seed: int = 0, dtype=np.float32):
        self.seed = seed
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Parameter] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def kaiming(self, name: str, shape: tuple[int, ...], fan_in: int) -> Parameter:
        std = np.sqrt(2.0 / fan_in)
        value = param_rng(self.seed, name).standard_normal(shape) * std
        return self._add(name, value)

    def constant(self, name: str, shape: tuple[int, ...], value: float) -> Parameter:
        return self._add(name, np.full(shape, value))

    def buffer(self, name: str, shape: tuple[int, ...], value: float) -> np.ndarray:
        if name in self.buffers:
            raise KeyError(f"duplicate buffer {name!r}")
        buf = np.full(shape, value, dtype=np.float64)
        self.buffers[name] = buf
        return buf

    def _add(self, name: str, value: np.ndarray) -> Parameter:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        p = Parameter(value.astype(self.dtype), name=name)
        self.params[name] = p
        return p

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def num_parameters(self) -> int:
        return int(np.sum([p.data.size for p in self.params.values()]))

    def state(self) -> dict[str, np.ndarray]:
        """Flat name -> array view of parameters and buffers (buffers prefixed ``buf:``)."""
        out = {name: p.data for name, p in self.params.items()}
        out.update({f"buf:{name}": b for name, b in self.buffers.items()})
        return out

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.state()) - set(state)
        if missing:
            raise KeyError(f"state is missing entries: {sorted(missing)}")
        for name, p in self.params.items():
            p.assign(state[name])
        for name, b in self.buffers.items():
            b[...] = state[f"buf:{name}"]


class Dense:
    def __init__(self, store: ParamStore, name: str, n_in: int, n_out: int):
        self.name = name
        self.n_in, self.n_out = n_in, n_out
        self.w = store.kaiming(f"{name}.weight", (n_in, n_out), fan_in=n_in)
        self.b = store.constant(f"{name}.bias", (n_out,), 0.0)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.n_in:
            raise T.ShapeError(f"{self.name}: expected width {self.n_in}, got {x.shape[1]}")
        return T.linear(x, self.w, self.b)


class Conv3x3:
    def __init__(self, store: ParamStore, name: str, c_in: int, c_out: int):
        self.name = name
        self.k = store.kaiming(f"{name}.weight", (c_out, c_in, 3, 3), fan_in=9 * c_in)
        self.b = store.constant(f"{name}.bias", (c_out,), 0.0)

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.k, self.b)


class BatchNorm:
    def __init__(self, store: ParamStore, name: str, channels: int, momentum: float = 0.9, eps: float = 1e-5):
        self.gamma = store.constant(f"{name}.gamma", (channels,), 1.0)
        self.beta = store.constant(f"{name}.beta", (channels,), 0.0)
        self.running_mean = store.buffer(f"{name}.running_mean", (channels,), 0.0)
        self.running_var = store.buffer(f"{name}.running_var", (channels,), 1.0)
        self.momentum, self.eps = momentum, eps

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return T.batch_norm(
            x, self.gamma, self.beta, self.running_mean, self.running_var,
            training=training, momentum=self.momentum, eps=self.eps,
        )


class DenseBlock:
    """dense -> batch norm -> leaky ReLU, the hidden-layer unit used everywhere above the backbone."""

    def __init__(self, store: ParamStore, name: str, n_in: int, n_out: int, slope: float,
                 momentum: float = 0.9, eps: float = 1e-5):
        self.dense = Dense(store, name, n_in, n_out)
        self.bn = BatchNorm(store, f"{name}.bn", n_out, momentum, eps)
        self.slope = slope
        self.n_out = n_out

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return T.leaky_relu(self.bn(self.dense(x), training), self.slope)
