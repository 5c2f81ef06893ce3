"""VGG-16-style convolutional feature extractor ending in global average pooling."""
from __future__ import annotations

from dataclasses import dataclass

from . import tensor as T
from .nn import BatchNorm, Conv3x3, ParamStore
from .tensor import Tensor

VGG16_BLOCKS = ((2, 64), (2, 128), (3, 256), (3, 512), (3, 512))
DESK_BLOCKS = ((1, 16), (1, 32), (1, 64))


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BackboneConfig:
    """Architecture profile.

    ``conv_blocks`` lists ``(layer_count, channel_width)`` per block; each block
    ends in a 2x2 max pool.  The full profile is the 13-layer VGG-16 layout;
    any other layout must be opted into with ``reduced=True``.
    ``dense_width`` is the size of the shared fully connected layer placed
    after pooling (built by the head network).
    """

    conv_blocks: tuple[tuple[int, int], ...] = VGG16_BLOCKS
    input_size: tuple[int, int] = (256, 256)
    in_channels: int = 3
    dense_width: int = 4096
    activation_slope: float = 0.01
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5
    reduced: bool = False

    def __post_init__(self):
        object.__setattr__(self, "conv_blocks", tuple(tuple(int(v) for v in b) for b in self.conv_blocks))
        object.__setattr__(self, "input_size", tuple(int(v) for v in self.input_size))
        self.validate()

    @classmethod
    def full(cls, input_size=(256, 256), **kw) -> "BackboneConfig":
        return cls(conv_blocks=VGG16_BLOCKS, input_size=input_size, **kw)

    @classmethod
    def desk(cls, conv_blocks=DESK_BLOCKS, input_size=(32, 32), dense_width: int = 32, **kw) -> "BackboneConfig":
        return cls(conv_blocks=conv_blocks, input_size=input_size, dense_width=dense_width, reduced=True, **kw)

    def validate(self) -> None:
        if not self.conv_blocks:
            raise ConfigError("backbone needs at least one conv block")
        if any(n < 1 or w < 1 for n, w in self.conv_blocks):
            raise ConfigError(f"conv block counts and widths must be positive: {self.conv_blocks}")
        if not self.reduced and [n for n, _ in self.conv_blocks] != [2, 2, 3, 3, 3]:
            raise ConfigError(
                "full profile needs 5 blocks of 2,2,3,3,3 conv layers; pass reduced=True for a desk profile"
            )
        div = 2 ** len(self.conv_blocks)
        H, W = self.input_size
        if H % div or W % div or H < div or W < div:
            raise ConfigError(f"input size {H}x{W} is not divisible by 2^{len(self.conv_blocks)}")
        if self.dense_width < 1:
            raise ConfigError("dense_width must be positive")
        if not 0.0 < self.activation_slope < 1.0:
            raise ConfigError("activation_slope must lie in (0, 1)")

    @property
    def feature_width(self) -> int:
        return self.conv_blocks[-1][1]


def conv_param_count(config: BackboneConfig) -> int:
    """Weights + biases of every 3x3 conv, plus gamma/beta of its batch norm."""
    total = 0
    c_in = config.in_channels
    for n_layers, width in config.conv_blocks:
        for _ in range(n_layers):
            total += 9 * c_in * width + width  # conv
            total += 2 * width  # batch norm
            c_in = width
    return total


class Backbone:
    """Conv blocks (conv -> BN -> leaky ReLU per layer, max pool per block) then GAP."""

    def __init__(self, config: BackboneConfig, store: ParamStore, prefix: str = "backbone"):
        self.config = config
        self.layers: list[list[tuple[Conv3x3, BatchNorm]]] = []
        c_in = config.in_channels
        for bi, (n_layers, width) in enumerate(config.conv_blocks):
            block = []
            for li in range(n_layers):
                name = f"{prefix}.block{bi}.conv{li}"
                conv = Conv3x3(store, name, c_in, width)
                bn = BatchNorm(store, f"{name}.bn", width, config.bn_momentum, config.bn_eps)
                block.append((conv, bn))
                c_in = width
            self.layers.append(block)

    @property
    def feature_width(self) -> int:
        return self.config.feature_width

    def __call__(self, images, training: bool) -> Tensor:
        x = images if isinstance(images, Tensor) else Tensor(images)
        cfg = self.config
        expected = (cfg.in_channels, *cfg.input_size)
        if x.data.ndim != 4 or x.shape[1:] != expected:
            raise T.ShapeError(f"backbone expects N x {expected[0]} x {expected[1]} x {expected[2]}, got {x.shape}")
        for block in self.layers:
            for conv, bn in block:
                x = T.leaky_relu(bn(conv(x), training), cfg.activation_slope)
            x = T.max_pool2(x)
        return T.global_avg_pool(x)
