"""Pre-activation residual CNN with a pluggable activation and normalization.

Layout for the default configuration (32x32 input)::

    stem   conv3x3  3 -> 64                       32x32
    block1 (64,  stride 1)                        32x32
    block2 (64,  stride 1)                        32x32
    block3 (128, stride 2)  + 1x1 projection      16x16
    block4 (128, stride 1)                        16x16
    block5 (256, stride 2)  + 1x1 projection       8x8
    block6 (256, stride 1)                         8x8
    norm -> act -> global average pool -> dense -> logits

Each block runs ``norm -> act -> conv`` twice and adds the skip path.  The
layer census counts weight layers on the main path: stem, twelve block convs
and the classifier, fourteen in total (projections are not counted).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .activations import Activation, make_activation
from .errors import ConfigurationError, NonFiniteError
from .normalization import NormLayer
from .tensor import Tensor, conv2d, conv_output_size, global_avg_pool, matmul, no_grad

BLOCK_STRIDES = (1, 1, 2, 1, 2, 1)


@dataclass
class NetworkConfig:
    activation: str | Activation = "gelu"
    norm: str = "batch"
    groups: int = 8
    in_channels: int = 3
    stem_width: int = 64
    widths: tuple[int, ...] = (64, 64, 128, 128, 256, 256)
    strides: tuple[int, ...] = BLOCK_STRIDES
    num_classes: int = 10

    def validate(self) -> None:
        problems = []
        if len(self.widths) != 6:
            problems.append(f"exactly 6 residual blocks required, got {len(self.widths)} widths")
        if tuple(self.strides) != BLOCK_STRIDES:
            problems.append(f"block strides must be {BLOCK_STRIDES}, got {tuple(self.strides)}")
        if self.in_channels < 1 or self.stem_width < 1 or any(w < 1 for w in self.widths):
            problems.append("channel widths must be positive")
        if self.num_classes < 2:
            problems.append(f"num_classes must be >= 2, got {self.num_classes}")
        if self.norm not in ("batch", "layer", "group"):
            problems.append(f"norm must be batch, layer or group, got {self.norm!r}")
        if self.norm == "group":
            bad = [w for w in (self.stem_width, *self.widths) if w % self.groups]
            if bad:
                problems.append(f"group norm with {self.groups} groups cannot split widths {bad}")
        if problems:
            raise ConfigurationError("invalid network config: " + "; ".join(problems))


class Conv2d:
    def __init__(self, cin, cout, kernel, stride, padding, rng, dtype, name):
        std = np.sqrt(2.0 / (cin * kernel * kernel))
        self.weight = Tensor(rng.normal(0.0, std, (cout, cin, kernel, kernel)).astype(dtype),
                             requires_grad=True, name=f"{name}.weight")
        self.bias = Tensor(np.zeros(cout, dtype=dtype), requires_grad=True, name=f"{name}.bias")
        self.stride = stride
        self.padding = padding
        self.name = name

    def parameters(self):
        return [self.weight, self.bias]

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, self.stride, self.padding)


class Dense:
    """``z W^T + b`` with ``W`` shaped (out, in); weights start at zero."""

    def __init__(self, cin, cout, dtype, name):
        self.weight = Tensor(np.zeros((cout, cin), dtype=dtype), requires_grad=True, name=f"{name}.weight")
        self.bias = Tensor(np.zeros(cout, dtype=dtype), requires_grad=True, name=f"{name}.bias")
        self.name = name

    def parameters(self):
        return [self.weight, self.bias]

    def __call__(self, x: Tensor) -> Tensor:
        return matmul(x, self.weight.T) + self.bias


def _norm(config: NetworkConfig, channels: int, dtype) -> NormLayer:
    if config.norm == "batch":
        return NormLayer.batch(channels, dtype=dtype)
    groups = 1 if config.norm == "layer" else config.groups
    return NormLayer.group(channels, groups, dtype=dtype)


class ResidualBlock:
    def __init__(self, cin, cout, stride, config, rng, dtype, name):
        self.name = name
        self.norm1 = _norm(config, cin, dtype)
        self.act1 = make_activation(config.activation)
        self.conv1 = Conv2d(cin, cout, 3, stride, 1, rng, dtype, f"{name}.conv1")
        self.norm2 = _norm(config, cout, dtype)
        self.act2 = make_activation(config.activation)
        self.conv2 = Conv2d(cout, cout, 3, 1, 1, rng, dtype, f"{name}.conv2")
        self.projection = (
            Conv2d(cin, cout, 1, stride, 0, rng, dtype, f"{name}.proj") if stride != 1 or cin != cout else None
        )

    def parameters(self):
        ps = self.norm1.parameters() + self.act1.parameters() + self.conv1.parameters()
        ps += self.norm2.parameters() + self.act2.parameters() + self.conv2.parameters()
        if self.projection is not None:
            ps += self.projection.parameters()
        return ps

    def __call__(self, x: Tensor, train: bool, rng) -> Tensor:
        mode = "train" if train else "eval"
        h = self.conv1(self.act1(self.norm1(x, mode), train, rng))
        h = self.conv2(self.act2(self.norm2(h, mode), train, rng))
        skip = x if self.projection is None else self.projection(x)
        return h + skip


class Network:
    """The assembled classifier.  Build with :func:`build_network`."""

    def __init__(self, config: NetworkConfig, seed: int = 0, dtype=np.float32):
        config.validate()
        self.config = config
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        self.stem = Conv2d(config.in_channels, config.stem_width, 3, 1, 1, rng, dtype, "stem")
        self.blocks = []
        cin = config.stem_width
        for i, (w, s) in enumerate(zip(config.widths, config.strides), start=1):
            self.blocks.append(ResidualBlock(cin, w, s, config, rng, dtype, f"block{i}"))
            cin = w
        self.final_norm = _norm(config, cin, dtype)
        self.final_act = make_activation(config.activation)
        self.fc = Dense(cin, config.num_classes, dtype, "fc")
        # RReLU slope sampling in train mode
        self.rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
        self.last_shapes: dict[str, tuple[int, ...]] = {}

    def parameters(self) -> list[Tensor]:
        ps = self.stem.parameters()
        for b in self.blocks:
            ps += b.parameters()
        ps += self.final_norm.parameters() + self.final_act.parameters() + self.fc.parameters()
        return ps

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def layer_census(self) -> list[tuple[str, str]]:
        """Counted weight layers in forward order."""
        rows = [("stem", "conv3x3")]
        for b in self.blocks:
            rows += [(b.conv1.name, "conv3x3"), (b.conv2.name, "conv3x3")]
        rows.append(("fc", "dense"))
        return rows

    def _stage(self, name: str, fn, *args):
        try:
            out = fn(*args)
        except NonFiniteError as exc:
            raise NonFiniteError(f"layer {name}: {exc}") from exc
        self.last_shapes[name] = out.shape
        return out

    def forward(self, images, mode="train") -> Tensor:
        train = mode in ("train", True)
        x = images if isinstance(images, Tensor) else Tensor(images, dtype=self.dtype)
        self.last_shapes = {"input": x.shape}
        h = self._stage("stem", self.stem, x)
        for b in self.blocks:
            h = self._stage(b.name, b, h, train, self.rng)
        m = "train" if train else "eval"
        h = self._stage("final_norm_act", lambda t: self.final_act(self.final_norm(t, m), train, self.rng), h)
        h = self._stage("pool", global_avg_pool, h)
        return self._stage("fc", self.fc, h)

    __call__ = forward

    def summary(self, input_hw: tuple[int, int] = (32, 32)) -> str:
        """Text table of layers, output shapes and parameter counts."""
        h, w = input_hw
        rows = [("layer", "type", "output", "params")]

        def conv_shape(c, hh, ww, k, s, p):
            return (c, conv_output_size(hh, k, s, p), conv_output_size(ww, k, s, p))

        shape = conv_shape(self.config.stem_width, h, w, 3, 1, 1)
        rows.append(("stem", "conv3x3", str(shape), str(sum(p.size for p in self.stem.parameters()))))
        for b in self.blocks:
            shape = conv_shape(b.conv1.weight.shape[0], shape[1], shape[2], 3, b.conv1.stride, 1)
            proj = " +proj1x1" if b.projection is not None else ""
            rows.append((b.name, f"preact-block{proj}", str(shape), str(sum(p.size for p in b.parameters()))))
        rows.append(("final", "norm+act+avgpool", str((shape[0], 1, 1)),
                     str(sum(p.size for p in self.final_norm.parameters() + self.final_act.parameters()))))
        rows.append(("fc", "dense", str((self.config.num_classes,)), str(sum(p.size for p in self.fc.parameters()))))
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = ["  ".join(c.ljust(wd) for c, wd in zip(r, widths)).rstrip() for r in rows]
        lines.append(f"counted layers: {len(self.layer_census())}  parameters: {self.num_parameters()}")
        return "\n".join(lines)


def build_network(config: NetworkConfig | None = None, seed: int = 0, dtype=np.float32) -> Network:
    return Network(config or NetworkConfig(), seed=seed, dtype=dtype)


def forward(net: Network, images, mode="train") -> Tensor:
    return net.forward(images, mode)


def predict(net: Network, images, batch_size: int = 256) -> np.ndarray:
    """Eval-mode logits without graph recording."""
    outs = []
    with no_grad():
        for i in range(0, len(images), batch_size):
            outs.append(net.forward(images[i:i + batch_size], "eval").data)
    return np.concatenate(outs)
