"""Batch, layer and group normalization.

All three share one primitive: subtract the mean and divide by
``sqrt(var + eps)`` over a set of axes (biased 1/m variance), followed by a
learnable affine ``gamma * xhat + beta``.  They differ only in which axes form
a normalization region:

* batch: per channel, over the batch and spatial axes;
* layer: per sample, over the trailing feature axes;
* group: per sample and channel group, over the group's channels and space.

Batch normalization also keeps running statistics for eval mode, updated as
``r <- (1 - momentum) r + momentum * batch_stat`` (running mean starts at 0,
running variance at 1).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractError
from .tensor import Tensor, normalize, reshape

KINDS = ("batch", "layer", "group")


@dataclass
class NormLayer:
    kind: str
    num_features: int | tuple[int, ...]
    eps: float = 1e-5
    momentum: float = 0.1
    groups: int = 1
    dtype: type = np.float64
    gamma: Tensor = field(init=False)
    beta: Tensor = field(init=False)
    running_mean: np.ndarray | None = field(init=False, default=None)
    running_var: np.ndarray | None = field(init=False, default=None)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"norm kind must be one of {KINDS}, got {self.kind!r}")
        if not self.eps > 0:
            raise ConfigurationError(f"epsilon must be positive, got {self.eps}")
        if not 0 < self.momentum < 1:
            raise ConfigurationError(f"momentum must be in (0, 1), got {self.momentum}")
        shape = (self.num_features,) if isinstance(self.num_features, int) else tuple(self.num_features)
        if self.kind == "group":
            c = shape[0]
            if self.groups < 1 or c % self.groups:
                raise ConfigurationError(
                    f"group norm: channels ({c}) must be divisible by groups ({self.groups})"
                )
        self.gamma = Tensor(np.ones(shape, dtype=self.dtype), requires_grad=True, name=f"{self.kind}norm.gamma")
        self.beta = Tensor(np.zeros(shape, dtype=self.dtype), requires_grad=True, name=f"{self.kind}norm.beta")
        if self.kind == "batch":
            self.running_mean = np.zeros(shape, dtype=self.dtype)
            self.running_var = np.ones(shape, dtype=self.dtype)

    @classmethod
    def batch(cls, channels: int, **kw) -> "NormLayer":
        return cls("batch", channels, **kw)

    @classmethod
    def layer(cls, shape, **kw) -> "NormLayer":
        return cls("layer", shape, **kw)

    @classmethod
    def group(cls, channels: int, groups: int, **kw) -> "NormLayer":
        return cls("group", channels, groups=groups, **kw)

    def parameters(self) -> list[Tensor]:
        return [self.gamma, self.beta]

    def __call__(self, x: Tensor, mode="train") -> Tensor:
        if self.kind == "batch":
            return batch_norm_forward(x, self, mode)
        if self.kind == "layer":
            return layer_norm_forward(x, self)
        return group_norm_forward(x, self)


def _channel_view(t: Tensor, ndim: int) -> Tensor:
    return reshape(t, (1, -1) + (1,) * (ndim - 2))


def batch_norm_forward(x: Tensor, layer: NormLayer, mode="train") -> Tensor:
    """Per-channel normalization of an ``(N, C, ...)`` tensor.

    Train mode uses batch statistics and updates the running estimates; eval
    mode is a fixed affine map built from the running estimates.
    """
    if x.ndim < 2 or x.shape[0] == 0:
        raise ContractError(f"batch norm needs a nonempty (N, C, ...) input, got {x.shape}")
    if x.shape[1] != layer.gamma.shape[0]:
        raise ContractError(f"batch norm: {x.shape[1]} channels, layer has {layer.gamma.shape[0]}")
    gamma = _channel_view(layer.gamma, x.ndim)
    beta = _channel_view(layer.beta, x.ndim)
    if mode in ("train", True):
        axes = (0,) + tuple(range(2, x.ndim))
        if x.size // x.shape[1] == 1:
            warnings.warn("batch norm in train mode over a single value per channel; output equals beta")
        xhat, mu, var = normalize(x, axes, layer.eps)
        m = layer.momentum
        layer.running_mean = ((1 - m) * layer.running_mean + m * mu.reshape(-1)).astype(layer.dtype)
        layer.running_var = ((1 - m) * layer.running_var + m * var.reshape(-1)).astype(layer.dtype)
        return xhat * gamma + beta
    if mode not in ("eval", False):
        raise ContractError(f"mode must be 'train' or 'eval', got {mode!r}")
    shape = (1, -1) + (1,) * (x.ndim - 2)
    inv = 1.0 / np.sqrt(layer.running_var + layer.eps)
    scale = (inv.reshape(shape)).astype(x.dtype)
    shift = (-layer.running_mean * inv).reshape(shape).astype(x.dtype)
    return (x * scale + shift) * gamma + beta


def layer_norm_forward(x: Tensor, layer: NormLayer) -> Tensor:
    """Per-sample normalization over the trailing ``layer.gamma.ndim`` axes."""
    nd = layer.gamma.ndim
    if x.shape[x.ndim - nd:] != layer.gamma.shape:
        raise ContractError(f"layer norm: input {x.shape} does not end in {layer.gamma.shape}")
    axes = tuple(range(x.ndim - nd, x.ndim))
    xhat, _, _ = normalize(x, axes, layer.eps)
    return xhat * layer.gamma + layer.beta


def group_norm_forward(x: Tensor, layer: NormLayer) -> Tensor:
    """Per-(sample, group) normalization of an ``(N, C, H, W)`` tensor with
    per-channel affine parameters."""
    if x.ndim < 2:
        raise ContractError(f"group norm needs (N, C, ...) input, got {x.shape}")
    n, c = x.shape[:2]
    g = layer.groups
    if c % g:
        raise ConfigurationError(f"group norm: channels ({c}) must be divisible by groups ({g})")
    grouped = reshape(x, (n, g, c // g) + x.shape[2:])
    xhat, _, _ = normalize(grouped, tuple(range(2, grouped.ndim)), layer.eps)
    xhat = reshape(xhat, x.shape)
    return xhat * _channel_view(layer.gamma, x.ndim) + _channel_view(layer.beta, x.ndim)
