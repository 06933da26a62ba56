"""Gradient-descent and Adam parameter updates.

The functional forms (:func:`sgd_step`, :func:`adam_step`) work on lists of
arrays; :class:`SGD` and :class:`Adam` drive them from the ``.grad`` fields of
leaf tensors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionError, NonFiniteError, ParameterError
from .tensor import Tensor


@dataclass
class SgdConfig:
    eta: float = 0.01

    def __post_init__(self):
        if not self.eta > 0:
            raise ParameterError(f"learning rate must be positive, got {self.eta}")


@dataclass
class AdamState:
    eta: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        if not self.eta > 0:
            raise ParameterError(f"learning rate must be positive, got {self.eta}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ParameterError(f"betas must lie in [0, 1), got ({self.beta1}, {self.beta2})")
        if not self.epsilon > 0:
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")


def _check(theta: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
    if len(theta) != len(grads):
        raise DimensionError(f"{len(theta)} parameters but {len(grads)} gradients")
    for i, (p, g) in enumerate(zip(theta, grads)):
        if np.shape(p) != np.shape(g):
            raise DimensionError(f"parameter {i}: shape {np.shape(p)} vs gradient {np.shape(g)}")
        if not np.isfinite(g).all():
            raise NonFiniteError(f"parameter {i}: non-finite gradient, step aborted")


def sgd_step(theta, grads, config: SgdConfig) -> list[np.ndarray]:
    """``theta - eta * grad`` for every parameter."""
    _check(theta, grads)
    return [np.asarray(p) - config.eta * np.asarray(g) for p, g in zip(theta, grads)]


def adam_step(state: AdamState, theta, grads) -> tuple[AdamState, list[np.ndarray]]:
    """One Adam update.  The step counter is incremented before bias
    correction, so the first call uses ``t = 1``."""
    _check(theta, grads)
    if not state.m:
        state.m = [np.zeros_like(np.asarray(p, dtype=np.asarray(g).dtype)) for p, g in zip(theta, grads)]
        state.v = [np.zeros_like(m) for m in state.m]
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    out = []
    for i, (p, g) in enumerate(zip(theta, grads)):
        g = np.asarray(g)
        m = b1 * state.m[i] + (1.0 - b1) * g
        v = b2 * state.v[i] + (1.0 - b2) * (g * g)
        state.m[i], state.v[i] = m, v
        m_hat = m / c1
        v_hat = v / c2
        out.append(np.asarray(p) - state.eta * m_hat / (np.sqrt(v_hat) + state.epsilon))
    return state, out


class _Optimizer:
    def __init__(self, params: Sequence[Tensor]):
        self.params = list(params)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def _grads(self) -> list[np.ndarray]:
        return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]

    def _write(self, new: list[np.ndarray]) -> None:
        for p, arr in zip(self.params, new):
            p.data[...] = arr


class SGD(_Optimizer):
    def __init__(self, params, lr: float = 0.01):
        super().__init__(params)
        self.config = SgdConfig(lr)

    def step(self) -> None:
        self._write(sgd_step([p.data for p in self.params], self._grads(), self.config))


class Adam(_Optimizer):
    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        super().__init__(params)
        self.state = AdamState(eta=lr, beta1=betas[0], beta2=betas[1], epsilon=eps)

    def step(self) -> None:
        self.state, new = adam_step(self.state, [p.data for p in self.params], self._grads())
        self._write(new)
