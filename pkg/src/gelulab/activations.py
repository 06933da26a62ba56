"""Activation functions with analytic first derivatives.

GELU comes in two forms: the exact one, ``x * Phi(alpha x)`` with ``Phi`` the
standard normal CDF, and the tanh approximation that networks use by default::

    gelu(x) = 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))

The tanh form is evaluated through the identity ``1 + tanh(u) = 2 sigmoid(2u)``
so that neither the value nor the derivative underflows to an exact zero in
the far negative tail (the derivative keeps its sign there).

Derivative conventions at kinks (fixed for reproducibility):

* ReLU, ReLU6, LeakyReLU, PReLU, RReLU, SELU: the ``x > 0`` branch is used only
  for strictly positive inputs, so e.g. ``relu'(0) = 0`` and ``relu6'(6) = 0``.
* Hardtanh, Hardsigmoid, Hardswish: boundary points take the saturated side.
* Hardshrink, Softshrink: at ``+-lambda`` the outer (identity-slope) side.
"""

from __future__ import annotations

import contextlib
import dataclasses
import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import ContractError, ParameterError
from .tensor import Tensor, record


@dataclass(frozen=True)
class GeluConstants:
    scale: float = math.sqrt(2.0 / math.pi)
    cubic: float = 0.044715
    alpha: float = 1.0


DEFAULT_GELU = GeluConstants()
_gelu = DEFAULT_GELU


@contextlib.contextmanager
def gelu_constants(**overrides):
    """Temporarily replace the tanh-form constants (used for mutation testing)."""
    global _gelu
    prev = _gelu
    _gelu = dataclasses.replace(prev, **overrides)
    try:
        yield _gelu
    finally:
        _gelu = prev


def current_gelu_constants() -> GeluConstants:
    return _gelu


# -- GELU -----------------------------------------------------------------

def _tanh_arg(x):
    c = _gelu
    return c.scale * (x + c.cubic * x * x * x)


def gelu_tanh(x):
    """Tanh approximation of GELU."""
    x = np.asarray(x, dtype=float) if not isinstance(x, np.ndarray) else x
    with np.errstate(over="ignore"):
        out = x * special.expit(2.0 * _tanh_arg(x))
    return out if out.ndim else float(out)


def gelu_exact(x, alpha: float = 1.0):
    """``x * Phi(alpha * x)``."""
    if not alpha > 0:
        raise ParameterError(f"gelu_exact: alpha must be positive, got {alpha}")
    x = np.asarray(x, dtype=float) if not isinstance(x, np.ndarray) else x
    out = x * special.ndtr(alpha * x)
    return out if out.ndim else float(out)


def gelu_derivative_exact(x, alpha: float = 1.0):
    """``alpha x phi(alpha x) + Phi(alpha x)``."""
    if not alpha > 0:
        raise ParameterError(f"gelu_derivative_exact: alpha must be positive, got {alpha}")
    x = np.asarray(x, dtype=float) if not isinstance(x, np.ndarray) else x
    ax = alpha * x
    out = ax * np.exp(-0.5 * ax * ax) / math.sqrt(2.0 * math.pi) + special.ndtr(ax)
    return out if out.ndim else float(out)


def gelu_derivative_tanh(x):
    """Derivative of :func:`gelu_tanh`.

    With ``s = expit(2u)`` (so ``0.5 (1 + tanh u) = s`` and
    ``sech^2 u = 4 s (1 - s)``) this is
    ``s + 2 sqrt(2/pi) x s (1 - s) (1 + 3 c x^2)``.
    """
    x = np.asarray(x, dtype=float) if not isinstance(x, np.ndarray) else x
    c = _gelu
    x2 = x * x
    s = special.expit(2.0 * c.scale * x * (1.0 + c.cubic * x2))
    with np.errstate(over="ignore", invalid="ignore"):
        t = 1.0 - s
        t *= s
        t *= x
        x2 *= 3.0 * c.cubic
        x2 += 1.0
        t *= x2
        t *= 2.0 * c.scale
        out = s + t
    if not np.isfinite(out).all():
        out = np.where(np.isfinite(out), out, (x > 0).astype(out.dtype))
    return out if out.ndim else float(out)


# -- the zoo --------------------------------------------------------------

class ActivationKind(enum.Enum):
    ELU = "elu"
    HARDSHRINK = "hardshrink"
    HARDSIGMOID = "hardsigmoid"
    HARDTANH = "hardtanh"
    HARDSWISH = "hardswish"
    LEAKY_RELU = "leaky_relu"
    LOGSIGMOID = "logsigmoid"
    PRELU = "prelu"
    RELU = "relu"
    RELU6 = "relu6"
    RRELU = "rrelu"
    SELU = "selu"
    CELU = "celu"
    GELU_TANH = "gelu"
    GELU_EXACT = "gelu_exact"
    SIGMOID = "sigmoid"
    SOFTPLUS = "softplus"
    SOFTSHRINK = "softshrink"
    SOFTSIGN = "softsign"
    TANH = "tanh"
    TANHSHRINK = "tanhshrink"


ACTIVATION_NAMES = tuple(k.value for k in ActivationKind)

# Nondecreasing everywhere for the default parameters.
MONOTONE = frozenset(
    {
        ActivationKind.SIGMOID, ActivationKind.TANH, ActivationKind.SOFTPLUS,
        ActivationKind.SOFTSIGN, ActivationKind.HARDSIGMOID, ActivationKind.HARDTANH,
        ActivationKind.LOGSIGMOID, ActivationKind.RELU, ActivationKind.RELU6,
        ActivationKind.ELU, ActivationKind.SELU, ActivationKind.CELU,
        ActivationKind.LEAKY_RELU,
    }
)

SELU_ALPHA = 1.6732632423543772
SELU_SCALE = 1.0507009873554805

DEFAULT_PARAMS = {
    ActivationKind.ELU: {"alpha": 1.0},
    ActivationKind.CELU: {"alpha": 1.0},
    ActivationKind.SELU: {"alpha": SELU_ALPHA, "scale": SELU_SCALE},
    ActivationKind.LEAKY_RELU: {"negative_slope": 0.01},
    ActivationKind.PRELU: {"init": 0.25},
    ActivationKind.RRELU: {"lower": 1.0 / 8.0, "upper": 1.0 / 3.0},
    ActivationKind.HARDSHRINK: {"lambd": 0.5},
    ActivationKind.SOFTSHRINK: {"lambd": 0.5},
    ActivationKind.HARDTANH: {"min_val": -1.0, "max_val": 1.0},
    ActivationKind.GELU_EXACT: {"alpha": 1.0},
}

# Points where the derivative jumps, for finite-difference grids to avoid.
def kink_points(kind: ActivationKind, params: dict) -> tuple[float, ...]:
    k = ActivationKind
    if kind in (k.RELU, k.LEAKY_RELU, k.PRELU, k.RRELU, k.SELU):
        return (0.0,)
    if kind is k.RELU6:
        return (0.0, 6.0)
    if kind is k.HARDTANH:
        return (params["min_val"], params["max_val"])
    if kind in (k.HARDSIGMOID, k.HARDSWISH):
        return (-3.0, 3.0)
    if kind in (k.HARDSHRINK, k.SOFTSHRINK):
        return (-params["lambd"], params["lambd"])
    if kind in (k.ELU, k.CELU) and params["alpha"] != 1.0:
        return (0.0,)
    return ()


def _softplus(x):
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0)


def forward_values(kind: ActivationKind, x: np.ndarray, params: dict, slope=None) -> np.ndarray:
    """Elementwise activation values.

    ``slope`` is the negative-side slope for PReLU (scalar) and RReLU (scalar
    in eval mode, per-element array in train mode).
    """
    k = ActivationKind
    one = x.dtype.type(1)
    if kind is k.RELU:
        return np.maximum(x, 0)
    if kind is k.RELU6:
        return np.minimum(np.maximum(x, 0), 6)
    if kind is k.LEAKY_RELU:
        return np.where(x > 0, x, params["negative_slope"] * x)
    if kind in (k.PRELU, k.RRELU):
        return np.where(x > 0, x, slope * x)
    if kind is k.ELU:
        a = params["alpha"]
        return np.where(x > 0, x, a * np.expm1(np.minimum(x, 0)))
    if kind is k.CELU:
        a = params["alpha"]
        return np.maximum(x, 0) + np.minimum(0, a * np.expm1(np.minimum(x, 0) / a))
    if kind is k.SELU:
        return params["scale"] * np.where(x > 0, x, params["alpha"] * np.expm1(np.minimum(x, 0)))
    if kind is k.GELU_TANH:
        return gelu_tanh(x)
    if kind is k.GELU_EXACT:
        return gelu_exact(x, params["alpha"])
    if kind is k.SIGMOID:
        return special.expit(x)
    if kind is k.SOFTPLUS:
        return _softplus(x)
    if kind is k.LOGSIGMOID:
        return -_softplus(-x)
    if kind is k.SOFTSIGN:
        return x / (one + np.abs(x))
    if kind is k.TANH:
        return np.tanh(x)
    if kind is k.TANHSHRINK:
        return x - np.tanh(x)
    if kind is k.HARDTANH:
        return np.clip(x, params["min_val"], params["max_val"])
    if kind is k.HARDSIGMOID:
        return np.clip(x / 6 + 0.5, 0, 1)
    if kind is k.HARDSWISH:
        return x * np.clip(x + 3, 0, 6) / 6
    if kind is k.HARDSHRINK:
        return np.where(np.abs(x) > params["lambd"], x, 0)
    if kind is k.SOFTSHRINK:
        lam = params["lambd"]
        return np.where(x > lam, x - lam, np.where(x < -lam, x + lam, 0))
    raise ContractError(f"unknown activation kind {kind!r}")


def derivative_values(kind: ActivationKind, x: np.ndarray, params: dict, slope=None) -> np.ndarray:
    """Elementwise first derivative, with the kink conventions in the module doc."""
    k = ActivationKind
    one = x.dtype.type(1)
    if kind is k.RELU:
        return (x > 0).astype(x.dtype)
    if kind is k.RELU6:
        return ((x > 0) & (x < 6)).astype(x.dtype)
    if kind is k.LEAKY_RELU:
        return np.where(x > 0, one, params["negative_slope"])
    if kind in (k.PRELU, k.RRELU):
        return np.where(x > 0, one, slope)
    if kind is k.ELU:
        return np.where(x > 0, one, params["alpha"] * np.exp(np.minimum(x, 0)))
    if kind is k.CELU:
        return np.where(x > 0, one, np.exp(np.minimum(x, 0) / params["alpha"]))
    if kind is k.SELU:
        s, a = params["scale"], params["alpha"]
        return np.where(x > 0, s, s * a * np.exp(np.minimum(x, 0)))
    if kind is k.GELU_TANH:
        return gelu_derivative_tanh(x)
    if kind is k.GELU_EXACT:
        return gelu_derivative_exact(x, params["alpha"])
    if kind is k.SIGMOID:
        s = special.expit(x)
        return s * (one - s)
    if kind is k.SOFTPLUS:
        return special.expit(x)
    if kind is k.LOGSIGMOID:
        return special.expit(-x)
    if kind is k.SOFTSIGN:
        d = one + np.abs(x)
        return one / (d * d)
    if kind is k.TANH:
        t = np.tanh(x)
        return one - t * t
    if kind is k.TANHSHRINK:
        t = np.tanh(x)
        return t * t
    if kind is k.HARDTANH:
        return ((x > params["min_val"]) & (x < params["max_val"])).astype(x.dtype)
    if kind is k.HARDSIGMOID:
        return np.where((x > -3) & (x < 3), one / 6, 0).astype(x.dtype)
    if kind is k.HARDSWISH:
        return np.where(x <= -3, 0, np.where(x >= 3, one, (2 * x + 3) / 6)).astype(x.dtype)
    if kind in (k.HARDSHRINK, k.SOFTSHRINK):
        return (np.abs(x) >= params["lambd"]).astype(x.dtype)
    raise ContractError(f"unknown activation kind {kind!r}")


def parse_kind(name) -> ActivationKind:
    if isinstance(name, ActivationKind):
        return name
    if isinstance(name, Activation):
        return name.kind
    key = str(name).strip().lower().replace("-", "_")
    aliases = {"gelu_tanh": "gelu", "leakyrelu": "leaky_relu", "log_sigmoid": "logsigmoid"}
    key = aliases.get(key, key)
    try:
        return ActivationKind(key)
    except ValueError:
        raise ContractError(
            f"unknown activation {name!r}; known: {', '.join(ACTIVATION_NAMES)}"
        ) from None


@dataclass
class Activation:
    """An activation kind with its parameters.

    PReLU owns a learnable scalar slope (``self.slope``, a leaf tensor); every
    call site in a network should hold its own instance.
    """

    kind: ActivationKind
    params: dict = field(default_factory=dict)
    slope: Tensor | None = None

    def __post_init__(self):
        self.kind = parse_kind(self.kind)
        merged = dict(DEFAULT_PARAMS.get(self.kind, {}))
        unknown = set(self.params) - set(merged)
        if unknown:
            raise ParameterError(f"{self.kind.value}: unknown parameters {sorted(unknown)}")
        merged.update(self.params)
        self.params = merged
        if self.kind is ActivationKind.RRELU:
            lo, hi = merged["lower"], merged["upper"]
            if not 0 <= lo < hi < 1:
                raise ParameterError(f"rrelu: need 0 <= lower < upper < 1, got [{lo}, {hi}]")
        if self.kind in (ActivationKind.HARDSHRINK, ActivationKind.SOFTSHRINK) and merged["lambd"] < 0:
            raise ParameterError("shrink threshold must be nonnegative")
        if self.kind in (ActivationKind.ELU, ActivationKind.CELU, ActivationKind.GELU_EXACT):
            if not merged["alpha"] > 0:
                raise ParameterError(f"{self.kind.value}: alpha must be positive")
        if self.kind is ActivationKind.PRELU and self.slope is None:
            self.slope = Tensor(np.float64(merged["init"]), requires_grad=True, name="prelu.slope")

    @property
    def name(self) -> str:
        return self.kind.value

    def fresh(self) -> "Activation":
        """Copy with its own (re-initialized) learnable state."""
        return Activation(self.kind, {k: v for k, v in self.params.items()})

    def parameters(self) -> list[Tensor]:
        return [self.slope] if self.slope is not None else []

    def _slope(self, x: np.ndarray, train: bool, rng):
        if self.kind is ActivationKind.PRELU:
            return self.slope.data.astype(x.dtype)
        if self.kind is ActivationKind.RRELU:
            lo, hi = self.params["lower"], self.params["upper"]
            if not train:
                return x.dtype.type((lo + hi) / 2)
            return _rng(rng).uniform(lo, hi, size=x.shape).astype(x.dtype)
        return None

    def __call__(self, x: Tensor, train: bool = False, rng=None) -> Tensor:
        """Apply to a tensor, recording the op for back-propagation."""
        data = x.data
        slope = self._slope(data, train, rng)
        out = forward_values(self.kind, data, self.params, slope).astype(data.dtype, copy=False)
        if self.kind is ActivationKind.PRELU:
            def bw(g):
                gx = g * derivative_values(self.kind, data, self.params, slope).astype(data.dtype, copy=False)
                gs = np.asarray((g * np.where(data > 0, 0, data)).sum(), dtype=self.slope.dtype)
                return gx, gs

            return record(out, (x, self.slope), bw, self.name)

        def bw(g):
            return (g * derivative_values(self.kind, data, self.params, slope).astype(data.dtype, copy=False),)

        return record(out, (x,), bw, self.name)


def _rng(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def make_activation(spec, **params) -> Activation:
    if isinstance(spec, Activation):
        return spec.fresh() if not params else Activation(spec.kind, {**spec.params, **params})
    return Activation(parse_kind(spec), params)


def _is_train(mode) -> bool:
    if mode in ("train", True):
        return True
    if mode in ("eval", False, None):
        return False
    raise ContractError(f"mode must be 'train' or 'eval', got {mode!r}")


def apply_activation(kind, x, mode="eval", rng=None) -> Tensor:
    """Apply an activation elementwise.

    In train mode RReLU draws one slope per element from ``rng`` (a seed or a
    ``numpy.random.Generator``); in eval mode it uses the midpoint slope.
    """
    act = kind if isinstance(kind, Activation) else make_activation(kind)
    x = x if isinstance(x, Tensor) else Tensor(x)
    return act(x, train=_is_train(mode), rng=rng)


def activation_derivative(kind, x, mode="eval", rng=None) -> Tensor:
    """Elementwise derivative; pass the same ``rng`` seed as the forward call
    so that RReLU reuses the sampled slopes."""
    act = kind if isinstance(kind, Activation) else make_activation(kind)
    data = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=float)
    slope = act._slope(data, _is_train(mode), rng)
    return Tensor(derivative_values(act.kind, data, act.params, slope).astype(data.dtype, copy=False))
