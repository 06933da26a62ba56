import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gelulab.activations import (
    ACTIVATION_NAMES,
    MONOTONE,
    Activation,
    ActivationKind,
    activation_derivative,
    apply_activation,
    current_gelu_constants,
    derivative_values,
    forward_values,
    gelu_constants,
    gelu_derivative_exact,
    gelu_derivative_tanh,
    gelu_exact,
    gelu_tanh,
    kink_points,
    make_activation,
    parse_kind,
)
from gelulab.errors import ContractError, ParameterError
from gelulab.tensor import Tensor, backward, tsum

from oracles import gelu_exact_mp, gelu_tanh_mp

# Frozen from 50-digit evaluations in tests/oracles.py
E_MAX = 4.732355206872849e-4
E_PRIME_MAX = 8.684518349859139e-4


def test_twenty_one_kinds():
    assert len(ActivationKind) == 21
    assert len(set(ACTIVATION_NAMES)) == 21
    assert "gelu" in ACTIVATION_NAMES and "gelu_exact" in ACTIVATION_NAMES


def test_gelu_constants():
    c = current_gelu_constants()
    assert c.scale == math.sqrt(2 / math.pi)
    assert c.cubic == 0.044715
    assert c.alpha == 1.0


# -- GELU values --------------------------------------------------------------

def test_gelu_tanh_examples():
    assert gelu_tanh(0.0) == 0.0
    assert gelu_tanh(1.0) == pytest.approx(0.8412, abs=1e-4)
    assert gelu_tanh(-0.75) == pytest.approx(-0.17, abs=0.005)


@pytest.mark.parametrize("x", [-6.0, -2.5, -0.75, -0.1, 0.3, 1.0, 2.699, 5.0])
def test_gelu_tanh_matches_mp(x):
    assert gelu_tanh(x) == pytest.approx(float(gelu_tanh_mp(x)), rel=1e-13, abs=1e-300)


@pytest.mark.parametrize("x", [-6.0, -2.5, -0.75, 0.3, 1.0, 5.0])
def test_gelu_exact_matches_mp(x):
    assert gelu_exact(x) == pytest.approx(float(gelu_exact_mp(x)), rel=1e-13)


def test_gelu_exact_examples():
    assert gelu_exact(0.0) == 0.0
    assert gelu_exact(1.0) == pytest.approx(0.841345, abs=1e-6)
    assert abs(gelu_exact(10.0) - 10.0) < 1e-9


def test_gelu_exact_alpha():
    assert gelu_exact(1.0, alpha=2.0) == pytest.approx(float(gelu_exact_mp(2.0)) / 2.0, rel=1e-13)
    with pytest.raises(ParameterError):
        gelu_exact(1.0, alpha=0.0)


def test_gelu_derivative_examples():
    assert gelu_derivative_exact(0.0) == 0.5
    assert gelu_derivative_tanh(0.0) == 0.5
    assert gelu_derivative_exact(-1.0) == pytest.approx(-0.0833, abs=1e-4)
    first_term = 1.0 / math.sqrt(2 * math.pi) * math.exp(-0.5)
    assert first_term == pytest.approx(0.241, abs=1e-3)


def test_gelu_derivative_tanh_matches_fd():
    x = np.arange(-500, 501) / 100.0
    h = 1e-5
    fd = (gelu_tanh(x + h) - gelu_tanh(x - h)) / (2 * h)
    assert np.abs(fd - gelu_derivative_tanh(x)).max() < 1e-7


def test_gelu_derivative_negative_region():
    x = np.linspace(-10.0, -0.76, 9241)
    assert (gelu_derivative_tanh(x) < 0).all()


def test_gelu_tanh_far_tail_sign():
    x = np.array([-30.0, -20.0, -12.0])
    assert (gelu_tanh(x) <= 0).all() and np.isfinite(gelu_derivative_tanh(x)).all()


def test_gelu_forms_close():
    x = np.arange(-10000, 10001) / 1000.0
    assert np.abs(gelu_tanh(x) - gelu_exact(x)).max() <= E_MAX
    assert np.abs(gelu_derivative_tanh(x) - gelu_derivative_exact(x)).max() <= 2 * E_PRIME_MAX


def test_frozen_error_bounds_are_oracle_values():
    from oracles import max_abs_gap_mp
    import mpmath as mp

    gap, at = max_abs_gap_mp(gelu_tanh_mp, gelu_exact_mp, 2.699)
    assert float(gap) == pytest.approx(E_MAX, rel=1e-12)
    assert float(at) == pytest.approx(2.69894, abs=1e-5)
    dt = lambda t: mp.diff(gelu_tanh_mp, t)
    de = lambda t: mp.diff(gelu_exact_mp, t)
    gap, _ = max_abs_gap_mp(dt, de, -2.0187)
    assert float(gap) == pytest.approx(E_PRIME_MAX, rel=1e-12)


def test_gelu_bounds():
    x = np.linspace(-10, 10, 200001)
    f = gelu_tanh(x)
    assert (f <= np.maximum(x, 0) + 1e-15).all()
    assert f.min() >= -0.17 - 0.005 - 1e-6
    pos = x >= 0
    assert (f[pos] <= x[pos]).all()
    # "GELU(x) <= x" fails on the negative axis
    assert gelu_tanh(-1.0) > -1.0


def test_mutation_hook_changes_and_restores():
    before = gelu_tanh(1.0)
    with gelu_constants(cubic=0.05):
        assert gelu_tanh(1.0) != before
    assert gelu_tanh(1.0) == before


# -- the zoo ------------------------------------------------------------------

REFERENCE = {
    "relu": lambda x: np.maximum(x, 0),
    "relu6": lambda x: np.minimum(np.maximum(x, 0), 6),
    "leaky_relu": lambda x: np.where(x > 0, x, 0.01 * x),
    "prelu": lambda x: np.where(x > 0, x, 0.25 * x),
    "rrelu": lambda x: np.where(x > 0, x, (1 / 8 + 1 / 3) / 2 * x),
    "elu": lambda x: np.where(x > 0, x, np.exp(x) - 1),
    "celu": lambda x: np.where(x > 0, x, np.exp(x) - 1),
    "selu": lambda x: 1.0507009873554805 * np.where(x > 0, x, 1.6732632423543772 * (np.exp(x) - 1)),
    "sigmoid": lambda x: 1 / (1 + np.exp(-x)),
    "tanh": np.tanh,
    "softplus": lambda x: np.log(1 + np.exp(x)),
    "logsigmoid": lambda x: -np.log(1 + np.exp(-x)),
    "softsign": lambda x: x / (1 + np.abs(x)),
    "tanhshrink": lambda x: x - np.tanh(x),
    "hardtanh": lambda x: np.clip(x, -1, 1),
    "hardsigmoid": lambda x: np.clip(x / 6 + 0.5, 0, 1),
    "hardswish": lambda x: x * np.clip(x + 3, 0, 6) / 6,
    "hardshrink": lambda x: np.where(np.abs(x) > 0.5, x, 0),
    "softshrink": lambda x: np.sign(x) * np.maximum(np.abs(x) - 0.5, 0),
    "gelu": lambda x: 0.5 * x * (1 + np.tanh(np.sqrt(2 / np.pi) * (x + 0.044715 * x ** 3))),
    "gelu_exact": lambda x: np.array([float(gelu_exact_mp(v)) for v in x]),
}


@pytest.mark.parametrize("name", ACTIVATION_NAMES)
def test_forward_matches_reference(name):
    x = np.linspace(-7, 7, 141)
    got = apply_activation(name, Tensor(x)).data
    np.testing.assert_allclose(got, REFERENCE[name](x), rtol=1e-12, atol=1e-12)


def _fd_grid(kind, params):
    x = np.linspace(-7, 7, 701)
    for k in kink_points(kind, params):
        x = x[np.abs(x - k) >= 1e-3]
    return x


@pytest.mark.parametrize("name", ACTIVATION_NAMES)
def test_derivative_matches_fd(name):
    act = make_activation(name)
    x = _fd_grid(act.kind, act.params)
    h = 1e-6
    fd = (apply_activation(act, Tensor(x + h)).data - apply_activation(act, Tensor(x - h)).data) / (2 * h)
    np.testing.assert_allclose(activation_derivative(act, Tensor(x)).data, fd, atol=1e-6)


@pytest.mark.parametrize("name", ACTIVATION_NAMES)
def test_backward_equals_derivative(name):
    x = Tensor(np.linspace(-4, 4, 33) + 0.01, requires_grad=True)
    act = make_activation(name)
    g = backward(tsum(act(x, train=False)))
    np.testing.assert_allclose(g[x], activation_derivative(act, x).data, rtol=1e-14)


def test_spot_values():
    assert apply_activation("relu", Tensor([-2.0])).data[0] == 0.0
    assert apply_activation("tanh", Tensor([0.0])).data[0] == 0.0
    hs = apply_activation("hardswish", Tensor([3.0, -3.0])).data
    assert hs.tolist() == [3.0, 0.0]
    d = activation_derivative("relu", Tensor([5.0, -5.0])).data
    assert d.tolist() == [1.0, 0.0]
    assert activation_derivative("sigmoid", Tensor([0.0])).data[0] == 0.25


def test_kink_conventions():
    d = lambda n, v: activation_derivative(n, Tensor([v])).data[0]
    assert d("relu", 0.0) == 0.0
    assert d("relu6", 0.0) == 0.0 and d("relu6", 6.0) == 0.0
    assert d("hardtanh", 1.0) == 0.0 and d("hardtanh", -1.0) == 0.0
    assert d("hardsigmoid", 3.0) == 0.0 and d("hardsigmoid", -3.0) == 0.0
    assert d("hardswish", -3.0) == 0.0
    assert d("hardshrink", 0.5) == 1.0 and d("softshrink", -0.5) == 1.0


def test_unknown_kind():
    with pytest.raises(ContractError, match="known: .*gelu"):
        parse_kind("swish")


def test_aliases():
    assert parse_kind("GELU") is ActivationKind.GELU_TANH
    assert parse_kind("LeakyReLU") is ActivationKind.LEAKY_RELU


def test_rrelu_bounds_validated():
    with pytest.raises(ParameterError):
        Activation("rrelu", {"lower": 0.4, "upper": 0.3})
    with pytest.raises(ParameterError):
        Activation("rrelu", {"lower": 0.1, "upper": 1.0})


def test_unknown_parameter():
    with pytest.raises(ParameterError):
        Activation("relu", {"slope": 1.0})


def test_rrelu_train_and_eval():
    x = Tensor(-np.ones(1000))
    ev1 = apply_activation("rrelu", x, "eval").data
    ev2 = apply_activation("rrelu", x, "eval").data
    assert np.array_equal(ev1, ev2)
    tr = apply_activation("rrelu", x, "train", rng=3).data
    slopes = -tr
    assert slopes.min() >= 1 / 8 and slopes.max() <= 1 / 3 and np.unique(slopes).size > 900
    # same seed -> derivative uses the forward slopes
    d = activation_derivative("rrelu", x, "train", rng=3).data
    np.testing.assert_array_equal(d, slopes)


def test_rrelu_train_backward_consistent():
    act = make_activation("rrelu")
    x = Tensor(np.linspace(-3, 3, 50), requires_grad=True)
    y = act(x, train=True, rng=np.random.default_rng(9))
    g = backward(tsum(y))[x]
    neg = x.data < 0
    np.testing.assert_allclose(g[neg], y.data[neg] / x.data[neg], rtol=1e-12)


def test_prelu_slope_is_learnable_leaf():
    act = make_activation("prelu")
    assert act.slope.is_leaf and act.slope.requires_grad
    assert act.parameters() == [act.slope]
    x = Tensor(np.array([-2.0, -1.0, 3.0]), requires_grad=True)
    g = backward(tsum(act(x)))
    assert g[act.slope] == pytest.approx(-3.0)
    np.testing.assert_allclose(g[x], [0.25, 0.25, 1.0])


def test_prelu_instances_are_independent():
    a = make_activation("prelu")
    b = make_activation(a)
    assert a.slope is not b.slope


def test_float32_preserved():
    for name in ACTIVATION_NAMES:
        x = Tensor(np.linspace(-3, 3, 7, dtype=np.float32), requires_grad=True)
        y = apply_activation(name, x, "train", rng=0)
        assert y.dtype == np.float32, name
        assert backward(tsum(y))[x].dtype == np.float32, name


@pytest.mark.parametrize("kind", sorted(MONOTONE, key=lambda k: k.value))
@given(a=st.floats(-20, 20), b=st.floats(-20, 20))
def test_monotone_kinds(kind, a, b):
    lo, hi = min(a, b), max(a, b)
    act = Activation(kind)
    x = np.array([lo, hi])
    f = forward_values(act.kind, x, act.params, act._slope(x, False, None))
    assert f[0] <= f[1]


@given(st.floats(-50, 50))
def test_gelu_bounded_by_relu(x):
    assert gelu_tanh(x) <= max(x, 0.0)
    assert gelu_tanh(x) >= -0.1700407506 - 1e-6


@given(st.lists(st.floats(-30, 30), min_size=1, max_size=20))
def test_derivatives_finite(xs):
    x = np.array(xs)
    for kind in ActivationKind:
        act = Activation(kind)
        d = derivative_values(kind, x, act.params, act._slope(x, False, None))
        assert np.isfinite(d).all()
