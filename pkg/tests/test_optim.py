import numpy as np
import pytest
from hypothesis import given, strategies as st

from gelulab.errors import DimensionError, NonFiniteError, ParameterError
from gelulab.optim import SGD, Adam, AdamState, SgdConfig, adam_step, sgd_step
from gelulab.tensor import Tensor, backward, tsum

from oracles import adam_two_steps


def test_sgd_examples():
    assert sgd_step([np.array(1.0)], [np.array(0.0)], SgdConfig(0.5))[0] == 1.0
    assert sgd_step([np.array(1.0)], [np.array(2.0)], SgdConfig(0.1))[0] == pytest.approx(0.8)


def test_sgd_quadratic_bowl():
    theta = np.array(1.0)
    cfg = SgdConfig(0.4)
    for _ in range(50):
        (theta,) = sgd_step([theta], [2 * theta], cfg)
    assert abs(theta) < 1e-4
    assert theta == pytest.approx(0.2 ** 50, rel=1e-9)


def test_sgd_shape_mismatch():
    with pytest.raises(DimensionError):
        sgd_step([np.zeros(2)], [np.zeros(3)], SgdConfig())
    with pytest.raises(ParameterError):
        SgdConfig(0.0)


def test_adam_first_step():
    state = AdamState()
    state, (theta,) = adam_step(state, [np.array(0.0)], [np.array(1.0)])
    assert state.t == 1
    assert state.m[0] == pytest.approx(0.1) and state.v[0] == pytest.approx(0.001)
    assert theta == pytest.approx(-0.001 / (1 + 1e-8), rel=1e-12)


def test_adam_zero_gradient():
    state = AdamState()
    theta = [np.array([5.0, -2.0])]
    for _ in range(3):
        state, theta = adam_step(state, theta, [np.zeros(2)])
    np.testing.assert_array_equal(theta[0], [5.0, -2.0])
    # moments left over from a nonzero step decay geometrically under g = 0
    state, _ = adam_step(state, theta, [np.ones(2)])
    m0, v0 = state.m[0].copy(), state.v[0].copy()
    state, _ = adam_step(state, theta, [np.zeros(2)])
    np.testing.assert_allclose(state.m[0], 0.9 * m0)
    np.testing.assert_allclose(state.v[0], 0.999 * v0)


def test_adam_two_steps_match_unrolled():
    state = AdamState()
    theta = [np.array(0.3)]
    state, theta = adam_step(state, theta, [np.array(1.0)])
    state, theta = adam_step(state, theta, [np.array(1.0)])
    ref, m, v = adam_two_steps(0.3, 1.0, 1.0)
    assert abs(theta[0] - ref) <= 1e-12
    assert abs(state.m[0] - m) <= 1e-12 and abs(state.v[0] - v) <= 1e-12
    assert state.t == 2


def test_adam_three_step_moment_sum():
    g = [0.5, -2.0, 1.5]
    state = AdamState()
    theta = [np.zeros(())]
    for gk in g:
        state, theta = adam_step(state, theta, [np.array(gk)])
    m_ref = 0.1 * sum(0.9 ** (3 - k) * gk for k, gk in enumerate(g, start=1))
    assert abs(state.m[0] - m_ref) < 1e-10


def test_adam_defaults():
    s = AdamState()
    assert (s.beta1, s.beta2, s.epsilon, s.eta) == (0.9, 0.999, 1e-8, 1e-3)


def test_adam_non_finite_gradient():
    state = AdamState()
    with pytest.raises(NonFiniteError):
        adam_step(state, [np.zeros(2)], [np.array([1.0, np.nan])])
    assert state.t == 0


def test_adam_validation():
    with pytest.raises(ParameterError):
        AdamState(beta1=1.0)
    with pytest.raises(ParameterError):
        AdamState(epsilon=0.0)


@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_adam_first_step_scale_invariant(g, c):
    _, (a,) = adam_step(AdamState(epsilon=1e-12), [np.array(0.0)], [np.array(g)])
    _, (b,) = adam_step(AdamState(epsilon=1e-12), [np.array(0.0)], [np.array(c * g)])
    assert a == pytest.approx(b, rel=1e-6)
    assert abs(a) <= 1e-3 + 1e-12


def test_optimizer_classes_update_tensors():
    w = Tensor(np.array([1.0, -1.0]), requires_grad=True)
    opt = SGD([w], lr=0.5)
    backward(tsum(w * w))
    opt.step()
    np.testing.assert_allclose(w.data, [0.0, 0.0])
    w2 = Tensor(np.array([1.0]), requires_grad=True)
    adam = Adam([w2], lr=0.1)
    for _ in range(3):
        adam.zero_grad()
        backward(tsum(w2 * w2))
        adam.step()
    assert w2.data[0] < 1.0 and adam.state.t == 3
