import numpy as np
import pytest
from hypothesis import given, strategies as st

from gelulab import tensor as T
from gelulab.errors import ContractError, DimensionError, InternalError, NonFiniteError
from gelulab.tensor import Graph, Tensor, backward, conv2d, finite_diff_grad, grad, matmul
from gelulab.activations import gelu_derivative_exact, gelu_derivative_tanh, gelu_exact, gelu_tanh

from gradcheck import check_grads, project
from oracles import conv2d_loop, matmul_loop


# -- matmul -------------------------------------------------------------------

def test_matmul_identity():
    b = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(matmul(Tensor(np.eye(2)), Tensor(b)).data, b)


def test_matmul_row_by_column():
    assert matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]])).data.tolist() == [[11.0]]


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(4, 5)), rng.normal(size=(5, 3))
    np.testing.assert_allclose(matmul(Tensor(a), Tensor(b)).data, matmul_loop(a, b), rtol=0, atol=1e-12)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


# -- conv2d -------------------------------------------------------------------

def test_conv_identity_kernel():
    x = np.random.default_rng(1).normal(size=(2, 1, 5, 6))
    out = conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1))))
    np.testing.assert_array_equal(out.data, x)


def test_conv_ones_sum_plus_bias():
    out = conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))), Tensor([0.5]))
    assert out.shape == (1, 1, 1, 1)
    assert out.data.item() == 9.5


def test_conv_strided_padded_matches_loop():
    rng = np.random.default_rng(2)
    x, w, b = rng.normal(size=(1, 2, 5, 5)), rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3)
    out = conv2d(Tensor(x), Tensor(w), Tensor(b), stride=2, padding=1)
    assert out.shape == (1, 3, 3, 3)
    np.testing.assert_allclose(out.data, conv2d_loop(x, w, b, 2, 1), rtol=0, atol=1e-12)


@pytest.mark.parametrize("seed", range(50))
def test_conv_random_shapes_match_loop(seed):
    rng = np.random.default_rng(100 + seed)
    n, c = rng.integers(1, 3), rng.integers(1, 5)
    h, w = rng.integers(3, 9), rng.integers(3, 9)
    f = rng.integers(1, 4)
    k = int(rng.choice([1, 2, 3]))
    stride, pad = int(rng.integers(1, 3)), int(rng.integers(0, 2))
    x, wt = rng.normal(size=(n, c, h, w)), rng.normal(size=(f, c, k, k))
    b = rng.normal(size=f) if seed % 2 else None
    out = conv2d(Tensor(x), Tensor(wt), None if b is None else Tensor(b), stride, pad)
    ho = (h + 2 * pad - k) // stride + 1
    assert out.shape == (n, f, ho, (w + 2 * pad - k) // stride + 1)
    np.testing.assert_allclose(out.data, conv2d_loop(x, wt, b, stride, pad), rtol=0, atol=1e-12)


def test_conv_channel_mismatch():
    with pytest.raises(DimensionError, match="channels"):
        conv2d(Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((1, 3, 3, 3))))


def test_conv_kernel_larger_than_input():
    with pytest.raises(DimensionError):
        conv2d(Tensor(np.ones((1, 1, 2, 2))), Tensor(np.ones((1, 1, 3, 3))))


@pytest.mark.parametrize("stride,pad", [(1, 1), (1, 0), (2, 1), (2, 0)])
def test_conv_gradients(stride, pad):
    rng = np.random.default_rng(stride * 10 + pad)
    x, w, b = rng.normal(size=(2, 3, 5, 5)), rng.normal(size=(2, 3, 3, 3)), rng.normal(size=2)
    check_grads(lambda x, w, b: project(conv2d(x, w, b, stride, pad)), [x, w, b])


def test_conv_float32_paths_agree():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(2, 4, 6, 6)).astype(np.float32)
    w = rng.normal(size=(5, 4, 3, 3)).astype(np.float32)
    out = conv2d(Tensor(x), Tensor(w), stride=1, padding=1)
    assert out.dtype == np.float32
    np.testing.assert_allclose(out.data, conv2d_loop(x.astype(float), w.astype(float), None, 1, 1), atol=1e-4)


# -- backward -----------------------------------------------------------------

def test_backward_square():
    x = Tensor(3.0, requires_grad=True)
    g = backward(x * x)
    assert g[x] == pytest.approx(6.0)
    assert x.grad == pytest.approx(6.0)


def test_backward_linear_map():
    w = Tensor(np.eye(2), requires_grad=True)
    z = Tensor([[1.0], [2.0]], requires_grad=True)
    g = backward(T.tsum(matmul(w, z)))
    np.testing.assert_array_equal(g[w], [[1.0, 2.0], [1.0, 2.0]])
    np.testing.assert_array_equal(g[z].ravel(), [1.0, 1.0])


def test_backward_two_layer_dense_tanh():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(5, 3))
    w1, b1 = rng.normal(size=(3, 2)), rng.normal(size=2)
    w2, b2 = rng.normal(size=(2, 1)), rng.normal(size=1)

    def net(w1, b1, w2, b2):
        h = T.tanh(matmul(Tensor(x), w1) + b1)
        return T.tsum(T.tanh(matmul(h, w2) + b2))

    check_grads(net, [w1, b1, w2, b2], rtol=1e-6, atol=1e-9)


def test_backward_dense_error_recursion():
    # dL/dW_i = delta_i z_{i-1}^T, delta_i = (delta_{i+1} W_{i+1}) * phi'(z_i)
    rng = np.random.default_rng(5)
    z0 = rng.normal(size=(1, 3))
    w1, w2 = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    W1, W2 = Tensor(w1, requires_grad=True), Tensor(w2, requires_grad=True)
    a1 = matmul(Tensor(z0), W1)
    loss = T.tsum(matmul(T.tanh(a1), W2))
    g = backward(loss)
    delta2 = np.ones((1, 2))
    delta1 = (delta2 @ w2.T) * (1 - np.tanh(z0 @ w1) ** 2)
    np.testing.assert_allclose(g[W2], np.tanh(z0 @ w1).T @ delta2, atol=1e-14)
    np.testing.assert_allclose(g[W1], z0.T @ delta1, atol=1e-14)


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError, match="scalar"):
        backward(x * 2.0)


def test_backward_detects_cycle():
    a = Tensor(1.0, requires_grad=True)
    b = a * 2.0
    c = b * 3.0
    b._parents = (c,)
    with pytest.raises(InternalError, match="cycle"):
        backward(c)


def test_backward_accumulates_shared_leaf():
    x = Tensor(2.0, requires_grad=True)
    g = backward(x * x + x * 3.0)
    assert g[x] == pytest.approx(7.0)


def test_backward_deterministic():
    rng = np.random.default_rng(6)
    x, w = rng.normal(size=(2, 3, 6, 6)), rng.normal(size=(4, 3, 3, 3))
    runs = []
    for _ in range(2):
        W = Tensor(w, requires_grad=True)
        runs.append(backward(project(T.tanh(conv2d(Tensor(x), W, padding=1))))[W])
    assert np.array_equal(runs[0], runs[1])


def test_graph_is_topological():
    x = Tensor(np.ones(3), requires_grad=True)
    y = T.exp(x) * x + T.tanh(x)
    nodes = Graph(T.tsum(y)).nodes
    pos = {id(n): i for i, n in enumerate(nodes)}
    for n in nodes:
        for p in n._parents:
            assert pos[id(p)] < pos[id(n)]
    assert Graph(T.tsum(y)).leaves() == [x]


def test_no_grad_records_nothing():
    x = Tensor(np.ones(2), requires_grad=True)
    with T.no_grad():
        y = x * 2.0
    assert not y.requires_grad and y.is_leaf


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_forward_raises():
    with pytest.raises(NonFiniteError):
        T.log(Tensor([-1.0, 1.0]))
    with pytest.raises(NonFiniteError):
        Tensor([1.0]) / Tensor([0.0])


def test_precision_dtypes():
    assert T.precision_dtype("analysis") == np.float64
    assert T.precision_dtype("training") == np.float32
    with pytest.raises(ContractError):
        T.precision_dtype("half")


def test_shape_size_invariant():
    t = Tensor(np.zeros((2, 3, 4)))
    assert np.prod(t.shape) == t.data.size == t.size


# -- finite differences -----------------------------------------------------

def test_fd_of_sum_is_ones():
    x = np.random.default_rng(7).normal(size=(3, 4))
    np.testing.assert_allclose(finite_diff_grad(lambda v: v.sum(), x), np.ones_like(x), atol=1e-9)


def test_fd_of_square():
    assert finite_diff_grad(lambda v: (v ** 2).sum(), np.array([3.0]))[0] == pytest.approx(6.0, abs=1e-8)


def test_fd_cross_checks_both_gelu_derivatives():
    xs = np.arange(-3.0, 3.5, 0.5)
    for x in xs:
        num_t = finite_diff_grad(lambda v: gelu_tanh(v).sum(), np.array([x]))[0]
        num_e = finite_diff_grad(lambda v: gelu_exact(v).sum(), np.array([x]))[0]
        assert abs(num_t - gelu_derivative_tanh(x)) < 1e-6
        assert abs(num_e - gelu_derivative_exact(x)) < 1e-6


def test_fd_rejects_bad_step():
    with pytest.raises(ContractError):
        finite_diff_grad(lambda v: v.sum(), np.ones(2), h=0.0)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_fd_propagates_non_finite():
    with pytest.raises(NonFiniteError):
        finite_diff_grad(lambda v: float(np.log(v).sum()), np.array([0.0]))


# -- every op against finite differences --------------------------------------

def _pos(rng, shape):
    return rng.uniform(0.5, 2.0, size=shape)


OPS = {
    "add": (lambda a, b: project(a + b), lambda r: [r.normal(size=(3, 4)), r.normal(size=(4,))]),
    "sub": (lambda a, b: project(a - b), lambda r: [r.normal(size=(3, 1)), r.normal(size=(3, 4))]),
    "mul": (lambda a, b: project(a * b), lambda r: [r.normal(size=(2, 3)), r.normal(size=(1, 3))]),
    "div": (lambda a, b: project(a / b), lambda r: [r.normal(size=(2, 3)), _pos(r, (2, 3))]),
    "neg": (lambda a: project(-a), lambda r: [r.normal(size=(4,))]),
    "power": (lambda a: project(a ** 3.0), lambda r: [r.normal(size=(3, 2))]),
    "exp": (lambda a: project(T.exp(a)), lambda r: [r.normal(size=(5,))]),
    "log": (lambda a: project(T.log(a)), lambda r: [_pos(r, (5,))]),
    "sqrt": (lambda a: project(T.sqrt(a)), lambda r: [_pos(r, (5,))]),
    "tanh": (lambda a: project(T.tanh(a)), lambda r: [r.normal(size=(5,))]),
    "absolute": (lambda a: project(T.absolute(a)), lambda r: [_pos(r, (5,)) * r.choice([-1, 1], 5)]),
    "clamp_min": (lambda a: project(T.clamp_min(a, 0.0)), lambda r: [_pos(r, (6,)) * r.choice([-1, 1], 6)]),
    "where": (lambda a, b: project(T.where(np.array([True, False, True]), a, b)),
              lambda r: [r.normal(size=3), r.normal(size=3)]),
    "sum_axis": (lambda a: project(T.tsum(a, axis=1)), lambda r: [r.normal(size=(3, 4, 2))]),
    "mean_axes": (lambda a: project(T.mean(a, axis=(0, 2), keepdims=True)), lambda r: [r.normal(size=(3, 4, 2))]),
    "reshape": (lambda a: project(T.reshape(a, (6, 2))), lambda r: [r.normal(size=(3, 4))]),
    "transpose": (lambda a: project(T.transpose(a, (2, 0, 1))), lambda r: [r.normal(size=(2, 3, 4))]),
    "take": (lambda a: project(a[np.array([0, 2, 0]), 1:]), lambda r: [r.normal(size=(3, 4))]),
    "l2norm": (lambda a: project(T.l2norm(a, axis=1)), lambda r: [r.normal(size=(3, 4))]),
    "log_softmax": (lambda a: project(T.log_softmax(a, axis=1)), lambda r: [r.normal(size=(3, 5))]),
    "normalize": (lambda a: project(T.normalize(a, (0, 2), 1e-5)[0]), lambda r: [r.normal(size=(4, 3, 2))]),
    "matmul": (lambda a, b: project(matmul(a, b)), lambda r: [r.normal(size=(3, 4)), r.normal(size=(4, 2))]),
    "conv2d": (lambda a, b: project(conv2d(a, b, padding=1)), lambda r: [r.normal(size=(1, 2, 4, 4)),
                                                                          r.normal(size=(2, 2, 3, 3))]),
    "global_avg_pool": (lambda a: project(T.global_avg_pool(a)), lambda r: [r.normal(size=(2, 3, 3, 3))]),
}


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("op", sorted(OPS))
def test_op_gradient_matches_fd(op, seed):
    fn, make = OPS[op]
    check_grads(fn, make(np.random.default_rng(seed)), rtol=1e-6, atol=1e-8)


@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_broadcast_add_grad_shapes(m, n, seed):
    rng = np.random.default_rng(seed)
    a = Tensor(rng.normal(size=(m, n)), requires_grad=True)
    b = Tensor(rng.normal(size=(1, n)), requires_grad=True)
    ga, gb = grad(T.tsum(a + b), [a, b])
    assert ga.shape == (m, n) and gb.shape == (1, n)
    np.testing.assert_array_equal(gb, np.full((1, n), float(m)))
