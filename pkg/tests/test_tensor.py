import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conther import tensor as T
from conther.optim import Adam, AdamState, adam_step, finite_diff_check
from conther.tensor import GraphError, NumericsError, ShapeError, Tensor, backward


def matmul_oracle(a, b):
    """Naive triple-loop product, independent of the engine."""
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for l in range(k):
                s += a[i, l] * b[l, j]
            out[i, j] = s
    return out


class TestMatmul:
    def test_identity(self):
        a = Tensor(np.eye(2))
        b = Tensor([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(T.matmul(a, b).data, [[1, 2], [3, 4]])

    def test_unit_vector_selection(self):
        out = T.matmul(Tensor([[1.0, 0.0]]), Tensor([[2.0], [5.0]]))
        np.testing.assert_array_equal(out.data, [[2.0]])

    def test_against_triple_loop(self):
        rng = np.random.default_rng(42)
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        got = T.matmul(Tensor(a), Tensor(b)).data
        assert np.abs(got - matmul_oracle(a, b)).max() < 1e-12

    @given(
        m=st.integers(1, 8), k=st.integers(1, 8), n=st.integers(1, 8), seed=st.integers(0, 2**31)
    )
    @settings(max_examples=40, deadline=None)
    def test_random_shapes_vs_oracle(self, m, k, n, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(m, k))
        b = rng.normal(size=(k, n))
        got = T.matmul(Tensor(a), Tensor(b)).data
        assert np.abs(got - matmul_oracle(a, b)).max() < 1e-12

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_gradients_flow_to_both_inputs(self):
        a = Tensor(np.ones((2, 3)), requires_grad=True)
        b = Tensor(np.ones((3, 2)), requires_grad=True)
        backward(T.tsum(T.matmul(a, b)))
        assert a.grad is not None and b.grad is not None
        np.testing.assert_allclose(a.grad, 2.0)
        np.testing.assert_allclose(b.grad, 2.0)


class TestSoftmax:
    def test_symmetry(self):
        out = T.softmax(Tensor([0.0, 0.0]), axis=0)
        np.testing.assert_allclose(out.data, [0.5, 0.5], atol=1e-15)

    def test_hand_evaluated(self):
        # exp(ln 2) = 2, exp(0) = 1 -> [2/3, 1/3]
        out = T.softmax(Tensor([math.log(2.0), 0.0]), axis=0)
        np.testing.assert_allclose(out.data, [2.0 / 3.0, 1.0 / 3.0], atol=1e-15)

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=9), st.floats(-30, 30))
    @settings(max_examples=60, deadline=None)
    def test_shift_invariance_and_row_sum(self, xs, c):
        x = np.array(xs)
        s1 = T.softmax(Tensor(x), axis=0).data
        s2 = T.softmax(Tensor(x + c), axis=0).data
        assert abs(s1.sum() - 1.0) < 1e-12
        assert np.abs(s1 - s2).max() < 1e-12

    def test_rows_sum_to_one_2d(self):
        rng = np.random.default_rng(7)
        x = rng.normal(scale=30.0, size=(5, 6))
        for axis in (0, 1):
            s = T.softmax(Tensor(x), axis=axis).data
            np.testing.assert_allclose(s.sum(axis=axis), 1.0, atol=1e-12)

    def test_axis_out_of_bounds(self):
        with pytest.raises(ShapeError):
            T.softmax(Tensor(np.zeros((2, 2))), axis=2)


class TestLayerNorm:
    def test_zero_variance_row(self):
        out = T.layer_norm(Tensor([[1.0, 1.0, 1.0]]), Tensor(np.ones(3)), Tensor(np.zeros(3)))
        np.testing.assert_array_equal(out.data, [[0.0, 0.0, 0.0]])

    def test_already_normalized_row(self):
        # mean 0, population std 1: the reference formula returns it unchanged
        out = T.layer_norm(Tensor([[-1.0, 1.0]]), Tensor(np.ones(2)), Tensor(np.zeros(2)))
        np.testing.assert_allclose(out.data, [[-1.0, 1.0]], atol=1e-12)

    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=8), st.integers(0, 2**31))
    @settings(max_examples=60, deadline=None)
    def test_pre_affine_mean_zero_unit_var(self, xs, seed):
        x = np.array([xs])
        out = T.layer_norm(Tensor(x), Tensor(np.ones(x.shape[1])), Tensor(np.zeros(x.shape[1])))
        assert abs(out.data.mean()) < 1e-10
        if x.var() >= T.LAYERNORM_EPS:
            assert abs(out.data.var() - 1.0) < 1e-10

    def test_gain_bias_shape_check(self):
        with pytest.raises(ShapeError):
            T.layer_norm(Tensor(np.zeros((2, 3))), Tensor(np.ones(2)), Tensor(np.zeros(3)))


class TestBackward:
    def test_square_analytic(self):
        x = Tensor(3.0, requires_grad=True)
        backward(T.mul(x, x))
        np.testing.assert_allclose(x.grad, 6.0)

    def test_matmul_sum_vs_finite_differences(self):
        rng = np.random.default_rng(3)
        x = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        w = Tensor(rng.normal(size=(3, 2)))

        def f(params):
            return T.tsum(T.matmul(params[0], w))

        assert finite_diff_check(f, [x], eps=1e-6) < 1e-5

    def test_non_scalar_output_rejected(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        with pytest.raises(GraphError):
            backward(T.mul(x, x))

    def test_accumulation_without_reset(self):
        x = Tensor(2.0, requires_grad=True)
        backward(T.mul(x, x))
        backward(T.mul(x, x))
        np.testing.assert_allclose(x.grad, 8.0)
        x.zero_grad()
        backward(T.mul(x, x))
        np.testing.assert_allclose(x.grad, 4.0)

    def test_composite_ops_vs_finite_differences(self):
        rng = np.random.default_rng(11)
        x = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
        gain = Tensor(rng.normal(size=5), requires_grad=True)
        bias = Tensor(rng.normal(size=5), requires_grad=True)

        def f(params):
            h = T.layer_norm(params[0], params[1], params[2])
            h = T.softmax(h, axis=1)
            h = T.tanh(h)
            h = T.softplus(h)
            return T.tmean(T.mul(h, h))

        assert finite_diff_check(f, [x, gain, bias], eps=1e-6) < 1e-5

    def test_slicing_concat_transpose_gradients(self):
        rng = np.random.default_rng(5)
        x = Tensor(rng.normal(size=(4, 6)), requires_grad=True)

        def f(params):
            p = params[0]
            left = p[:, :3]
            right = p[:, 3:]
            cat = T.concat([T.tanh(left), right], axis=1)
            tr = T.transpose(cat, (1, 0))
            return T.tmean(T.mul(tr, tr))

        assert finite_diff_check(f, [x], eps=1e-6) < 1e-6

    def test_minimum_gradient_routing(self):
        a = Tensor([1.0, 5.0], requires_grad=True)
        b = Tensor([2.0, 3.0], requires_grad=True)
        backward(T.tsum(T.minimum(a, b)))
        np.testing.assert_array_equal(a.grad, [1.0, 0.0])
        np.testing.assert_array_equal(b.grad, [0.0, 1.0])


def scalar_adam_oracle(p0, g, steps, lr, b1=0.9, b2=0.999, eps=1e-8):
    """Textbook Adam on a single float, in plain python arithmetic."""
    p, m, v = p0, 0.0, 0.0
    for t in range(1, steps + 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        p -= lr * mhat / (math.sqrt(vhat) + eps)
    return p


class TestAdam:
    def test_first_step_magnitude(self):
        p = Tensor(np.zeros(4), requires_grad=True)
        state = AdamState.for_params([p])
        adam_step([p], [np.ones(4)], state, lr=1e-3)
        np.testing.assert_allclose(np.abs(p.data), 1e-3, atol=1e-6)
        assert state.step_count == 1

    def test_zero_gradient_keeps_params(self):
        p = Tensor([1.0, -2.0], requires_grad=True)
        state = AdamState.for_params([p])
        adam_step([p], [np.zeros(2)], state, lr=1e-3)
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_two_steps_vs_scalar_oracle(self):
        for g in (0.5, -1.25, 3.0):
            p = Tensor([0.7], requires_grad=True)
            state = AdamState.for_params([p])
            for _ in range(2):
                adam_step([p], [np.full(1, g)], state, lr=1e-2)
            expected = scalar_adam_oracle(0.7, g, steps=2, lr=1e-2)
            assert abs(p.data[0] - expected) < 1e-12

    def test_nan_gradient_diagnostics(self):
        p = Tensor([1.0], requires_grad=True)
        state = AdamState.for_params([p])
        state.step_count = 6
        with pytest.raises(NumericsError, match=r"weights.*step 7"):
            adam_step([p], [np.array([np.nan])], state, lr=1e-3, names=["weights"])

    def test_deterministic_trajectories(self):
        def run():
            rng = np.random.default_rng(123)
            p = Tensor(rng.normal(size=8), requires_grad=True)
            opt = Adam([p], lr=1e-3)
            for _ in range(10):
                opt.zero_grad()
                backward(T.tsum(T.mul(p, p)))
                opt.step()
            return p.data.tobytes()

        assert run() == run()


class TestFiniteDiffCheck:
    def test_quadratic_form(self):
        rng = np.random.default_rng(9)
        a = rng.normal(size=(4, 4))
        a = a + a.T
        x = Tensor(rng.normal(size=(4, 1)), requires_grad=True)

        def f(params):
            return T.tsum(T.matmul(T.transpose(params[0], (1, 0)), T.matmul(Tensor(a), params[0])))

        assert finite_diff_check(f, [x], eps=1e-6) < 1e-7

    def test_layer_norm_composite(self):
        rng = np.random.default_rng(21)
        x = Tensor(rng.normal(size=(2, 6)), requires_grad=True)
        gain = Tensor(rng.normal(size=6), requires_grad=True)
        bias = Tensor(rng.normal(size=6), requires_grad=True)

        def f(params):
            h = T.layer_norm(params[0], params[1], params[2])
            return T.tmean(T.mul(h, h))

        assert finite_diff_check(f, [x, gain, bias], eps=1e-6) < 1e-5

    def test_constant_function_zero_gradient(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        c = Tensor([3.0])

        def f(params):
            return T.tsum(T.mul(c, c))

        assert finite_diff_check(f, [x]) == 0.0
