import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modscc import tensor as T
from modscc.tensor import NonFiniteError, Parameter, ShapeError, Tape, Tensor

from conftest import naive_conv3x3


def naive_matmul(a, b):
    m, k = len(a), len(a[0])
    n = len(b[0])
    return [[sum(a[i][t] * b[t][j] for t in range(k)) for j in range(n)] for i in range(m)]


class TestTensor:
    def test_product_of_shape_equals_size(self):
        t = Tensor(np.zeros((2, 3, 4)))
        assert np.prod(t.shape) == t.data.size

    def test_integer_input_becomes_float(self):
        assert Tensor([1, 2]).dtype == np.float64
        assert Tensor([1, 2], dtype=np.float32).dtype == np.float32

    def test_does_not_freeze_callers_array(self):
        a = np.ones(3)
        Tensor(a)
        a[0] = 5  # still writable
        assert a[0] == 5

    def test_tensor_is_read_only(self):
        t = Tensor(np.ones(3))
        with pytest.raises(ValueError):
            t.data[0] = 2


class TestMatmul:
    def test_identity(self):
        out = T.matmul(Tensor([[1, 0], [0, 1]]), Tensor([[5, 6], [7, 8]]))
        assert out.data.tolist() == [[5, 6], [7, 8]]

    def test_against_triple_loop(self):
        a, b = [[1, 2], [3, 4]], [[5, 6], [7, 8]]
        expected = naive_matmul(a, b)
        assert expected == [[19, 22], [43, 50]]
        assert T.matmul(Tensor(a), Tensor(b)).data.tolist() == expected

    def test_zero_annihilates(self, rng):
        b = rng.standard_normal((3, 5))
        assert not T.matmul(Tensor(np.zeros((2, 3))), Tensor(b)).data.any()

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
            T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


class TestConv:
    def test_delta_kernel_is_identity(self, rng):
        x = rng.standard_normal((1, 1, 5, 4))
        k = np.zeros((1, 1, 3, 3))
        k[0, 0, 1, 1] = 1
        np.testing.assert_array_equal(T.conv2d(Tensor(x), Tensor(k)).data, x)

    def test_all_ones(self):
        out = T.conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 3, 3)))).data[0, 0]
        oracle = naive_conv3x3(np.ones((1, 1, 3, 3)), np.ones((1, 1, 3, 3)))[0, 0]
        assert oracle[1, 1] == 9 and oracle[0, 0] == 4
        np.testing.assert_array_equal(out, oracle)

    def test_zero_input(self, rng):
        out = T.conv2d(Tensor(np.zeros((2, 3, 4, 4))), Tensor(rng.standard_normal((5, 3, 3, 3))))
        assert not out.data.any()

    def test_random_against_naive_loops(self, rng):
        x = rng.standard_normal((2, 3, 4, 6))
        k = rng.standard_normal((4, 3, 3, 3))
        b = rng.standard_normal(4)
        np.testing.assert_allclose(T.conv2d(Tensor(x), Tensor(k), Tensor(b)).data, naive_conv3x3(x, k, b), atol=1e-12)

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError, match="channel"):
            T.conv2d(Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((1, 3, 3, 3))))

    def test_kernel_must_be_3x3(self):
        with pytest.raises(ShapeError):
            T.conv2d(Tensor(np.ones((1, 1, 4, 4))), Tensor(np.ones((1, 1, 5, 5))))


class TestPooling:
    def test_max_of_window(self):
        out = T.max_pool2(Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]])))
        assert out.data.item() == 4

    def test_ramp(self):
        x = np.arange(16.0).reshape(1, 1, 4, 4)
        # brute-force window scan
        expected = [[max(x[0, 0, 2 * i + a, 2 * j + b] for a in (0, 1) for b in (0, 1)) for j in range(2)] for i in range(2)]
        assert expected == [[5, 7], [13, 15]]
        assert T.max_pool2(Tensor(x)).data[0, 0].tolist() == expected

    def test_constant_input_routes_gradient_to_first_element(self):
        x = Parameter(np.full((1, 1, 4, 4), 2.5))
        with Tape() as tape:
            y = T.max_pool2(x)
            loss = T.sum(y)
        tape.backward(loss)
        assert np.all(y.data == 2.5)
        expected = np.zeros((4, 4))
        expected[::2, ::2] = 1
        np.testing.assert_array_equal(x.grad[0, 0], expected)

    def test_odd_extent_rejected(self):
        with pytest.raises(ShapeError, match="even"):
            T.max_pool2(Tensor(np.ones((1, 1, 3, 4))))

    def test_gap_constant_and_mean(self):
        assert T.global_avg_pool(Tensor(np.full((1, 2, 3, 3), 1.5))).data.tolist() == [[1.5, 1.5]]
        assert T.global_avg_pool(Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))).data.item() == 2.5

    def test_gap_gradient_is_uniform(self):
        x = Parameter(np.random.default_rng(0).standard_normal((2, 3, 4, 5)))
        with Tape() as tape:
            loss = T.sum(T.global_avg_pool(x))
        tape.backward(loss)
        np.testing.assert_allclose(x.grad, 1 / 20)


class TestBatchNorm:
    def _bn(self, x, gamma=1.0, beta=0.0, training=True):
        C = x.shape[1]
        g = Parameter(np.full(C, gamma))
        b = Parameter(np.full(C, beta))
        rm, rv = np.zeros(C), np.ones(C)
        return T.batch_norm(Tensor(x), g, b, rm, rv, training), rm, rv

    def test_standardized_batch_is_fixed_point(self):
        x = np.array([[-1.0], [1.0]])  # mean 0, biased var 1
        out, _, _ = self._bn(x)
        np.testing.assert_allclose(out.data, x, atol=1e-5)

    def test_zero_gamma_gives_beta(self, rng):
        out, _, _ = self._bn(rng.standard_normal((4, 3, 2, 2)), gamma=0.0, beta=0.7)
        np.testing.assert_array_equal(out.data, 0.7)

    def test_two_point_batch(self):
        out, _, _ = self._bn(np.array([[0.0], [2.0]]))
        direct = (np.array([0.0, 2.0]) - 1.0) / math.sqrt(1.0 + 1e-5)
        np.testing.assert_allclose(out.data[:, 0], direct, atol=1e-12)
        np.testing.assert_allclose(out.data[:, 0], [-1, 1], atol=1e-4)

    def test_running_stats_update_and_eval_mode(self):
        x = np.array([[0.0], [2.0]])
        _, rm, rv = self._bn(x)
        assert rm[0] == pytest.approx(0.1 * 1.0)
        assert rv[0] == pytest.approx(0.9 + 0.1 * 2.0)  # unbiased batch variance = 2
        g, b = Parameter(np.ones(1)), Parameter(np.zeros(1))
        out = T.batch_norm(Tensor(np.array([[5.0]])), g, b, rm, rv, training=False)
        assert out.data.item() == pytest.approx((5.0 - rm[0]) / math.sqrt(rv[0] + 1e-5))

    def test_batch_of_one_rejected_in_training(self):
        with pytest.raises(ValueError, match="at least 2"):
            self._bn(np.ones((1, 3)))


class TestActivationsAndLoss:
    def test_leaky_relu_cases(self):
        assert T.leaky_relu(Tensor([-1.0, 0.0, 2.0])).data.tolist() == [-0.01, 0.0, 2.0]
        assert T.leaky_relu(Tensor([-4.0]), 0.5).data.tolist() == [-2.0]

    def test_leaky_relu_gradient(self):
        x = Parameter(np.array([-3.0, 0.0, 2.0]))
        with Tape() as tape:
            loss = T.sum(T.leaky_relu(x))
        tape.backward(loss)
        assert x.grad.tolist() == [0.01, 1.0, 1.0]

    @pytest.mark.parametrize("slope", [0.0, 1.0, -0.1])
    def test_leaky_relu_slope_range(self, slope):
        with pytest.raises(ValueError):
            T.leaky_relu(Tensor([1.0]), slope)

    def test_uniform_logits(self):
        t = np.eye(4)[[0, 1, 2, 3]]
        loss, p = T.softmax_cross_entropy(Tensor(np.zeros((4, 4))), t)
        np.testing.assert_allclose(p.data, 0.25)
        assert loss.item() == pytest.approx(math.log(4), abs=1e-12)
        assert loss.item() == pytest.approx(1.3863, abs=1e-4)

    def test_margin_matches_direct_formula(self):
        z = np.array([[2.0, 0.5, -1.0]])
        loss, _ = T.softmax_cross_entropy(Tensor(z), np.array([[1.0, 0, 0]]))
        p_correct = math.exp(2.0) / (math.exp(2.0) + math.exp(0.5) + math.exp(-1.0))
        assert loss.item() == pytest.approx(-math.log(p_correct), rel=1e-14)

    def test_confident_correct_is_zero_loss(self):
        loss, p = T.softmax_cross_entropy(Tensor(np.array([[800.0, 0.0]])), np.array([[1.0, 0.0]]))
        assert loss.item() == 0.0 and p.data[0, 0] == 1.0

    @pytest.mark.parametrize("bad", [[[1.0, 1.0]], [[0.0, 0.0]], [[0.5, 0.5]]])
    def test_malformed_one_hot(self, bad):
        with pytest.raises(ValueError, match="one-hot"):
            T.cross_entropy(Tensor(np.zeros((1, 2))), np.array(bad))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 6), st.integers(2, 7), st.integers(0, 10_000), st.floats(0.1, 30))
    def test_softmax_rows_sum_to_one_and_loss_non_negative(self, n, k, seed, scale):
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((n, k)) * scale
        t = np.eye(k)[rng.integers(0, k, n)]
        loss, p = T.softmax_cross_entropy(Tensor(z), t)
        np.testing.assert_allclose(p.data.sum(axis=1), 1.0, atol=1e-6)
        assert loss.item() >= 0


class TestTape:
    def test_linear_gradient(self, rng):
        x = rng.standard_normal(5)
        w = Parameter(rng.standard_normal(5), name="w")
        with Tape() as tape:
            loss = T.sum(T.mul(w, Tensor(x)))
        grads = tape.backward(loss)
        np.testing.assert_array_equal(grads["w"], x)

    def test_ops_are_recorded_in_order_and_replayed_once(self):
        w = Parameter(np.ones(2))
        with Tape() as tape:
            loss = T.sum(T.leaky_relu(T.mul(w, Tensor([1.0, -1.0]))))
        assert [r.op for r in tape.records] == ["mul", "leaky_relu", "sum"]
        tape.backward(loss)
        with pytest.raises(RuntimeError, match="consumed"):
            tape.backward(loss)

    def test_unused_parameter_gets_zero_gradient(self):
        used, unused = Parameter(np.ones(2), name="used"), Parameter(np.ones(2), name="unused")
        with Tape() as tape:
            T.sum(unused)  # recorded, but not part of the loss
            loss = T.sum(used)
        grads = tape.backward(loss)
        assert not grads["unused"].any()

    def test_no_tape_no_recording(self):
        w = Parameter(np.ones(2))
        out = T.sum(w)
        assert not out.requires_grad

    def test_non_scalar_loss_rejected(self):
        w = Parameter(np.ones(2))
        with Tape() as tape:
            y = T.mul(w, w)
        with pytest.raises(ShapeError):
            tape.backward(y)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_nan_surfaces_as_error(self):
        with pytest.raises(NonFiniteError):
            T.mul(Tensor([1e308]), Tensor([1e308]))

    def test_frozen_parameter_not_updated(self):
        p = Parameter(np.ones(2), trainable=False)
        with Tape() as tape:
            loss = T.sum(T.mul(p, Tensor([2.0, 3.0])))
        assert not loss.requires_grad
        assert tape.records == []

    def test_weighted_sum(self):
        terms = [Tensor(np.float64(v)) for v in (1, 2, 3)]
        assert T.weighted_sum(terms, [0.5, 0.25, 2.0]).item() == 0.5 + 0.5 + 6.0

    def test_concat_backward_splits(self):
        a, b = Parameter(np.ones((2, 2))), Parameter(np.ones((2, 3)))
        with Tape() as tape:
            loss = T.sum(T.mul(T.concat([a, b]), Tensor(np.arange(5.0))))
        tape.backward(loss)
        np.testing.assert_array_equal(a.grad, [[0, 1], [0, 1]])
        np.testing.assert_array_equal(b.grad, [[2, 3, 4], [2, 3, 4]])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.integers(1, 4),
       st.integers(0, 10_000))
def test_shape_algebra(n, c, h, w, f, seed):
    rng = np.random.default_rng(seed)
    x = Parameter(rng.standard_normal((n, c, 2 * h, 2 * w)))
    k = Parameter(rng.standard_normal((f, c, 3, 3)))
    with Tape() as tape:
        y = T.conv2d(x, k)
        assert y.shape == (n, f, 2 * h, 2 * w)
        z = T.max_pool2(T.leaky_relu(y))
        assert z.shape == (n, f, h, w)
        g = T.global_avg_pool(z)
        assert g.shape == (n, f)
        loss = T.sum(g)
    tape.backward(loss)
    assert x.grad.shape == x.shape and k.grad.shape == k.shape


def test_forward_backward_bitwise_deterministic(rng):
    x = rng.standard_normal((3, 2, 4, 4)).astype(np.float32)

    def run():
        k = Parameter(np.random.default_rng(5).standard_normal((3, 2, 3, 3)).astype(np.float32))
        g, b = Parameter(np.ones(3, np.float32)), Parameter(np.zeros(3, np.float32))
        with Tape() as tape:
            y = T.batch_norm(T.conv2d(Tensor(x), k), g, b, np.zeros(3), np.ones(3), True)
            loss = T.sum(T.global_avg_pool(T.max_pool2(T.leaky_relu(y))))
        tape.backward(loss)
        return loss.data.copy(), k.grad.copy()

    (l1, g1), (l2, g2) = run(), run()
    assert l1.tobytes() == l2.tobytes() and g1.tobytes() == g2.tobytes()
