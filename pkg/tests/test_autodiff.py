import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nqmix import autodiff as ad
from nqmix.autodiff import NumericsError, Tensor

from conftest import assert_grads_match_fd, leaf


class TestBackwardBasics:
    def test_square(self):
        x = Tensor(np.array([3.0]), requires_grad=True)
        ad.backward(ad.tsum(ad.mul(x, x)))
        npt.assert_allclose(x.grad, [6.0])

    def test_relu_inactive(self):
        x = Tensor(np.array([-1.0]), requires_grad=True)
        ad.backward(ad.tsum(ad.relu(x)))
        npt.assert_allclose(x.grad, [0.0])

    def test_non_scalar_output_rejected(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            ad.backward(ad.relu(x))

    def test_unreached_leaf_keeps_zero_grad(self):
        x = Tensor(np.ones(2), requires_grad=True)
        y = Tensor(np.ones(2), requires_grad=True)
        ad.zero_grad([x, y])
        ad.backward(ad.tsum(x))
        assert y.grad is None  # untouched leaves read as zero
        npt.assert_allclose(x.grad, [1.0, 1.0])

    def test_backward_of_sum_equals_sum_of_backwards(self, rng):
        x = leaf(rng, 4)
        ad.backward(ad.tsum(ad.tanh(x)))
        g_joint = x.grad.copy()
        for _ in range(2):  # same graph twice accumulates
            ad.backward(ad.tsum(ad.tanh(x)))
        npt.assert_allclose(x.grad, 3 * g_joint, rtol=1e-12)

    def test_grad_accumulates_across_reuse_within_graph(self, rng):
        x = leaf(rng, 3)
        y = ad.tsum(ad.mul(x, x) + x)  # x used twice
        ad.backward(y)
        npt.assert_allclose(x.grad, 2 * x.data + 1, rtol=1e-12)

    def test_forward_purity(self, rng):
        x = Tensor(rng.normal(size=(5, 3)))
        w = Tensor(rng.normal(size=(3, 2)))
        a = ad.tanh(ad.matmul(x, w)).data
        b = ad.tanh(ad.matmul(x, w)).data
        assert (a == b).all()


class TestOpGradients:
    def test_elementwise_chain(self, rng):
        x = leaf(rng, 2, 3)
        w = leaf(rng, 3, 4)
        params = {"x": x, "w": w}
        assert_grads_match_fd(
            lambda: ad.mean(ad.sigmoid(ad.matmul(ad.elu(x), w))), params
        )

    def test_abs_and_concat_and_slice(self, rng):
        a = leaf(rng, 3, 2)
        b = leaf(rng, 3, 3)
        params = {"a": a, "b": b}

        def build():
            cat = ad.concat([ad.abs_(a), b], axis=1)
            return ad.tsum(ad.mul(ad.slice_cols(cat, 1, 4), ad.slice_cols(cat, 0, 3)))

        assert_grads_match_fd(build, params)

    def test_bmm_and_reshape(self, rng):
        x = leaf(rng, 4, 3)
        w = leaf(rng, 4, 3, 2)
        params = {"x": x, "w": w}
        assert_grads_match_fd(lambda: ad.mean(ad.bmm(x, w)), params)
        flat = ad.reshape(ad.bmm(x, w), (8,))
        assert flat.data.shape == (8,)

    def test_gather(self, rng):
        x = leaf(rng, 5, 4)
        idx = np.array([0, 3, 1, 1, 2])
        assert_grads_match_fd(lambda: ad.tsum(ad.gather(x, idx)), {"x": x})
        picked = ad.gather(x, idx).data
        npt.assert_allclose(picked, x.data[np.arange(5), idx])

    def test_broadcast_bias(self, rng):
        x = leaf(rng, 6, 3)
        b = leaf(rng, 3)
        assert_grads_match_fd(lambda: ad.mean(ad.relu(x + b)), {"x": x, "b": b})

    def test_many_random_composites(self, rng):
        # composite network gradients vs finite differences, en masse
        for _ in range(25):
            x = leaf(rng, 2, 4)
            w1 = leaf(rng, 4, 5)
            b1 = leaf(rng, 5)
            w2 = leaf(rng, 5, 1)
            params = {"x": x, "w1": w1, "b1": b1, "w2": w2}
            assert_grads_match_fd(
                lambda: ad.tsum(ad.matmul(ad.tanh(ad.matmul(x, w1) + b1), w2)), params
            )


class TestSoftmax:
    def test_symmetric_logits(self):
        npt.assert_allclose(ad.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])

    def test_mask_zeroes_entries(self):
        p = ad.softmax(Tensor([10.0, 10.0, 10.0]), np.array([True, False, True])).data
        npt.assert_allclose(p, [0.5, 0.0, 0.5])

    def test_direct_formula_oracle(self):
        logits = np.array([1.0, 2.0, 3.0])
        e = np.exp(logits - logits.max())
        expected = e / e.sum()
        npt.assert_allclose(ad.softmax(Tensor(logits)).data, expected, atol=1e-15)
        npt.assert_allclose(
            ad.softmax(Tensor(logits)).data,
            [0.09003057317038046, 0.24472847105479767, 0.6652409557748219],
            atol=1e-12,
        )

    def test_all_false_mask_rejected(self):
        with pytest.raises(ValueError, match="no available"):
            ad.softmax(Tensor([1.0, 2.0]), np.array([False, False]))

    def test_gradient_vs_fd(self, rng):
        x = leaf(rng, 3, 4)
        q = Tensor(rng.normal(size=(3, 4)))
        mask = np.ones((3, 4), dtype=bool)
        mask[1, 2] = False
        assert_grads_match_fd(
            lambda: ad.tsum(ad.mul(ad.softmax(x, mask), q)), {"x": x}
        )

    @given(
        logits=arrays(
            np.float64,
            st.integers(2, 6),
            elements=st.floats(-50, 50, allow_nan=False),
        ),
        shift=st.floats(-100, 100, allow_nan=False),
    )
    @settings(max_examples=200, deadline=None)
    def test_sums_to_one_and_shift_invariant(self, logits, shift):
        p = ad.softmax(Tensor(logits)).data
        assert abs(p.sum() - 1.0) <= 1e-12
        assert p.min() >= 0.0
        q = ad.softmax(Tensor(logits + shift)).data
        npt.assert_allclose(p, q, atol=1e-12)


class TestNumericsPolicy:
    def test_nan_input_rejected(self):
        with pytest.raises(NumericsError):
            Tensor(np.array([1.0, np.nan]))

    def test_inf_intermediate_rejected(self):
        y = Tensor(np.array([800.0]), requires_grad=True)
        with np.errstate(over="ignore"), pytest.raises(NumericsError):
            for _ in range(8):  # 800**256 overflows float64
                y = ad.mul(y, y)
