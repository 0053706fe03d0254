from __future__ import annotations

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tmcdr.errors import OracleError
from tmcdr.optim import (
    AdamState,
    FlatParams,
    adam_step,
    finite_diff_grad,
    hessian_vector_product,
    sgd_step,
)


class TestFlatParams:
    def test_segments_round_trip(self, rng):
        w = rng.normal(size=(3, 3))
        b = rng.normal(size=3)
        p = FlatParams.from_segments([("w", w), ("b", b)])
        np.testing.assert_array_equal(p.segment("w"), w)
        np.testing.assert_array_equal(p.segment("b"), b)
        assert p.size == 12

    def test_values_frozen(self, rng):
        p = FlatParams.from_vector(rng.normal(size=4))
        with pytest.raises(ValueError):
            p.values[0] = 1.0

    def test_layout_must_tile(self):
        with pytest.raises(ValueError, match="offset"):
            FlatParams(np.zeros(4), (("a", 0, (2,)), ("b", 3, (1,))))
        with pytest.raises(ValueError, match="covers"):
            FlatParams(np.zeros(4), (("a", 0, (2,)),))
        with pytest.raises(ValueError, match="duplicate"):
            FlatParams(np.zeros(4), (("a", 0, (2,)), ("a", 2, (2,))))

    def test_unknown_segment(self):
        p = FlatParams.from_vector(np.zeros(2))
        with pytest.raises(KeyError):
            p.segment("nope")

    def test_with_values_keeps_layout(self):
        p = FlatParams.from_vector(np.zeros(3))
        q = p.with_values(np.ones(3))
        assert q.layout == p.layout
        with pytest.raises(ValueError, match="shape"):
            p.with_values(np.ones(4))


class TestSgdStep:
    def test_zero_lr(self, rng):
        p = FlatParams.from_vector(rng.normal(size=5))
        q = sgd_step(p, rng.normal(size=5), 0.0)
        np.testing.assert_array_equal(q.values, p.values)

    def test_known_case(self):
        p = FlatParams.from_vector([1.0, 1.0])
        q = sgd_step(p, [1.0, -1.0], 0.1)
        np.testing.assert_allclose(q.values, [0.9, 1.1], rtol=1e-15)

    def test_matches_elementwise_loop(self, rng):
        values = rng.normal(size=7)
        grad = rng.normal(size=7)
        lr = 0.37
        q = sgd_step(FlatParams.from_vector(values), grad, lr)
        expected = [float(v) - lr * float(g) for v, g in zip(values, grad)]
        np.testing.assert_allclose(q.values, expected, rtol=1e-15)

    def test_negative_lr_rejected(self):
        with pytest.raises(ValueError, match="lr"):
            sgd_step(FlatParams.from_vector([1.0]), [1.0], -0.1)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            sgd_step(FlatParams.from_vector([1.0]), [1.0, 2.0], 0.1)

    @given(
        p=arrays(np.float64, 4, elements=st.floats(-5, 5)),
        g1=arrays(np.float64, 4, elements=st.floats(-5, 5)),
        g2=arrays(np.float64, 4, elements=st.floats(-5, 5)),
    )
    @settings(max_examples=50, deadline=None)
    def test_additivity(self, p, g1, g2):
        lr = 0.05
        joint = sgd_step(FlatParams.from_vector(p), g1 + g2, lr)
        chained = sgd_step(sgd_step(FlatParams.from_vector(p), g1, lr), g2, lr)
        np.testing.assert_allclose(joint.values, chained.values, rtol=0, atol=1e-12)


def adam_oracle_steps(x0, grad_fn, steps, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Scalar Adam recurrence at 50-digit precision (independent oracle)."""
    with mpmath.workdps(50):
        x = mpmath.mpf(x0)
        m = mpmath.mpf(0)
        v = mpmath.mpf(0)
        trajectory = []
        for t in range(1, steps + 1):
            g = grad_fn(x)
            m = beta1 * m + (1 - beta1) * g
            v = beta2 * v + (1 - beta2) * g * g
            m_hat = m / (1 - mpmath.mpf(beta1) ** t)
            v_hat = v / (1 - mpmath.mpf(beta2) ** t)
            x = x - lr * m_hat / (mpmath.sqrt(v_hat) + eps)
            trajectory.append(float(x))
        return trajectory


class TestAdamStep:
    def test_first_step_bias_correction(self):
        state = AdamState.initial(1, lr=0.001)
        _, p = adam_step(state, FlatParams.from_vector([0.0]), [0.5])
        expected = -0.001 * 0.5 / (0.5 + 1e-8)
        assert p.values[0] == pytest.approx(expected, rel=1e-12)

    def test_zero_gradient_is_identity(self, rng):
        state = AdamState.initial(4)
        p = FlatParams.from_vector(rng.normal(size=4))
        state2, q = adam_step(state, p, np.zeros(4))
        np.testing.assert_array_equal(q.values, p.values)
        assert np.all(state2.m == 0) and np.all(state2.v == 0)
        assert state2.step == 1

    def test_quadratic_descent_matches_high_precision_oracle(self):
        # f(x) = x^2, grad = 2x, x0 = 1
        lr = 0.05
        expected = adam_oracle_steps(1.0, lambda x: 2 * x, steps=10, lr=lr)
        state = AdamState.initial(1, lr=lr)
        p = FlatParams.from_vector([1.0])
        got = []
        for _ in range(10):
            state, p = adam_step(state, p, [2.0 * p.values[0]])
            got.append(float(p.values[0]))
        np.testing.assert_allclose(got, expected, rtol=1e-12)
        assert abs(got[-1]) < 1.0

    def test_scale_awareness_of_first_step(self, rng):
        g = rng.normal(size=3)
        p = FlatParams.from_vector(rng.normal(size=3))
        _, small = adam_step(AdamState.initial(3, lr=0.01), p, g)
        _, big = adam_step(AdamState.initial(3, lr=0.01), p, 10.0 * g)
        np.testing.assert_allclose(small.values, big.values, atol=1e-8)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            adam_step(AdamState.initial(2), FlatParams.from_vector([1.0]), [1.0])


class TestFiniteDiffGrad:
    def test_quadratic_gradient(self, rng):
        p = FlatParams.from_vector(rng.normal(size=6))
        grad = finite_diff_grad(lambda q: 0.5 * float(q.values @ q.values), p)
        np.testing.assert_allclose(grad, p.values, rtol=1e-8, atol=1e-10)

    def test_constant_function(self, rng):
        p = FlatParams.from_vector(rng.normal(size=4))
        grad = finite_diff_grad(lambda q: 3.0, p)
        np.testing.assert_array_equal(grad, np.zeros(4))

    def test_truncation_error_is_quadratic_in_eps(self, rng):
        # on exp the central-difference error shrinks ~4x when eps halves
        p = FlatParams.from_vector(rng.normal(size=3) * 0.3)
        exact = np.exp(p.values)
        f = lambda q: float(np.exp(q.values).sum())
        err_coarse = np.abs(finite_diff_grad(f, p, eps=2e-2) - exact).max()
        err_fine = np.abs(finite_diff_grad(f, p, eps=1e-2) - exact).max()
        assert err_coarse / err_fine == pytest.approx(4.0, rel=0.15)

    def test_two_eps_values_agree_on_smooth_loss(self, rng):
        from tmcdr.models import loss_bpr

        u, vp, vn = rng.normal(size=4), rng.normal(size=4), rng.normal(size=4)
        f = lambda q: loss_bpr(q.values, vp, vn).value
        p = FlatParams.from_vector(u)
        g4 = finite_diff_grad(f, p, eps=1e-4)
        g5 = finite_diff_grad(f, p, eps=1e-5)
        np.testing.assert_allclose(g4, g5, rtol=1e-5, atol=1e-9)
        np.testing.assert_allclose(loss_bpr(u, vp, vn).d_user, g5, rtol=1e-6, atol=1e-9)

    def test_non_finite_function_rejected(self):
        p = FlatParams.from_vector([0.0])
        with pytest.raises(OracleError):
            finite_diff_grad(lambda q: float("nan"), p)

    def test_bad_eps(self):
        with pytest.raises(ValueError, match="eps"):
            finite_diff_grad(lambda q: 0.0, FlatParams.from_vector([0.0]), eps=0.0)


class TestHessianVectorProduct:
    def test_quadratic_constant_hessian(self, rng):
        A = rng.normal(size=(5, 5))
        A = A + A.T
        grad = lambda q: A @ q.values
        p = FlatParams.from_vector(rng.normal(size=5))
        v = rng.normal(size=5)
        got = hessian_vector_product(grad, p, v)
        np.testing.assert_allclose(got, A @ v, rtol=1e-9, atol=1e-9)

    def test_zero_vector(self, rng):
        grad = lambda q: q.values**3
        p = FlatParams.from_vector(rng.normal(size=3))
        got = hessian_vector_product(grad, p, np.zeros(3))
        np.testing.assert_array_equal(got, np.zeros(3))

    def test_non_finite_gradient_rejected(self):
        p = FlatParams.from_vector([1.0])
        with pytest.raises(OracleError):
            hessian_vector_product(lambda q: np.array([np.inf]), p, np.ones(1))

    def test_shape_mismatch(self):
        p = FlatParams.from_vector([1.0, 2.0])
        with pytest.raises(ValueError):
            hessian_vector_product(lambda q: q.values, p, np.ones(3))
