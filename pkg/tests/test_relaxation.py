import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from archprune.relaxation import (
    BoundParams,
    DimensionError,
    InvalidInputError,
    TempPair,
    bound_constant_C,
    convergence_bound,
    g_max,
    harden_mask,
    relax_mask,
    sigmoid,
    two_temp_grad,
)

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
logits = arrays(np.float64, st.integers(1, 30), elements=finite)
temps = st.floats(1e-2, 1e4, allow_nan=False)


class TestRelaxMask:
    def test_zero_logit_is_half(self):
        np.testing.assert_array_equal(relax_mask([0.0], 1000), [0.5])

    def test_ln3_gives_three_quarters(self):
        np.testing.assert_allclose(relax_mask([math.log(3)], 1), [0.75], rtol=1e-15)

    def test_saturates_to_exactly_one(self):
        assert relax_mask([0.1], 1000)[0] == 1.0
        assert relax_mask([-0.1], 1000)[0] == 0.0

    def test_exact_below_saturation(self):
        assert relax_mask([0.03], 1000)[0] == 1.0 / (1.0 + math.exp(-30.0))

    @pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
    def test_non_finite_rejected(self, bad):
        with pytest.raises(InvalidInputError):
            relax_mask([0.0, bad], 1.0)

    def test_nonpositive_temperature_rejected(self):
        with pytest.raises(InvalidInputError):
            relax_mask([0.0], 0.0)

    @given(logits, temps)
    def test_in_unit_interval(self, w, t):
        v = relax_mask(w, t)
        assert np.all((v >= 0) & (v <= 1))

    @given(logits, temps)
    def test_sign_consistency(self, w, t):
        v = relax_mask(w, t)
        nz = (w != 0) & (np.abs(t * w) > 1e-12)
        assert np.all(np.sign(v[nz] - 0.5) == np.sign(w[nz]))


class TestHardenMask:
    def test_strict_indicator(self):
        np.testing.assert_array_equal(harden_mask([0.3, -0.2, 0.0]), [1, 0, 0])

    def test_all_negative(self):
        np.testing.assert_array_equal(harden_mask([-1, -1]), [0, 0])

    def test_tiny_positive_survives(self):
        np.testing.assert_array_equal(harden_mask([1e-12]), [1])

    def test_rejects_nan(self):
        with pytest.raises(InvalidInputError):
            harden_mask([np.nan])

    @given(arrays(np.float64, st.integers(1, 30), elements=st.floats(-5, 5).filter(lambda x: abs(x) > 1e-3)))
    def test_limit_of_relaxation(self, w):
        np.testing.assert_array_equal((relax_mask(w, 1e6) > 0.5).astype(np.int8), harden_mask(w))


class TestTwoTempGrad:
    def test_unit_slope_at_t4(self):
        np.testing.assert_allclose(two_temp_grad([1.0], [0.0], 4), [1.0])

    def test_scaled(self):
        np.testing.assert_allclose(two_temp_grad([2.0], [0.0], 100), [50.0])

    def test_saturated_slope_vanishes(self):
        # t_s * w = 5000 is far past the clamp, so the slope is exactly zero
        assert abs(two_temp_grad([1.0], [5.0], 1000)[0]) <= 1e-12

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            two_temp_grad([1.0, 2.0], [0.0], 1.0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.5, 50))
    def test_equal_temperatures_is_exact_chain_rule(self, seed, t):
        # L(w) = a . sigmoid(t w) + 0.5 * ||sigmoid(t w) - b||^2, smooth in v
        rng = np.random.default_rng(seed)
        d = 6
        a, b = rng.normal(size=d), rng.uniform(size=d)
        w = rng.uniform(-20, 20, d) / t  # keeps |t w| < 25

        def L(w):
            v = sigmoid(t * w)
            return a @ v + 0.5 * np.sum((v - b) ** 2)

        grad_v = a + (sigmoid(t * w) - b)
        g = two_temp_grad(grad_v, w, t)
        h = 1e-6 / t
        fd = np.array([(L(w + h * e) - L(w - h * e)) / (2 * h) for e in np.eye(d)])
        err = np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12)
        assert err < 1e-4 or np.linalg.norm(g - fd) < 1e-9


class TestBoundConstants:
    def test_C_zero_at_t4(self):
        assert bound_constant_C(4, 4, 0) == pytest.approx(0.0, abs=1e-15)

    def test_C_unit_temps(self):
        assert bound_constant_C(1, 1, 0) == pytest.approx((15 / 16) ** 2, rel=1e-15)
        assert bound_constant_C(1, 1, 0) == pytest.approx(0.87890625)

    def test_gmax_at_zero(self):
        for t in (0.1, 1.0, 1e3):
            assert g_max(t, 0.0) == 0.25

    @given(st.floats(0, 5), st.floats(0.1, 100))
    def test_gmax_range(self, M, t):
        assert 0 <= g_max(t, M) <= 0.25

    @given(st.floats(0.1, 100), st.floats(0.1, 100), st.floats(0, 5))
    def test_C_symmetric(self, a, b, M):
        assert bound_constant_C(a, b, M) == pytest.approx(bound_constant_C(b, a, M), rel=1e-12)

    def test_C_nonnegative_equal_temps_grid(self):
        for t in np.geomspace(0.1, 100, 60):
            for M in np.linspace(0, 5, 51):
                assert bound_constant_C(t, t, M) >= -1e-9 * max(1.0, t**4)

    def test_bound_examples(self):
        assert convergence_bound(1, 1, 1, 0) == 2.0
        assert convergence_bound(1, 1, 0, 123.0) == 1.0
        expected = 0.1 + (1 + math.log(100)) / 100  # 0.156051701859...
        assert convergence_bound(100, 1, 1, 0) == pytest.approx(expected, rel=1e-14)
        assert convergence_bound(100, 1, 1, 0) == pytest.approx(0.15605170185988, rel=1e-12)

    def test_bound_decreasing_in_T(self):
        T = np.arange(3, 100_001)
        vals = 1 / np.sqrt(T) + (1 + np.log(T)) / T  # c = G = 1, C = 0
        assert np.all(np.diff(vals) < 0)
        for c, G, C in [(1.0, 1.0, 0.0), (0.1, 2.0, 5.0), (3.0, 0.5, 100.0)]:
            prev = convergence_bound(3, c, G, C)
            for t in [4, 10, 100, 1000, 10_000, 100_000]:
                cur = convergence_bound(t, c, G, C)
                assert cur < prev
                prev = cur

    def test_bound_rejects_bad_args(self):
        with pytest.raises(InvalidInputError):
            convergence_bound(0, 1, 1, 0)
        with pytest.raises(InvalidInputError):
            convergence_bound(1, 0, 1, 0)

    def test_bound_params(self):
        bp = BoundParams(G=1.0, M=0.0, T=100, c=1.0, t_l=4, t_s=4)
        assert bp.C == pytest.approx(0.0, abs=1e-15)
        assert bp.value == pytest.approx(convergence_bound(100, 1.0, 1.0, 0.0))


def test_temp_pair_ordering():
    TempPair(100, 10)
    with pytest.raises(InvalidInputError):
        TempPair(10, 100)
    with pytest.raises(InvalidInputError):
        TempPair(1, 0)
