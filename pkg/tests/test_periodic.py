import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curvediff.periodic import (
    InequalityReport,
    PeriodicField,
    band_limited_field,
    check_h_bound,
    check_iterated_interpolation,
    check_psw,
    derivative,
    finite_difference_derivative,
    h_bound,
    inequality_holds,
    integral,
    spectral_derivative,
)
from curvediff.scenarios import make_curve


def trig_field(n=64, period=2 * math.pi):
    return PeriodicField.from_function(lambda x: np.sin(3 * 2 * np.pi * x / period) + 0.5 * np.cos(2 * np.pi * x / period),
                                       n, period)


class TestPeriodicField:
    def test_grid_and_period(self):
        f = PeriodicField(np.zeros(8), 0.25)
        assert f.n == 8
        assert f.period == pytest.approx(2.0)
        assert np.allclose(f.grid, 0.25 * np.arange(8))

    @pytest.mark.parametrize("values, spacing", [
        (np.zeros((3, 2)), 0.1), (np.array([1.0]), 0.1), (np.array([1.0, np.nan]), 0.1),
        (np.zeros(4), 0.0), (np.zeros(4), -1.0), (np.zeros(4), math.inf),
    ])
    def test_rejects_invalid(self, values, spacing):
        with pytest.raises(ValueError):
            PeriodicField(values, spacing)

    def test_values_are_read_only(self):
        f = PeriodicField(np.ones(4), 1.0)
        with pytest.raises(ValueError):
            f.values[0] = 2.0

    def test_arithmetic(self):
        f = PeriodicField(np.arange(4.0), 1.0)
        assert np.allclose((f * f).values, np.arange(4.0) ** 2)
        assert np.allclose((2 * f - 1).values, 2 * np.arange(4.0) - 1)
        assert np.allclose((-f).values, -np.arange(4.0))


class TestDerivative:
    @pytest.mark.parametrize("order", range(1, 7))
    def test_exact_on_trigonometric_polynomial(self, order):
        period = 7.0
        n = 64
        x = np.arange(n) * period / n
        w = 2 * np.pi / period
        f = PeriodicField(np.sin(3 * w * x), period / n)
        # d^m sin(a x) = a^m sin(a x + m pi / 2)
        expected = (3 * w) ** order * np.sin(3 * w * x + order * np.pi / 2)
        assert np.allclose(derivative(f, order).values, expected, atol=1e-9 * (3 * w) ** order)

    @pytest.mark.parametrize("order", [0, 7, -1])
    def test_order_out_of_range(self, order):
        with pytest.raises(ValueError):
            derivative(trig_field(), order)

    @pytest.mark.parametrize("order", [1, 2, 3, 4])
    def test_agrees_with_finite_difference_oracle(self, order):
        # smooth non-polynomial field; 8th-order stencils on a fine grid
        f = PeriodicField.from_function(lambda x: np.exp(np.sin(x)), 512, 2 * np.pi)
        spectral = derivative(f, order).values
        fd = finite_difference_derivative(f, order).values
        assert np.max(np.abs(spectral - fd)) < 1e-7 * max(1.0, np.max(np.abs(spectral)))

    def test_odd_derivative_drops_nyquist(self):
        n = 16
        f = PeriodicField(np.cos(np.pi * np.arange(n)), 2 * np.pi / n)  # pure Nyquist mode
        assert np.allclose(derivative(f, 1).values, 0.0, atol=1e-12)

    def test_vector_valued_along_axis0(self):
        x = np.arange(32) * 2 * np.pi / 32
        vals = np.column_stack((np.sin(x), np.cos(x)))
        d = spectral_derivative(vals, 1)
        assert np.allclose(d, np.column_stack((np.cos(x), -np.sin(x))), atol=1e-12)


def test_integral_trapezoid_is_spectral():
    f = PeriodicField.from_function(lambda x: np.exp(np.cos(x)), 64, 2 * np.pi)
    # int_0^{2pi} exp(cos x) dx = 2 pi I_0(1)
    from scipy.special import i0

    assert integral(f) == pytest.approx(2 * np.pi * i0(1.0), rel=1e-14)


class TestPSW:
    def test_equality_for_first_harmonic(self):
        period = 5.0
        f = PeriodicField.from_function(lambda x: 3.0 + 2 * np.sin(2 * np.pi * x / period + 0.3), 128, period)
        report = check_psw(f)
        assert report.holds
        assert abs(report.equality_gap_i) <= 1e-8
        assert report.subtracted_mean == pytest.approx(3.0)

    def test_strict_for_higher_harmonic(self):
        f = PeriodicField.from_function(lambda x: np.sin(2 * x), 64, 2 * np.pi)
        report = check_psw(f)
        assert report.holds
        # second harmonic: (i) holds with ratio 1/4
        assert report.lhs_i == pytest.approx(report.rhs_i / 4, rel=1e-12)

    def test_seeded_random_fields(self):
        rng = np.random.default_rng(20240601)
        for _ in range(1000):
            n = int(rng.choice([32, 64, 128]))
            period = float(rng.uniform(0.5, 20))
            f = band_limited_field(rng, n, period, max_mode=int(rng.integers(1, n // 2)), decay=float(rng.uniform(0, 0.5)))
            report = check_psw(f + float(rng.normal()))
            assert report.holds, report.to_dict()

    def test_report_serialises(self):
        report = check_psw(trig_field())
        data = report.to_dict()
        assert data["holds"] is True
        assert {c["name"] for c in data["checks"]} == {"psw_i", "psw_ii"}
        json.dumps(data)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.sampled_from([16, 32, 64]),
       period=st.floats(0.1, 100.0), max_mode=st.integers(1, 7))
def test_psw_property(seed, n, period, max_mode):
    f = band_limited_field(np.random.default_rng(seed), n, period, max_mode=max_mode)
    assert check_psw(f).holds


class TestInterpolation:
    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_random_fields(self, n):
        rng = np.random.default_rng(n)
        for _ in range(250):
            f = band_limited_field(rng, 64, float(rng.uniform(1, 10)), max_mode=12, decay=0.2) + 1.0
            assert check_iterated_interpolation(f, n).holds

    def test_equality_for_single_mode(self):
        f = PeriodicField.from_function(lambda x: np.cos(3 * x), 64, 2 * np.pi)
        r = check_iterated_interpolation(f, 3)
        assert r.lhs == pytest.approx(r.rhs, rel=1e-12)

    @pytest.mark.parametrize("n", [0, 5])
    def test_range(self, n):
        with pytest.raises(ValueError):
            check_iterated_interpolation(trig_field(), n)

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 4), mean=st.floats(-3, 3))
    def test_property(self, seed, n, mean):
        f = band_limited_field(np.random.default_rng(seed), 32, 2 * np.pi, max_mode=10) + mean
        assert check_iterated_interpolation(f, n).holds


class TestHBound:
    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    @pytest.mark.parametrize("modes", [[(2, 0.05, 0.0)], [(3, 0.1, 0.4)], [(2, 0.03, 0.0), (5, 0.01, 1.0)]])
    def test_perturbed_circles(self, n, modes):
        curve = make_curve("fourier_circle", {"r": 1.3, "modes": modes}, 256)
        assert check_h_bound(curve, n).holds

    def test_circle_h_vanishes(self):
        curve = make_curve("circle", {"r": 2.0}, 64)
        r = check_h_bound(curve, 2)
        assert r.lhs < 1e-12
        assert r.holds

    def test_formula(self):
        assert h_bound(4.0, 9.0, 2) == pytest.approx(math.sqrt(4.0) * math.sqrt(9.0) / (2 * math.pi))

    def test_range(self):
        with pytest.raises(ValueError):
            check_h_bound(make_curve("circle", {"r": 1.0}, 32), 5)


def test_inequality_report():
    r = InequalityReport("x", 1.0, 1.0 - 1e-10)
    assert r.holds  # inside relative slack
    assert not InequalityReport("x", 1.0, 0.99).holds
    assert json.loads(r.to_json())["name"] == "x"
    assert inequality_holds(0.0, 0.0)
