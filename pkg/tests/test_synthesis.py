"""Kernel-to-activation synthesis, sign policies and polynomial fitting."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from revntk.activations import relu
from revntk.hermite import HermiteSeries
from revntk.kernels import (
    LayerScales,
    deep_kernels,
    hermite_kernel_series,
    nngp_1hl,
    ntk_1hl,
    relu_preset_scales,
)
from revntk.synthesis import (
    FitConfig,
    NotPSDError,
    activation_json,
    best_psd_polynomial,
    clip_to_psd,
    fit_polynomial,
    fit_weights,
    format_hermite,
    kernel_parity,
    sign_vector,
    synthesize_activation,
    transform_activation,
)

psd_series = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=9)


def relu4_ntk(c):
    return deep_kernels(relu(), relu_preset_scales(4), 4, c)[1]


class TestSynthesize:
    def test_c2_plus_c_ntk(self):
        b = synthesize_activation([0, 1, 1], "ntk").array
        np.testing.assert_allclose(b, [0, math.sqrt(1 / 2), math.sqrt(1 / 3)], atol=1e-15)
        np.testing.assert_allclose(b, [0, 0.70711, 0.57735], atol=1e-5)

    def test_c2_plus_c_nngp(self):
        np.testing.assert_allclose(synthesize_activation([0, 1, 1], "nngp").array, [0, 1, 1])

    def test_constant(self):
        np.testing.assert_allclose(synthesize_activation([1, 0, 0], "ntk").array, [1, 0, 0])

    def test_negative_coefficient_named(self):
        with pytest.raises(NotPSDError) as err:
            synthesize_activation([0, -1])
        assert err.value.index == 1
        assert "1" in str(err.value)

    def test_unknown_target(self):
        with pytest.raises(ValueError):
            synthesize_activation([1.0], "gp")

    def test_flip_preset(self):
        b = synthesize_activation([1, 1, 1, 1, 1], "nngp", "flip_h2_h3").array
        np.testing.assert_allclose(b, [1, 1, -1, -1, 1])

    def test_explicit_signs(self):
        b = synthesize_activation([1, 4], "nngp", [-1, 1, 1]).array
        np.testing.assert_allclose(b, [-1, 2])

    def test_sign_validation(self):
        with pytest.raises(ValueError):
            sign_vector([1, 0.5], 2)
        with pytest.raises(ValueError):
            sign_vector([1], 2)
        with pytest.raises(ValueError):
            sign_vector("random", 2)

    @settings(max_examples=200, deadline=None)
    @given(psd_series, st.sampled_from(["all_positive", "flip_h2_h3"]))
    def test_round_trip(self, a, signs):
        for target in ("ntk", "nngp"):
            phi = synthesize_activation(a, target, signs)
            np.testing.assert_allclose(hermite_kernel_series(phi, target), a, atol=1e-12, rtol=0)

    @settings(max_examples=30, deadline=None)
    @given(psd_series)
    def test_round_trip_through_kernel_functions(self, a):
        c = np.linspace(-1, 1, 9)
        poly = np.polynomial.polynomial.polyval(c, a)
        unit = LayerScales()
        np.testing.assert_allclose(ntk_1hl(synthesize_activation(a, "ntk"), unit, c), poly,
                                   atol=1e-12)
        np.testing.assert_allclose(nngp_1hl(synthesize_activation(a, "nngp"), unit, c), poly,
                                   atol=1e-12)

    def test_completeness(self):
        """Perturbing one coefficient magnitude moves that kernel coefficient."""
        a = np.array([0.3, 0.8, 0.1, 0.5])
        phi = synthesize_activation(a, "ntk").array
        for k in range(len(a)):
            p = phi.copy()
            p[k] *= 1 + 1e-3
            dev = np.abs(hermite_kernel_series(HermiteSeries(p), "ntk") - a)
            assert dev[k] >= 1e-4
            assert np.all(np.delete(dev, k) < 1e-15)


class TestFit:
    def test_exact_linear(self):
        fit = fit_polynomial(lambda c: 2 * c, FitConfig(degree=3))
        np.testing.assert_allclose(fit.coeffs, [0, 2, 0, 0], atol=1e-12)
        assert fit.residual <= 1e-12

    def test_noisy_quadratic(self):
        noise = np.random.default_rng(1).normal(0, 1e-6, 41)
        fit = fit_polynomial(lambda c: c * c + c + noise, FitConfig(degree=2))
        np.testing.assert_allclose(fit.coeffs, [0, 1, 1], atol=1e-4)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(0, 2), min_size=1, max_size=6))
    def test_exact_on_psd_polynomials(self, a):
        fit = fit_polynomial(lambda c: np.polynomial.polynomial.polyval(c, a), FitConfig())
        assert fit.residual <= 1e-10

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-2, 2), min_size=1, max_size=6))
    def test_exact_on_any_polynomial_unconstrained(self, a):
        cfg = FitConfig(nonnegative=False)
        fit = fit_polynomial(lambda c: np.polynomial.polynomial.polyval(c, a), cfg)
        assert fit.residual <= 1e-10

    def test_relu4_fit(self):
        fit = fit_polynomial(relu4_ntk, FitConfig())
        a = clip_to_psd(fit.coeffs)
        assert np.all(a >= 0)
        err = np.abs(np.polynomial.polynomial.polyval(FitConfig().c_grid, a)
                     - relu4_ntk(FitConfig().c_grid))
        c = FitConfig().c_grid
        assert c[np.argmax(err)] >= 0.9
        assert err[c < 0.5].max() < 0.5 * err.max()

    def test_relu4_fit_reference_coefficients(self):
        """Frozen from the nonnegative weighted fit; the h_0, h_1, h_4, h_5
        magnitudes match the reference activation (1.230, 0.639, 0.539, 0.426) to 1.5%."""
        a = fit_polynomial(relu4_ntk, FitConfig()).coeffs
        np.testing.assert_allclose(a, [1.51668, 0.83924, 0, 0, 1.48738, 1.10313], atol=1e-4)
        b = synthesize_activation(a, "ntk").array
        np.testing.assert_allclose(b[[0, 1, 4, 5]], [1.230, 0.639, 0.539, 0.426], rtol=0.015)

    def test_unconstrained_relu4_fit_leaves_the_cone(self):
        fit = fit_polynomial(relu4_ntk, FitConfig(nonnegative=False))
        with pytest.raises(NotPSDError):
            clip_to_psd(fit.coeffs)

    def test_endpoint_weight(self):
        cfg = FitConfig()
        w = fit_weights(cfg)
        assert w.sum() == pytest.approx(1.0)
        assert w[cfg.c_grid == 1.0].sum() == pytest.approx(0.1)
        assert np.allclose(w[cfg.c_grid < 1], 0.9 / 40)

    def test_endpoint_needs_c_equal_one(self):
        with pytest.raises(ValueError):
            FitConfig(c_grid=np.linspace(-1, 0.9, 10))
        FitConfig(c_grid=np.linspace(-1, 0.9, 10), endpoint_weight_fraction=0.0)

    def test_rank_deficiency_reported(self):
        cfg = FitConfig(degree=5, c_grid=[-1.0, 0.0, 1.0])
        with pytest.raises(np.linalg.LinAlgError):
            fit_polynomial(lambda c: c, cfg)

    def test_parity_detection(self):
        c = np.linspace(-1, 1, 11)
        assert kernel_parity(c, c**3) == 1
        assert kernel_parity(c, c**2 + 1) == 0
        assert kernel_parity(c, c**2 + c) is None
        assert kernel_parity(np.linspace(-1, 0.5, 11), c) is None

    def test_odd_target_gets_odd_fit(self):
        fit = fit_polynomial(lambda c: np.arcsin(c), FitConfig())
        np.testing.assert_array_equal(fit.coeffs[0::2], 0.0)

    def test_minimax_psd_polynomial(self):
        best = best_psd_polynomial(relu4_ntk)
        assert np.all(best.coeffs >= 0)
        ls = fit_polynomial(relu4_ntk, FitConfig())
        assert best.residual <= ls.residual
        exact = best_psd_polynomial(lambda c: 1 + c**3)
        assert exact.residual < 1e-9


class TestClip:
    def test_tiny_negative_zeroed(self):
        np.testing.assert_array_equal(clip_to_psd([1, -1e-14, 0.5], tol=1e-10), [1, 0, 0.5])

    def test_large_negative_rejected(self):
        with pytest.raises(NotPSDError) as err:
            clip_to_psd([1, -0.2], tol=1e-10)
        assert err.value.index == 1

    def test_relative_tolerance(self):
        np.testing.assert_array_equal(clip_to_psd([1e6, -1e-3]), [1e6, 0])
        with pytest.raises(NotPSDError):
            clip_to_psd([1e6, -1e-3], relative=False)


class TestTransform:
    def test_scale(self):
        np.testing.assert_allclose(
            transform_activation(HermiteSeries([0, 1]), "scale", 3).array, [0, 3])

    def test_derivative(self):
        np.testing.assert_allclose(
            transform_activation(HermiteSeries([0, 0, 1]), "derivative").array, [0, math.sqrt(2)])

    def test_reflect(self):
        np.testing.assert_allclose(
            transform_activation(HermiteSeries([1, 1, 1, 1]), "reflect").array, [1, -1, 1, -1])

    def test_errors(self):
        with pytest.raises(ValueError):
            transform_activation(HermiteSeries([1]), "scale")
        with pytest.raises(ValueError):
            transform_activation(HermiteSeries([1]), "square")


class TestComposition:
    """A nonlinear PSD f composed with a nonlinear PSD g always has a positive
    coefficient at degree >= 4, so no such composition equals c^2 + c."""

    @staticmethod
    def random_nonlinear_psd(rng):
        deg = int(rng.integers(2, 7))
        a = rng.uniform(0, 1, deg + 1) * (rng.uniform(size=deg + 1) < 0.6)
        a[int(rng.integers(2, deg + 1))] = rng.uniform(0.05, 1)
        return a

    def test_random_pairs(self):
        rng = np.random.default_rng(0)
        P = np.polynomial.polynomial
        for _ in range(500):
            f, g = self.random_nonlinear_psd(rng), self.random_nonlinear_psd(rng)
            # f(g(c)) as a polynomial in c
            comp = np.zeros(1)
            power = np.ones(1)
            for coef in f:
                comp = P.polyadd(comp, coef * power)
                power = P.polymul(power, g)
            assert np.any(comp[4:] > 0)
            assert not (len(comp) == 3 and np.allclose(comp, [0, 1, 1]))


class TestSerialization:
    def test_activation_json(self):
        phi = synthesize_activation([0, 1, 1], "ntk", "flip_h2_h3")
        d = json.loads(activation_json(phi, "ntk", "flip_h2_h3"))
        assert d["target"] == "ntk"
        assert d["signs"] == [1, 1, -1]
        np.testing.assert_allclose(d["hermite_coeffs"], phi.array)

    def test_format(self):
        phi = HermiteSeries([0.837, 0.271, -0.151, -0.05, 0.0, 0.084])
        assert format_hermite(phi) == ("0.837 h_0 + 0.271 h_1 - 0.151 h_2 - 0.050 h_3 "
                                       "+ 0.084 h_5")
        assert format_hermite(HermiteSeries([0.0])) == "0"
        assert format_hermite(HermiteSeries([-0.5, 0.5]), digits=1) == "-0.5 h_0 + 0.5 h_1"
