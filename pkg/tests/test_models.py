"""Model definitions, derived coefficients and gradient fallbacks."""

import math

import numpy as np
import pytest

from metrodiff import (EvalOutsideSupport, GradientUnavailable,
                       NonpositiveDiffusion, builtin_models, constant_model,
                       derive_coefficients, get_model)
from metrodiff.models import FD_REL_STEP, fd_gradient


def test_builtin_labels_and_values():
    labels = [m.label for m in builtin_models()]
    assert labels == ["arcsine", "sine-diffusion", "gbm", "piecewise"]
    piece = get_model("piecewise")
    assert float(piece.D(-0.5)) == 1.0
    assert float(piece.D(0.5)) == 2.0
    arcsine = get_model("arcsine")
    assert not bool(arcsine.support(1.5))
    assert bool(arcsine.support(0.99))
    assert float(get_model("gbm").D(2.0)) == 2.0


def test_unknown_label():
    with pytest.raises(KeyError):
        get_model("nope")


def test_arcsine_drift_closed_form():
    # a(x) = grad D + D grad ln rho collapses to -x/2
    coeffs = derive_coefficients(get_model("arcsine"))
    assert coeffs.a(0.5) == pytest.approx(-0.25, abs=1e-12)
    xs = np.linspace(-0.9, 0.9, 181)
    assert np.max(np.abs(coeffs.a(xs) + xs / 2)) < 1e-8


def test_constant_model_zero_drift():
    coeffs = derive_coefficients(constant_model(0.7))
    xs = np.linspace(-3, 3, 31)
    assert np.max(np.abs(coeffs.a(xs))) == 0.0


def test_sine_drift_at_zero():
    coeffs = derive_coefficients(get_model("sine-diffusion"))
    assert float(coeffs.a(0.0)) == pytest.approx(1.0, abs=1e-12)


def test_gbm_drift_is_x_everywhere():
    # the coefficient formulas extend past the declared support, which is
    # what lets the Euler-Maruyama baseline cross zero like the plain SDE
    coeffs = derive_coefficients(get_model("gbm"))
    for x in (2.0, 0.5, -1.5):
        assert float(coeffs.a(x)) == pytest.approx(x)
    assert float(coeffs.b(-2.0)) == 2.0


def test_noise_amplitude_matches_sqrt_2d_exactly():
    for model in builtin_models():
        if not model.allow_finite_difference and model.grad_D is None:
            continue
        coeffs = derive_coefficients(model)
        xs = np.linspace(0.05, 0.9, 40) if model.label == "gbm" else \
            np.linspace(-0.9, 0.9, 40)
        assert np.array_equal(coeffs.b(xs), np.sqrt(2.0 * model.D(xs)))


def test_noise_amplitude_outside_domain_raises():
    coeffs = derive_coefficients(get_model("arcsine"))
    with pytest.raises(EvalOutsideSupport):
        coeffs.b(1.5)


def test_piecewise_refuses_finite_differences():
    with pytest.raises(GradientUnavailable):
        derive_coefficients(get_model("piecewise"))


def test_analytic_gradients_match_finite_differences(rng_np):
    # spot the analytic gradients against O(step^2) central differences
    tol = 10.0 * FD_REL_STEP ** 2
    for model in builtin_models():
        if model.grad_D is None:
            continue
        if model.label == "arcsine":
            xs = rng_np.uniform(-0.9, 0.9, 100)
        elif model.label == "gbm":
            xs = rng_np.uniform(0.1, 3.0, 100)
        else:
            xs = rng_np.uniform(-5.0, 5.0, 100)
        fd_d = fd_gradient(model.D)
        assert np.max(np.abs(model.grad_D(xs) - fd_d(xs))) < tol
        fd_l = fd_gradient(model.ln_rho_eq)
        # ln rho gradients blow up at the arcsine boundary; stay interior
        assert np.max(np.abs(model.grad_ln_rho_eq(xs) - fd_l(xs))) < \
            (1e-6 if model.label == "arcsine" else tol)


def test_fd_gradient_multidimensional():
    grad = fd_gradient(lambda v: float(v[0] ** 2 + 3.0 * v[1]), dim=2)
    g = grad(np.array([1.5, -2.0]))
    assert g == pytest.approx([3.0, 3.0], abs=1e-9)


def test_ln_rho_is_minus_inf_outside_support():
    arcsine = get_model("arcsine")
    assert float(arcsine.ln_rho_eq(1.2)) == -math.inf
    assert math.isfinite(float(arcsine.ln_rho_eq(0.3)))
    gbm = get_model("gbm")
    assert float(gbm.ln_rho_eq(-1.0)) == -math.inf


def test_diffusion_at_guards():
    arcsine = get_model("arcsine")
    with pytest.raises(EvalOutsideSupport):
        arcsine.diffusion_at(1.5)
    with pytest.raises(NonpositiveDiffusion):
        constant_model(0.0)


def test_exact_moments():
    arcsine = get_model("arcsine")
    assert arcsine.exact_moments["x"](1.0, 0.5) == pytest.approx(
        0.5 * math.exp(-0.5))
    assert arcsine.exact_moments["x**2"](1.0, 0.5) == pytest.approx(
        0.5 - 0.25 * math.exp(-2.0))
    gbm = get_model("gbm")
    assert gbm.exact_moments["x"](1.0, 1.0) == pytest.approx(math.e)


def test_model_functions_vectorize():
    for model in builtin_models():
        xs = np.linspace(0.1, 0.8, 7) if model.label == "gbm" else \
            np.linspace(-0.8, 0.8, 7)
        assert np.shape(model.D(xs)) == xs.shape
        assert np.shape(model.ln_rho_eq(xs)) == xs.shape
        assert np.shape(model.support(xs)) == xs.shape
