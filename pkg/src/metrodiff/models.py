"""Problem definitions: diffusion coefficient plus equilibrium density.

A model is the pair ``(D, rho_eq)`` on a declared support, from which
the SDE coefficients follow under detailed balance:

    drift  a(x) = D'(x) + D(x) * (ln rho_eq)'(x)
    noise  b(x) = sqrt(2 D(x))

Model callables are NumPy-vectorized: they accept scalars or arrays of
positions (1-d models) or a length-d state vector (general d).  Outside
the support ``ln_rho_eq`` returns ``-inf``, which the integrator maps to
acceptance probability zero.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import EvalOutsideSupport, GradientUnavailable, NonpositiveDiffusion

__all__ = [
    "DiffusionModel",
    "DerivedCoefficients",
    "derive_coefficients",
    "builtin_models",
    "get_model",
    "constant_model",
    "fd_gradient",
    "FD_REL_STEP",
]

# Relative step for the central-difference gradient fallback; O(step^2)
# accuracy is ample for validating analytic gradients and for user
# models supplied without them.
FD_REL_STEP = 1.0e-5

_LOG_PI = math.log(math.pi)

# Codes for models the compiled/vectorized fast kernels know natively.
KERNEL_CONSTANT = 0
KERNEL_ARCSINE = 1
KERNEL_SINE = 2
KERNEL_GBM = 3
KERNEL_PIECEWISE = 4


@dataclass(frozen=True)
class DiffusionModel:
    """A diffusion problem: D(x), ln rho_eq(x), and their support.

    ``ln_rho_eq`` may be unnormalized: only ratios of the equilibrium
    density enter the acceptance probability.  ``exact_moments`` maps a
    test-function label to ``f(t, x0) -> E f(X_t)`` where a closed form
    is known.  ``kernel_spec`` marks models the compiled kernels can run
    natively.
    """

    label: str
    dim: int
    D: Callable
    ln_rho_eq: Callable
    support: Callable
    grad_D: Optional[Callable] = None
    grad_ln_rho_eq: Optional[Callable] = None
    allow_finite_difference: bool = True
    exact_moments: dict = field(default_factory=dict)
    kernel_spec: Optional[tuple] = None
    description: str = ""

    def diffusion_at(self, x):
        """D(x) for x in support, with the positivity invariant enforced."""
        if not bool(np.all(self.support(x))):
            raise EvalOutsideSupport(f"{self.label}: state {x!r} outside support")
        d = self.D(x)
        if not np.all(np.isfinite(d)) or np.any(np.asarray(d) <= 0.0):
            raise NonpositiveDiffusion(f"{self.label}: D{x!r} = {d!r} is not positive")
        return d


@dataclass(frozen=True)
class DerivedCoefficients:
    """Drift and noise amplitude derived from (D, rho_eq).

    ``b`` is evaluated as ``sqrt(2 * D(x))`` on the same floating path
    everywhere, so ``b(x)**2`` matches ``2*D(x)`` to rounding.
    """

    a: Callable
    b: Callable


def fd_gradient(func, dim=1, rel_step=FD_REL_STEP):
    """Central-difference gradient of ``func`` with a relative step.

    For ``dim == 1`` the result is elementwise and vectorized; for
    larger ``dim`` it takes a length-``dim`` state and returns the
    gradient vector.
    """
    if dim == 1:
        def grad(x):
            x = np.asarray(x, dtype=float)
            step = rel_step * np.maximum(1.0, np.abs(x))
            return (func(x + step) - func(x - step)) / (2.0 * step)
        return grad

    def grad(x):
        x = np.asarray(x, dtype=float)
        out = np.empty(dim)
        for i in range(dim):
            step = rel_step * max(1.0, abs(float(x[i])))
            e = np.zeros(dim)
            e[i] = step
            out[i] = (func(x + e) - func(x - e)) / (2.0 * step)
        return out
    return grad


def derive_coefficients(model: DiffusionModel) -> DerivedCoefficients:
    """Derive the SDE coefficients a and b for a model.

    Uses analytic gradients when the model carries them, otherwise the
    central-difference fallback.  Models that declare finite differences
    invalid (discontinuous D, where the drift is singular) raise
    ``GradientUnavailable`` instead of producing a lie.

    The returned callables are defined wherever their formulas evaluate:
    ``b`` raises ``EvalOutsideSupport`` where ``2 D(x)`` is negative or
    non-finite.  This lets the Euler-Maruyama baseline run models such as
    geometric Brownian motion whose coefficient formulas extend past the
    declared support.
    """
    if (model.grad_D is None or model.grad_ln_rho_eq is None) and \
            not model.allow_finite_difference:
        raise GradientUnavailable(
            f"{model.label}: no analytic gradients and finite differences "
            "are declared invalid for this model")
    grad_d = model.grad_D or fd_gradient(model.D, model.dim)
    grad_lr = model.grad_ln_rho_eq or fd_gradient(model.ln_rho_eq, model.dim)

    def a(x):
        return grad_d(x) + model.D(x) * grad_lr(x)

    def b(x):
        two_d = 2.0 * model.D(x)
        arr = np.asarray(two_d)
        if not np.all(np.isfinite(arr)) or np.any(arr < 0.0):
            raise EvalOutsideSupport(
                f"{model.label}: noise amplitude undefined (2D < 0) at {x!r}")
        return np.sqrt(two_d)

    return DerivedCoefficients(a=a, b=b)


# ---------------------------------------------------------------------------
# builtin benchmark models


def _arcsine_ln_rho(x):
    x = np.asarray(x, dtype=float)
    ok = np.abs(x) < 1.0
    safe = np.where(ok, x, 0.0)
    return np.where(ok, -0.5 * np.log1p(-(safe * safe)) - _LOG_PI, -np.inf)


def _arcsine_grad_ln_rho(x):
    return x / (1.0 - np.asarray(x, dtype=float) ** 2)


def _gbm_ln_rho(x):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0.0, 0.0, -np.inf)


def _piecewise_d(x):
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0.0, 2.0, 1.0)


def _piecewise_ln_rho(x):
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) < 1.0, math.log(0.5), -np.inf)


def _arcsine_model():
    return DiffusionModel(
        label="arcsine",
        dim=1,
        D=lambda x: 0.5 * (1.0 - np.asarray(x, dtype=float) ** 2),
        ln_rho_eq=_arcsine_ln_rho,
        support=lambda x: np.abs(x) < 1.0,
        grad_D=lambda x: -np.asarray(x, dtype=float),
        grad_ln_rho_eq=_arcsine_grad_ln_rho,
        exact_moments={
            # X(t) = sin(B_t + arcsin x0)
            "x": lambda t, x0: x0 * math.exp(-0.5 * t),
            "x**2": lambda t, x0: 0.5 * (1.0 - (1.0 - 2.0 * x0 * x0) * math.exp(-2.0 * t)),
        },
        kernel_spec=(KERNEL_ARCSINE, (0.0, 0.0, 0.0, 0.0)),
        description="D=(1-x^2)/2, rho_eq=1/(pi sqrt(1-x^2)) on |x|<1",
    )


def _sine_model():
    return DiffusionModel(
        label="sine-diffusion",
        dim=1,
        D=lambda x: np.sin(x) + 2.0,
        ln_rho_eq=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        support=lambda x: np.full(np.shape(x), True) if np.ndim(x) else True,
        grad_D=np.cos,
        grad_ln_rho_eq=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        kernel_spec=(KERNEL_SINE, (2.0, 0.0, 0.0, 0.0)),
        description="D=sin(x)+2, uniform (unnormalized) rho_eq on R",
    )


def _gbm_model():
    return DiffusionModel(
        label="gbm",
        dim=1,
        D=lambda x: 0.5 * np.asarray(x, dtype=float) ** 2,
        ln_rho_eq=_gbm_ln_rho,
        support=lambda x: np.asarray(x, dtype=float) > 0.0,
        grad_D=lambda x: np.asarray(x, dtype=float),
        grad_ln_rho_eq=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        exact_moments={
            "x": lambda t, x0: x0 * math.exp(t),
        },
        kernel_spec=(KERNEL_GBM, (0.0, 0.0, 0.0, 0.0)),
        description="geometric Brownian motion: D=x^2/2, rho_eq=1 on x>0",
    )


def _piecewise_model():
    return DiffusionModel(
        label="piecewise",
        dim=1,
        D=_piecewise_d,
        ln_rho_eq=_piecewise_ln_rho,
        support=lambda x: np.abs(x) < 1.0,
        allow_finite_difference=False,  # drift is singular at the jump
        kernel_spec=(KERNEL_PIECEWISE, (1.0, 2.0, -1.0, 1.0)),
        description="D=2 on [0,1), D=1 on (-1,0), rho_eq=0.5 on (-1,1)",
    )


def constant_model(d0=0.5, lo=-math.inf, hi=math.inf, label="constant"):
    """Constant-D model with uniform equilibrium density on (lo, hi).

    With unbounded support this is plain Brownian motion with diffusion
    d0; the Metropolis chain then accepts every proposal and coincides
    with Euler-Maruyama driven by the same stream.
    """
    if d0 <= 0.0:
        raise NonpositiveDiffusion(f"constant model needs D > 0, got {d0}")

    def ln_rho(x):
        x = np.asarray(x, dtype=float)
        return np.where((x > lo) & (x < hi), 0.0, -np.inf)

    return DiffusionModel(
        label=label,
        dim=1,
        D=lambda x: np.full(np.shape(x), d0) if np.ndim(x) else d0,
        ln_rho_eq=ln_rho,
        support=lambda x: (np.asarray(x, dtype=float) > lo) & (np.asarray(x, dtype=float) < hi),
        grad_D=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        grad_ln_rho_eq=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        kernel_spec=(KERNEL_CONSTANT, (d0, lo, hi, 0.0)),
        description=f"constant D={d0}, uniform rho_eq on ({lo}, {hi})",
    )


def builtin_models():
    """The four benchmark models, in their canonical order."""
    return [_arcsine_model(), _sine_model(), _gbm_model(), _piecewise_model()]


def get_model(label: str) -> DiffusionModel:
    """Look a builtin model up by label."""
    for m in builtin_models():
        if m.label == label:
            return m
    known = ", ".join(m.label for m in builtin_models())
    raise KeyError(f"unknown model {label!r}; builtin labels: {known}")
