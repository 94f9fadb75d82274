"""Metropolized integrator and Euler-Maruyama baseline.

The Metropolis scheme proposes a pure-diffusion Gaussian move and
accepts or rejects it against the equilibrium density, so the chain
satisfies detailed balance with respect to rho_eq exactly; the drift
enters only through the rejections.  All randomness is drawn from
counter-based per-trajectory streams (see :mod:`metrodiff.rng`), which
makes single steps, full trajectories, and parallel ensembles
reproducible bit-for-bit.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _pykernel, backend
from .errors import (EvalOutsideSupport, NonIntegerStepCount,
                     NonpositiveDiffusion)
from .models import DiffusionModel, derive_coefficients
from .rng import RngStream

__all__ = [
    "ChainState",
    "StepOutcome",
    "EnsembleStats",
    "propose",
    "proposal_density",
    "log_proposal_density",
    "acceptance_prob",
    "mh_step",
    "em_step",
    "simulate_trajectory",
    "simulate_ensemble",
    "ensemble_final_positions",
    "steps_for_horizon",
    "detailed_balance_log_residual",
    "SCHEMES",
]

SCHEMES = ("mh", "em")

_LOG_4PI = math.log(4.0 * math.pi)

# trajectories per work unit; fixed so results never depend on threading
_BLOCK = 1 << 16


@dataclass
class ChainState:
    """Current chain position and step count."""
    x: object
    step_index: int = 0


@dataclass
class StepOutcome:
    """Result of one integrator step."""
    next: object
    proposal: object
    alpha: float
    accepted: bool


@dataclass(frozen=True)
class EnsembleStats:
    """Monte Carlo estimate of E f(X_T) over independent trajectories."""
    mean: float
    stderr: float
    n_traj: int
    scheme: str
    h: float
    T: float


def _check_scheme(scheme):
    s = scheme.lower()
    if s not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    return s


def steps_for_horizon(T, h):
    """Number of steps N with N*h = T; the grid must divide exactly.

    T/h is required to sit within half an ulp of an integer, the
    floating-point reading of an exactly uniform grid t_k = k h,
    t_N = T.
    """
    if h <= 0.0 or T <= 0.0:
        raise NonIntegerStepCount(f"need T, h > 0, got T={T}, h={h}")
    r = T / h
    n = round(r)
    if n < 1 or abs(r - n) > 0.5 * np.spacing(max(abs(r), 1.0)):
        raise NonIntegerStepCount(
            f"T={T} is not an integer multiple of h={h} (T/h={r!r})")
    return int(n)


def _squared_dist(x, y, dim):
    if dim == 1:
        d = float(y) - float(x)
        return d * d
    d = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
    return float(np.dot(d, d))


def propose(model: DiffusionModel, x, h, rng: RngStream):
    """Trial move x -> x + sqrt(2 D(x)) * dB with dB ~ N(0, h I_d).

    Consumes exactly d normal variates (one stream slot).
    """
    d_x = float(model.diffusion_at(x))
    z = rng.next_normals(model.dim)
    sigma = math.sqrt(2.0 * d_x) * math.sqrt(h)
    if model.dim == 1:
        return float(x) + sigma * float(z[0])
    return np.asarray(x, dtype=float) + sigma * z


def log_proposal_density(model: DiffusionModel, x, y, h):
    """log q_h(x, y) for the Gaussian trial kernel centered at x."""
    d_x = float(model.diffusion_at(x))
    r2 = _squared_dist(x, y, model.dim)
    return -0.5 * model.dim * (_LOG_4PI + math.log(h * d_x)) - r2 / (4.0 * h * d_x)


def proposal_density(model: DiffusionModel, x, y, h):
    """Transition density q_h(x, y) = (4 pi h D(x))^(-d/2) exp(-|x-y|^2 / 4hD(x))."""
    return math.exp(log_proposal_density(model, x, y, h))


def _log_ratio(model, x, d_x, lnr_x, y, h):
    """log of the Metropolis-Hastings ratio q(y,x) rho(y) / q(x,y) rho(x).

    Simplified so the (4 pi h)^{d/2} prefactors cancel analytically;
    -inf when y is outside the support.
    """
    if not bool(np.all(model.support(y))):
        return -math.inf
    d_y = float(model.D(y))
    if not (math.isfinite(d_y) and d_y > 0.0):
        raise NonpositiveDiffusion(f"{model.label}: D({y!r}) = {d_y} inside support")
    lnr_y = float(model.ln_rho_eq(y))
    r2 = _squared_dist(x, y, model.dim)
    return (0.5 * model.dim * math.log(d_x / d_y)
            + (r2 / (4.0 * h)) * (1.0 / d_x - 1.0 / d_y)
            + lnr_y - lnr_x)


def acceptance_prob(model: DiffusionModel, x, y, h):
    """Metropolis-Hastings acceptance probability alpha_h(x, y).

    Computed in log space (the densities themselves underflow for small
    h); zero when the proposal is outside the support.
    """
    d_x = float(model.diffusion_at(x))
    lnr_x = float(model.ln_rho_eq(x))
    log_ratio = _log_ratio(model, x, d_x, lnr_x, y, h)
    return math.exp(min(log_ratio, 0.0))


def mh_step(model: DiffusionModel, s: ChainState, h, rng: RngStream) -> StepOutcome:
    """One Metropolis step: propose, then accept iff xi < alpha.

    Consumes exactly d + 1 variates (d normals then one uniform, a
    single stream slot).
    """
    x = s.x
    dim = model.dim
    d_x = float(model.diffusion_at(x))
    lnr_x = float(model.ln_rho_eq(x))
    z, xi = rng.next_step(dim)
    sigma = math.sqrt(2.0 * d_x) * math.sqrt(h)
    if dim == 1:
        y = float(x) + sigma * float(z[0])
    else:
        y = np.asarray(x, dtype=float) + sigma * z
    alpha = math.exp(min(_log_ratio(model, x, d_x, lnr_x, y, h), 0.0))
    accepted = xi < alpha
    return StepOutcome(next=y if accepted else x, proposal=y, alpha=alpha,
                       accepted=accepted)


def em_step(model: DiffusionModel, coeffs, s: ChainState, h, rng: RngStream) -> StepOutcome:
    """One Euler-Maruyama step x + a(x) h + b(x) N(0, h I_d).

    Consumes exactly d variates (the normals of one stream slot), so an
    EM chain sees the same Gaussian increments as a Metropolis chain
    driven by the same stream.
    """
    x = s.x
    dim = model.dim
    b = coeffs.b(x)
    a = coeffs.a(x)
    if not np.all(np.isfinite(a)):
        raise EvalOutsideSupport(f"{model.label}: EM drift undefined at {x!r}")
    z = rng.next_normals(dim)
    if dim == 1:
        y = float(x) + float(a) * h + float(b) * math.sqrt(h) * float(z[0])
    else:
        y = np.asarray(x, dtype=float) + np.asarray(a, dtype=float) * h \
            + float(b) * math.sqrt(h) * z
    return StepOutcome(next=y, proposal=y, alpha=1.0, accepted=True)


def _raise_kernel_status(model, status, traj, step):
    if status == 1:
        raise EvalOutsideSupport(
            f"{model.label}: EM coefficients undefined "
            f"(trajectory {traj}, step {step})")
    if status == 2:
        raise NonpositiveDiffusion(
            f"{model.label}: nonpositive D inside support "
            f"(trajectory {traj}, step {step})")


def _use_compiled(model):
    return (backend.active_backend() == "compiled"
            and model.kernel_spec is not None
            and model.dim == 1)


def _em_drift(model):
    return derive_coefficients(model).a


def simulate_trajectory(model: DiffusionModel, scheme, x0, h, n_steps,
                        rng: RngStream):
    """Simulate one chain; returns the positions, length n_steps + 1.

    Deterministic given the stream's (base_seed, trajectory_index).  A
    Metropolis chain never leaves the support; an Euler-Maruyama chain
    may, and raises EvalOutsideSupport once its coefficients stop being
    evaluable.
    """
    scheme = _check_scheme(scheme)
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    if scheme == "mh":
        model.diffusion_at(x0)  # validates x0 and D(x0)
        coeffs = None
    else:
        coeffs = derive_coefficients(model)

    # fast path: fresh stream, 1-d model
    if model.dim == 1 and rng.slot == 0:
        drift = coeffs.a if coeffs is not None else None
        if _use_compiled(model):
            code, params = model.kernel_spec
            out = np.empty(n_steps + 1)
            status, traj, step = backend.compiled_module().chain_positions(
                code, *params, 0 if scheme == "mh" else 1, float(x0), h,
                n_steps, rng.base_seed, rng.trajectory_index, out)
            _raise_kernel_status(model, status, traj, step)
        else:
            out = _pykernel.chain_positions(model, drift, scheme, x0, h,
                                            n_steps, rng.base_seed,
                                            rng.trajectory_index)
        rng.slot += n_steps
        return out

    # general path: scalar step loop (arbitrary slot, any dimension)
    state = ChainState(x=x0, step_index=0)
    if model.dim == 1:
        out = np.empty(n_steps + 1)
        out[0] = float(x0)
    else:
        out = np.empty((n_steps + 1, model.dim))
        out[0] = np.asarray(x0, dtype=float)
    for n in range(n_steps):
        if scheme == "mh":
            step = mh_step(model, state, h, rng)
        else:
            step = em_step(model, coeffs, state, h, rng)
        state = ChainState(x=step.next, step_index=n + 1)
        out[n + 1] = step.next
    return out


def _ensemble_block(model, code_params, drift, scheme, x0, h, n_steps,
                    base_seed, traj_start, out_slice):
    if code_params is not None:
        code, params = code_params
        status, traj, step = backend.compiled_module().ensemble_final(
            code, *params, 0 if scheme == "mh" else 1, float(x0), h, n_steps,
            base_seed, traj_start, out_slice)
        _raise_kernel_status(model, status, traj, step)
    else:
        out_slice[:] = _pykernel.ensemble_final(
            model, drift, scheme, x0, h, n_steps, base_seed, traj_start,
            len(out_slice))


def ensemble_final_positions(model: DiffusionModel, scheme, x0, h, n_steps,
                             n_traj, base_seed, threads=1):
    """Final positions of n_traj independent trajectories.

    Trajectory i draws from the stream keyed by (base_seed, i), so the
    result is independent of block decomposition and thread scheduling.
    """
    scheme = _check_scheme(scheme)
    drift = None
    if scheme == "mh":
        model.diffusion_at(x0)
    else:
        drift = _em_drift(model)

    if model.dim != 1:
        out = np.empty((n_traj, model.dim))
        coeffs = derive_coefficients(model) if scheme == "em" else None
        for i in range(n_traj):
            rng = RngStream(base_seed, i)
            out[i] = simulate_trajectory(model, scheme, x0, h, n_steps, rng)[-1]
        return out

    code_params = model.kernel_spec if _use_compiled(model) else None
    out = np.empty(n_traj)
    blocks = [(s, min(s + _BLOCK, n_traj)) for s in range(0, n_traj, _BLOCK)]

    def run(span):
        lo, hi = span
        _ensemble_block(model, code_params, drift, scheme, x0, h, n_steps,
                        base_seed, lo, out[lo:hi])

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, blocks))
    else:
        for span in blocks:
            run(span)
    return out


def _apply_f(f, positions):
    vals = np.asarray(f(positions), dtype=float)
    if vals.shape != positions.shape:
        vals = np.fromiter((float(f(x)) for x in positions), dtype=float,
                           count=len(positions))
    return vals


def simulate_ensemble(model: DiffusionModel, scheme, x0, h, T, n_traj, f,
                      base_seed, threads=1) -> EnsembleStats:
    """Estimate E f(X_T) over n_traj trajectories started at x0.

    The standard error is sample-std / sqrt(n_traj); trajectories are
    independent by construction of the streams.
    """
    if n_traj < 2:
        raise ValueError("need at least 2 trajectories for a standard error")
    scheme = _check_scheme(scheme)
    n_steps = steps_for_horizon(T, h)
    pos = ensemble_final_positions(model, scheme, x0, h, n_steps, n_traj,
                                   base_seed, threads=threads)
    vals = _apply_f(f, pos)
    mean = float(np.mean(vals))
    stderr = float(np.std(vals, ddof=1) / math.sqrt(n_traj))
    return EnsembleStats(mean=mean, stderr=stderr, n_traj=n_traj,
                         scheme=scheme, h=h, T=T)


def detailed_balance_log_residual(model: DiffusionModel, xs, ys, h):
    """Relative error of the detailed-balance identity on state pairs.

    For in-support pairs (x, y) the flux identity
    rho(x) q_h(x,y) alpha(x,y) = rho(y) q_h(y,x) alpha(y,x) is evaluated
    in log space from the unsimplified formulas (independently of the
    stepping kernels) and the elementwise |lhs/rhs - 1| is returned.
    Pairs so far apart that both sides underflow to zero satisfy the
    identity exactly and report 0.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)

    def log_side(a, b):
        d_a = np.asarray(model.D(a), dtype=float)
        d_b = np.asarray(model.D(b), dtype=float)
        lnr_a = np.asarray(model.ln_rho_eq(a), dtype=float)
        lnr_b = np.asarray(model.ln_rho_eq(b), dtype=float)
        r2 = (a - b) ** 2
        lnq_ab = -0.5 * (_LOG_4PI + np.log(h * d_a)) - r2 / (4.0 * h * d_a)
        lnq_ba = -0.5 * (_LOG_4PI + np.log(h * d_b)) - r2 / (4.0 * h * d_b)
        log_ratio = lnq_ba + lnr_b - lnq_ab - lnr_a
        return lnr_a + lnq_ab + np.minimum(log_ratio, 0.0)

    side_xy = log_side(xs, ys)
    side_yx = log_side(ys, xs)
    representable = np.maximum(side_xy, side_yx) > -745.0
    return np.where(representable, np.abs(np.expm1(side_xy - side_yx)), 0.0)
