"""Vectorized NumPy stepping kernels (the pure-Python backend).

These evolve a block of trajectories one step at a time with array
operations; the compiled extension implements the same update formulas
trajectory-by-trajectory in C.  Both read the same counter-based random
streams, so they agree to floating-point rounding and are independently
reproducible.

Update formulas (kept in canonical form across backends):

    sigma  = sqrt(2 D(x)) * sqrt(h)
    y      = x + sigma * z
    L      = d/2 log(D(x)/D(y)) + |y-x|^2/(4h) (1/D(x) - 1/D(y))
             + ln rho(y) - ln rho(x)
    alpha  = exp(min(L, 0));  accept iff xi < alpha        (Metropolis)

    x'     = x + a(x) h + sigma * z                        (Euler-Maruyama)
"""

import math

import numpy as np

from .errors import EvalOutsideSupport, NonpositiveDiffusion
from .rng import bits_to_normal, bits_to_uniform, philox4x64

__all__ = ["ensemble_final", "chain_positions"]

# slots per chunk when pre-generating variates for sequential chains
_CHAIN_CHUNK = 1 << 17


def _step_words(step, base_seed, traj_idx):
    """Lane-0/lane-1 words (normal, uniform) of one slot for many streams."""
    w0, w1, _, _ = philox4x64(np.uint64(step), np.uint64(0), np.uint64(0),
                              np.uint64(0), np.uint64(base_seed), traj_idx)
    return w0, w1


def _check_positive_inside(model, x, d_of_x, where=None):
    ok = np.isfinite(d_of_x) & (d_of_x > 0.0)
    if where is not None:
        ok = ok | ~where
    if not ok.all():
        i = int(np.argmin(ok))
        raise NonpositiveDiffusion(
            f"{model.label}: D({x[i]!r}) = {d_of_x[i]!r} inside support")


def ensemble_final(model, drift, scheme, x0, h, n_steps, base_seed,
                   traj_start, n_traj):
    """Final positions of trajectories [traj_start, traj_start + n_traj).

    ``drift`` is the derived drift callable (Euler-Maruyama only).
    """
    idx = np.arange(traj_start, traj_start + n_traj, dtype=np.uint64)
    x = np.full(n_traj, float(x0))
    sqrt_h = math.sqrt(h)

    if scheme == "mh":
        d_x = np.asarray(model.D(x), dtype=float)
        _check_positive_inside(model, x, d_x)
        lnr_x = np.asarray(model.ln_rho_eq(x), dtype=float)
        for n in range(n_steps):
            w0, w1 = _step_words(n, base_seed, idx)
            z = bits_to_normal(w0)
            xi = bits_to_uniform(w1)
            y = x + np.sqrt(2.0 * d_x) * sqrt_h * z
            inside = np.asarray(model.support(y), dtype=bool)
            d_y = np.asarray(model.D(y), dtype=float)
            _check_positive_inside(model, y, d_y, where=inside)
            d_y_safe = np.where(inside, d_y, 1.0)
            lnr_y = np.where(inside, np.asarray(model.ln_rho_eq(y), dtype=float),
                             -np.inf)
            delta = y - x
            with np.errstate(invalid="ignore"):
                log_ratio = (0.5 * np.log(d_x / d_y_safe)
                             + (delta * delta / (4.0 * h)) * (1.0 / d_x - 1.0 / d_y_safe)
                             + lnr_y - lnr_x)
            log_ratio = np.where(inside, log_ratio, -np.inf)
            alpha = np.exp(np.minimum(log_ratio, 0.0))
            accept = xi < alpha
            x = np.where(accept, y, x)
            d_x = np.where(accept, d_y_safe, d_x)
            lnr_x = np.where(accept, lnr_y, lnr_x)
        return x

    if scheme == "em":
        for n in range(n_steps):
            w0, _ = _step_words(n, base_seed, idx)
            z = bits_to_normal(w0)
            two_d = 2.0 * np.asarray(model.D(x), dtype=float)
            bad = ~np.isfinite(two_d) | (two_d < 0.0)
            if bad.any():
                i = int(np.argmax(bad))
                raise EvalOutsideSupport(
                    f"{model.label}: EM coefficients undefined at x={x[i]!r} "
                    f"(trajectory {traj_start + i}, step {n})")
            a = np.asarray(drift(x), dtype=float)
            if not np.isfinite(a).all():
                i = int(np.argmin(np.isfinite(a)))
                raise EvalOutsideSupport(
                    f"{model.label}: EM drift undefined at x={x[i]!r} "
                    f"(trajectory {traj_start + i}, step {n})")
            x = x + a * h + np.sqrt(two_d) * sqrt_h * z
        return x

    raise ValueError(f"unknown scheme {scheme!r}")


def chain_positions(model, drift, scheme, x0, h, n_steps, base_seed,
                    trajectory_index):
    """Full position path of one trajectory, length n_steps + 1.

    Variates for all steps are pre-generated in vectorized chunks; the
    recursion itself runs with scalar arithmetic.
    """
    out = np.empty(n_steps + 1)
    out[0] = x = float(x0)
    sqrt_h = math.sqrt(h)
    key1 = np.uint64(trajectory_index)

    if scheme == "mh":
        d_x = float(model.D(x))
        if not (math.isfinite(d_x) and d_x > 0.0):
            raise NonpositiveDiffusion(f"{model.label}: D({x}) = {d_x}")
        lnr_x = float(model.ln_rho_eq(x))

    for start in range(0, n_steps, _CHAIN_CHUNK):
        stop = min(start + _CHAIN_CHUNK, n_steps)
        ctr = np.arange(start, stop, dtype=np.uint64)
        w0, w1, _, _ = philox4x64(ctr, np.uint64(0), np.uint64(0), np.uint64(0),
                                  np.uint64(base_seed), key1)
        zs = bits_to_normal(w0)
        xis = bits_to_uniform(w1)
        for k in range(stop - start):
            n = start + k
            if scheme == "mh":
                y = x + math.sqrt(2.0 * d_x) * sqrt_h * zs[k]
                if bool(model.support(y)):
                    d_y = float(model.D(y))
                    if not (math.isfinite(d_y) and d_y > 0.0):
                        raise NonpositiveDiffusion(
                            f"{model.label}: D({y}) = {d_y} inside support")
                    lnr_y = float(model.ln_rho_eq(y))
                    delta = y - x
                    log_ratio = (0.5 * math.log(d_x / d_y)
                                 + (delta * delta / (4.0 * h)) * (1.0 / d_x - 1.0 / d_y)
                                 + lnr_y - lnr_x)
                    alpha = math.exp(min(log_ratio, 0.0))
                else:
                    alpha = 0.0
                if xis[k] < alpha:
                    x = y
                    d_x = d_y
                    lnr_x = lnr_y
            else:
                two_d = 2.0 * float(model.D(x))
                if not (math.isfinite(two_d) and two_d >= 0.0):
                    raise EvalOutsideSupport(
                        f"{model.label}: EM coefficients undefined at x={x} "
                        f"(step {n})")
                a = float(drift(x))
                if not math.isfinite(a):
                    raise EvalOutsideSupport(
                        f"{model.label}: EM drift undefined at x={x} (step {n})")
                x = x + a * h + math.sqrt(two_d) * sqrt_h * zs[k]
            out[n + 1] = x
    return out
