"""Estimators and diagnostics for chain output and weak-error studies.

Time-average quantities (occupancy density, effective diffusion) report
batch-means standard errors: the chain is autocorrelated, so i.i.d.
formulas would understate the uncertainty.  Weak errors come with the
ensemble standard errors propagated through the comparison, and
convergence orders are least-squares slopes in log2-log2 coordinates.

``recover_drift`` / ``recover_diffusion`` are the deterministic
quadrature oracle for the scheme's local moments: they integrate the
first and second moments of the accepted increment against the proposal
density, with no Monte Carlo noise, and must approach a(x) and 2 D(x)
at rate sqrt(h) as the step shrinks.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import (MismatchedHorizon, NonpositiveError,
                     QuadratureNonConvergence, SupportViolation,
                     UnsortedEdges)
from .integrator import EnsembleStats, acceptance_prob, proposal_density

__all__ = [
    "Histogram",
    "BinTable",
    "ConvergenceReport",
    "occupancy_density",
    "occupancy_table",
    "effective_diffusion",
    "weak_error_exact",
    "weak_error_self",
    "fit_order",
    "recover_drift",
    "recover_diffusion",
    "relative_entropy",
    "batch_means",
    "DEFAULT_BATCHES",
]

DEFAULT_BATCHES = 20


@dataclass(frozen=True)
class Histogram:
    """Counts over sorted bin edges; out-of-range samples are not binned."""
    edges: np.ndarray
    counts: np.ndarray
    total: int

    @property
    def widths(self):
        return np.diff(self.edges)

    @property
    def centers(self):
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def density(self):
        """Per-bin density estimate count / (total * width)."""
        return self.counts / (self.total * self.widths)


@dataclass(frozen=True)
class BinTable:
    """A per-bin estimate with batch-means standard errors."""
    edges: np.ndarray
    value: np.ndarray
    stderr: np.ndarray
    count: np.ndarray


@dataclass(frozen=True)
class ConvergenceReport:
    """(h, error, stderr) rows, largest h first, with the fitted order."""
    rows: list
    slope: float
    slope_stderr: float
    used: list


def _check_edges(edges):
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise UnsortedEdges("bin edges must be strictly increasing")
    return edges


def occupancy_density(traj, edges) -> Histogram:
    """Occupation histogram of a chain path.

    Repeated (rejected) positions count each time they occur: the
    estimator is over the chain's timesteps, and it is the occupation
    measure including rejections that matches the equilibrium density.
    """
    edges = _check_edges(edges)
    traj = np.asarray(traj, dtype=float)
    if traj.size < 1:
        raise ValueError("need at least one state")
    counts, _ = np.histogram(traj, bins=edges)
    return Histogram(edges=edges, counts=counts, total=traj.size)


def occupancy_table(traj, edges, n_batches=DEFAULT_BATCHES) -> BinTable:
    """Occupancy density with batch-means standard errors per bin."""
    edges = _check_edges(edges)
    traj = np.asarray(traj, dtype=float)
    full = occupancy_density(traj, edges)
    batches = np.array_split(traj, n_batches)
    dens = np.array([occupancy_density(b, edges).density for b in batches])
    stderr = np.std(dens, axis=0, ddof=1) / math.sqrt(n_batches)
    return BinTable(edges=edges, value=full.density, stderr=stderr,
                    count=full.counts)


def effective_diffusion(traj, h, edges, n_batches=DEFAULT_BATCHES) -> BinTable:
    """Bin-wise estimate of D from squared chain increments.

    For steps starting in bin i the estimator is
    mean((X_{k+1} - X_k)^2 / 2h), rejected steps included as zero
    increments (the chain's actual increments are what the estimator is
    defined over).  Bins never visited get NaN and count 0.
    """
    edges = _check_edges(edges)
    traj = np.asarray(traj, dtype=float)
    if traj.size < 2:
        raise ValueError("need at least two states")
    start = traj[:-1]
    sq = (traj[1:] - start) ** 2 / (2.0 * h)
    n_bins = len(edges) - 1
    which = np.digitize(start, edges) - 1
    in_range = (which >= 0) & (which < n_bins)

    def bin_means(sel):
        cnt = np.bincount(which[sel], minlength=n_bins).astype(float)
        tot = np.bincount(which[sel], weights=sq[sel], minlength=n_bins)
        with np.errstate(invalid="ignore"):
            return np.where(cnt > 0, tot / np.maximum(cnt, 1), np.nan), cnt

    value, count = bin_means(in_range)

    # contiguous batches over the step sequence
    splits = np.array_split(np.arange(len(sq)), n_batches)
    per_batch = np.full((n_batches, n_bins), np.nan)
    for bi, ids in enumerate(splits):
        sel = np.zeros(len(sq), dtype=bool)
        sel[ids] = True
        per_batch[bi], _ = bin_means(sel & in_range)
    n_ok = np.sum(~np.isnan(per_batch), axis=0)
    with np.errstate(invalid="ignore"), warnings.catch_warnings():
        # bins that no batch visited legitimately produce all-NaN slices
        warnings.simplefilter("ignore", RuntimeWarning)
        spread = np.nanstd(per_batch, axis=0, ddof=1)
    stderr = np.where(n_ok > 1, spread / np.sqrt(np.maximum(n_ok, 1)), np.nan)
    return BinTable(edges=edges, value=value, stderr=stderr,
                    count=count.astype(int))


def weak_error_exact(stats: EnsembleStats, reference: float):
    """|mean - reference| with the ensemble standard error."""
    if not math.isfinite(reference):
        raise ValueError(f"reference must be finite, got {reference}")
    return abs(stats.mean - reference), stats.stderr


def weak_error_self(stats_h: EnsembleStats, stats_half: EnsembleStats):
    """|mean_h - mean_{h/2}| with the combined standard error.

    The two ensembles must target the same horizon and be independent
    (fresh seeds); the errors then add in quadrature.
    """
    if stats_h.T != stats_half.T:
        raise MismatchedHorizon(
            f"horizons differ: {stats_h.T} vs {stats_half.T}")
    err = abs(stats_h.mean - stats_half.mean)
    se = math.sqrt(stats_h.stderr ** 2 + stats_half.stderr ** 2)
    return err, se


def fit_order(rows, min_snr=1.0):
    """Least-squares slope of log2(error) against log2(h).

    Rows whose error does not exceed ``min_snr`` times its standard
    error are noise-level and excluded; fewer than three surviving rows
    raise NonpositiveError.  Returns (slope, slope_stderr).
    """
    usable = [(h, e) for h, e, se in rows if e > 0 and e > min_snr * se]
    if len(usable) < 3:
        raise NonpositiveError(
            f"only {len(usable)} rows with error above {min_snr}x stderr; "
            "need at least 3 to fit an order")
    x = np.log2([h for h, _ in usable])
    y = np.log2([e for _, e in usable])
    xc = x - x.mean()
    slope = float(np.dot(xc, y) / np.dot(xc, xc))
    resid = y - (y.mean() + slope * xc)
    dof = len(usable) - 2
    s2 = float(np.dot(resid, resid)) / dof if dof > 0 else 0.0
    slope_stderr = math.sqrt(s2 / float(np.dot(xc, xc)))
    return slope, slope_stderr


def _moment_integral(model, x, h, power):
    """integral of (y-x)^power alpha_h(x,y) q_h(x,y) dy, divided by h."""
    if model.dim != 1:
        raise ValueError("quadrature oracle is 1-d only")
    d_x = float(model.diffusion_at(x))
    sigma = math.sqrt(2.0 * d_x * h)
    lo, hi = x - 12.0 * sigma, x + 12.0 * sigma

    def integrand(y):
        return ((y - x) ** power
                * acceptance_prob(model, x, y, h)
                * proposal_density(model, x, y, h))

    with warnings.catch_warnings():
        # quality is enforced by the abserr check below, not quad's warning
        warnings.simplefilter("ignore")
        val, abserr = quad(integrand, lo, hi, epsabs=1e-13, epsrel=1e-11,
                           limit=400)
    if abserr > 1e-8 * max(abs(val), h):
        raise QuadratureNonConvergence(
            f"moment quadrature at x={x}, h={h}: abserr={abserr}")
    return val / h


def recover_drift(model, x, h) -> float:
    """Mean accepted increment per unit time, E[dX]/h, by quadrature.

    Approaches the drift a(x) with an O(sqrt h) error as h -> 0.
    """
    return _moment_integral(model, x, h, power=1)


def recover_diffusion(model, x, h) -> float:
    """Second moment of the accepted increment per unit time, E[dX^2]/h.

    Approaches b(x)^2 = 2 D(x) with an O(sqrt h) error as h -> 0.
    """
    return _moment_integral(model, x, h, power=2)


def relative_entropy(hist_p: Histogram, q) -> float:
    """Relative entropy H(p|q) of binned densities, in nats.

    ``q`` is a Histogram on the same edges or a callable density
    evaluated at bin centers.  Both densities are normalized over the
    binned range, so H >= 0 with equality iff the binned densities
    coincide; the Csiszar-Kullback bound H >= 0.5 * |p - q|_L1^2 is
    asserted on every call.
    """
    edges = hist_p.edges
    widths = hist_p.widths
    if isinstance(q, Histogram):
        if not np.array_equal(q.edges, edges):
            raise ValueError("histograms must share bin edges")
        q_dens = q.density.astype(float)
    else:
        q_dens = np.asarray(q(hist_p.centers), dtype=float)
    p_dens = hist_p.density.astype(float)

    p_mass = float(np.sum(p_dens * widths))
    q_mass = float(np.sum(q_dens * widths))
    if p_mass <= 0.0 or q_mass <= 0.0:
        raise ValueError("densities must carry positive mass on the bins")
    p_dens = p_dens / p_mass
    q_dens = q_dens / q_mass

    if np.any((p_dens > 0) & (q_dens <= 0)):
        raise SupportViolation("p > 0 on a bin where q = 0")
    pos = p_dens > 0
    h = float(np.sum(p_dens[pos] * np.log(p_dens[pos] / q_dens[pos]) * widths[pos]))
    l1 = float(np.sum(np.abs(p_dens - q_dens) * widths))
    if h < 0.5 * l1 * l1 - 1e-12:
        raise RuntimeError(
            f"Csiszar-Kullback violated: H={h}, 0.5 L1^2={0.5 * l1 * l1}")
    return h


def batch_means(values, n_batches=DEFAULT_BATCHES):
    """Mean of a correlated sequence with a batch-means standard error."""
    values = np.asarray(values, dtype=float)
    batches = np.array_split(values, n_batches)
    means = np.array([b.mean() for b in batches])
    return float(values.mean()), float(means.std(ddof=1) / math.sqrt(n_batches))
