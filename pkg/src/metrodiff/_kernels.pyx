# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled stepping kernels for the builtin model family.

Scalar C translations of the vectorized NumPy kernels in _pykernel.py:
same Philox-4x64-10 streams, same inverse-CDF normals, same update
formulas, evaluated trajectory-by-trajectory without the GIL.  Model
formulas are dispatched on a small integer code; models outside this
family run on the Python backend.

Functions return (status, trajectory, step): status 0 is success, 1 an
evaluation outside the coefficient domain, 2 a nonpositive diffusion
inside the support.  The Python driver converts these to exceptions.
"""

from libc.stdint cimport uint64_t
from libc.math cimport cos, exp, fabs, fmin, isfinite, log, log1p, sin, sqrt

cdef extern from *:
    """
    #include <stdint.h>
    static inline uint64_t metrodiff_mulhi64(uint64_t a, uint64_t b) {
        return (uint64_t)(((unsigned __int128)a * b) >> 64);
    }
    """
    uint64_t _mulhi64 "metrodiff_mulhi64" (uint64_t a, uint64_t b) nogil

cdef uint64_t M0 = 0xD2E7470EE14C6C93ULL
cdef uint64_t M1 = 0xCA5A826395121157ULL
cdef uint64_t W0 = 0x9E3779B97F4A7C15ULL
cdef uint64_t W1 = 0xBB67AE8584CAA73BULL

cdef double INV53 = 1.0 / 9007199254740992.0
cdef double NEG_INF = -float("inf")
# log(pi) and log(1/2) as literals so both backends share the exact value
cdef double LOG_PI = 1.1447298858494002
cdef double LOG_HALF = -0.6931471805599453

DEF CODE_CONSTANT = 0
DEF CODE_ARCSINE = 1
DEF CODE_SINE = 2
DEF CODE_GBM = 3
DEF CODE_PIECEWISE = 4


cdef inline void _philox(uint64_t c0, uint64_t c1, uint64_t k0, uint64_t k1,
                         uint64_t* out) noexcept nogil:
    cdef uint64_t x0 = c0, x1 = c1, x2 = 0, x3 = 0
    cdef uint64_t hi0, lo0, hi1, lo1
    cdef int r
    for r in range(10):
        hi0 = _mulhi64(M0, x0)
        lo0 = M0 * x0
        hi1 = _mulhi64(M1, x2)
        lo1 = M1 * x2
        x0 = hi1 ^ x1 ^ k0
        x1 = lo1
        x2 = hi0 ^ x3 ^ k1
        x3 = lo0
        k0 = k0 + W0
        k1 = k1 + W1
    out[0] = x0
    out[1] = x1
    out[2] = x2
    out[3] = x3


cdef inline double _u64_uniform(uint64_t w) noexcept nogil:
    return <double>(w >> 11) * INV53


cdef inline double _icdf(double p) noexcept nogil:
    """Normal quantile, Wichura's PPND16 rational approximations."""
    cdef double q = p - 0.5
    cdef double r, num, den, v
    if fabs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                    + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
                  + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
                + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                    + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
                  + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
                + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    if q < 0.0:
        r = p
    else:
        r = 1.0 - p
    r = sqrt(-log(r))
    if r <= 5.0:
        r = r - 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                    + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
                  + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
                + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                    + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                  + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
                + 2.05319162663775882187e0) * r + 1.0)
    else:
        r = r - 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                  + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
                + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                    + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                  + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0)
    v = num / den
    if q < 0.0:
        return -v
    return v


cdef inline double _u64_normal(uint64_t w) noexcept nogil:
    return _icdf((<double>(w >> 11) + 0.5) * INV53)


cdef inline double _model_d(int code, double p0, double p1, double x) noexcept nogil:
    if code == CODE_CONSTANT:
        return p0
    elif code == CODE_ARCSINE:
        return 0.5 * (1.0 - x * x)
    elif code == CODE_SINE:
        return sin(x) + p0
    elif code == CODE_GBM:
        return 0.5 * x * x
    else:  # CODE_PIECEWISE: left value p0, right value p1, jump at 0
        return p1 if x >= 0.0 else p0


cdef inline double _model_lnrho(int code, double x) noexcept nogil:
    # only evaluated at in-support points
    if code == CODE_ARCSINE:
        return -0.5 * log1p(-(x * x)) - LOG_PI
    elif code == CODE_PIECEWISE:
        return LOG_HALF
    return 0.0


cdef inline bint _model_support(int code, double p0, double p1, double p2,
                                double p3, double x) noexcept nogil:
    if code == CODE_CONSTANT:
        return p1 < x < p2
    elif code == CODE_ARCSINE:
        return fabs(x) < 1.0
    elif code == CODE_SINE:
        return True
    elif code == CODE_GBM:
        return x > 0.0
    else:  # CODE_PIECEWISE
        return p2 < x < p3


cdef inline double _model_drift(int code, double x) noexcept nogil:
    # grad_D + D * grad_ln_rho, mirroring the Python composition
    if code == CODE_ARCSINE:
        return -x + (0.5 * (1.0 - x * x)) * (x / (1.0 - x * x))
    elif code == CODE_SINE:
        return cos(x)
    elif code == CODE_GBM:
        return x
    return 0.0  # CODE_CONSTANT


cdef int _run_one(int code, double p0, double p1, double p2, double p3,
                  int scheme, double x0, double h, double sqrt_h,
                  long long n_steps, uint64_t base_seed, uint64_t traj,
                  double* positions, double* final, long long* bad_step) noexcept nogil:
    """Evolve one trajectory; store the path if positions != NULL."""
    cdef double x = x0, d_x, lnr_x, y, d_y, lnr_y, z, xi
    cdef double delta, log_ratio, alpha, two_d, a
    cdef uint64_t blk[4]
    cdef long long n

    if scheme == 0:  # Metropolis
        d_x = _model_d(code, p0, p1, x)
        if not isfinite(d_x) or d_x <= 0.0:
            bad_step[0] = 0
            return 2
        lnr_x = _model_lnrho(code, x)
        for n in range(n_steps):
            _philox(<uint64_t>n, 0, base_seed, traj, blk)
            z = _u64_normal(blk[0])
            xi = _u64_uniform(blk[1])
            y = x + sqrt(2.0 * d_x) * sqrt_h * z
            if _model_support(code, p0, p1, p2, p3, y):
                d_y = _model_d(code, p0, p1, y)
                if not isfinite(d_y) or d_y <= 0.0:
                    bad_step[0] = n
                    return 2
                lnr_y = _model_lnrho(code, y)
                delta = y - x
                log_ratio = (0.5 * log(d_x / d_y)
                             + (delta * delta / (4.0 * h)) * (1.0 / d_x - 1.0 / d_y)
                             + lnr_y - lnr_x)
                alpha = exp(fmin(log_ratio, 0.0))
            else:
                alpha = 0.0
            if xi < alpha:
                x = y
                d_x = d_y
                lnr_x = lnr_y
            if positions != NULL:
                positions[n + 1] = x
    else:  # Euler-Maruyama
        for n in range(n_steps):
            _philox(<uint64_t>n, 0, base_seed, traj, blk)
            z = _u64_normal(blk[0])
            two_d = 2.0 * _model_d(code, p0, p1, x)
            if not isfinite(two_d) or two_d < 0.0:
                bad_step[0] = n
                return 1
            a = _model_drift(code, x)
            if not isfinite(a):
                bad_step[0] = n
                return 1
            x = x + a * h + sqrt(two_d) * sqrt_h * z
            if positions != NULL:
                positions[n + 1] = x

    final[0] = x
    return 0


def ensemble_final(int code, double p0, double p1, double p2, double p3,
                   int scheme, double x0, double h, long long n_steps,
                   uint64_t base_seed, uint64_t traj_start, double[::1] out):
    """Final positions for out.shape[0] consecutive trajectories."""
    cdef long long n_traj = out.shape[0]
    cdef double sqrt_h = sqrt(h)
    cdef long long i, bad_step = 0
    cdef int status = 0
    cdef long long bad_traj = -1
    with nogil:
        for i in range(n_traj):
            status = _run_one(code, p0, p1, p2, p3, scheme, x0, h, sqrt_h,
                              n_steps, base_seed, traj_start + <uint64_t>i,
                              NULL, &out[i], &bad_step)
            if status != 0:
                bad_traj = traj_start + i
                break
    return status, bad_traj, bad_step


def chain_positions(int code, double p0, double p1, double p2, double p3,
                    int scheme, double x0, double h, long long n_steps,
                    uint64_t base_seed, uint64_t trajectory_index,
                    double[::1] out):
    """Full path of one trajectory into out (length n_steps + 1)."""
    cdef double sqrt_h = sqrt(h)
    cdef double final = x0
    cdef long long bad_step = 0
    cdef int status
    out[0] = x0
    with nogil:
        status = _run_one(code, p0, p1, p2, p3, scheme, x0, h, sqrt_h,
                          n_steps, base_seed, trajectory_index,
                          &out[0], &final, &bad_step)
    return status, <long long>trajectory_index, bad_step


def philox_block(uint64_t c0, uint64_t c1, uint64_t k0, uint64_t k1):
    """One Philox block (testing hook for stream equivalence)."""
    cdef uint64_t blk[4]
    _philox(c0, c1, k0, k1, blk)
    return blk[0], blk[1], blk[2], blk[3]


def normal_icdf_scalar(double p):
    """Scalar inverse normal CDF (testing hook)."""
    return _icdf(p)
