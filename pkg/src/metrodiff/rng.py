"""Counter-based random number streams.

Every trajectory draws from its own Philox-4x64-10 stream keyed by
``(base_seed, trajectory_index)``, so ensembles are reproducible
bit-for-bit regardless of how trajectories are scheduled across blocks
or threads.  Random access by counter is what lets the vectorized and
compiled stepping kernels produce identical variates.

Stream layout: draws are organized in *slots*, one slot per integrator
step.  Slot ``n`` of a stream holds ``d`` standard normals (words
``0..d-1``) followed by one uniform (word ``d``).  Word ``j`` of slot
``n`` is lane ``j & 3`` of the Philox block with counter
``(n, j >> 2, 0, 0)``.  A Metropolis step consumes all ``d + 1`` words
of its slot; an Euler-Maruyama step consumes only the ``d`` normals, so
the two schemes see identical Gaussian increments when driven by the
same stream.
"""

import numpy as np

__all__ = [
    "philox4x64",
    "bits_to_uniform",
    "bits_to_normal",
    "normal_icdf",
    "RngStream",
    "derive_seed",
]

_MASK64 = (1 << 64) - 1

# Philox-4x64 round multipliers and Weyl key increments (random123).
_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)

_INV53 = 1.0 / 9007199254740992.0  # 2**-53


def _mulhilo(a, b):
    """128-bit product of two uint64 arrays as (high, low) words."""
    lo = a * b
    a_lo = a & _MASK32
    a_hi = a >> _S32
    b_lo = b & _MASK32
    b_hi = b >> _S32
    t = a_lo * b_hi + ((a_lo * b_lo) >> _S32)
    t2 = (t & _MASK32) + a_hi * b_lo
    hi = a_hi * b_hi + (t >> _S32) + (t2 >> _S32)
    return hi, lo


def philox4x64(c0, c1, c2, c3, k0, k1):
    """Philox-4x64-10 block function; broadcasts over any argument.

    Returns the four 64-bit output words of the block with counter
    ``(c0, c1, c2, c3)`` and key ``(k0, k1)``.  Matches the random123
    reference sequence (numpy's Philox generator emits the block at
    counter + 1, which the tests account for).
    """
    with np.errstate(over="ignore"):
        c0, c1, c2, c3, k0, k1 = (
            np.asarray(v, dtype=np.uint64) for v in (c0, c1, c2, c3, k0, k1)
        )
        c0, c1, c2, c3, k0, k1 = np.broadcast_arrays(c0, c1, c2, c3, k0, k1)
        k0 = k0.copy()
        k1 = k1.copy()
        for _ in range(10):
            hi0, lo0 = _mulhilo(_M0, c0)
            hi1, lo1 = _mulhilo(_M1, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
            k0 = k0 + _W0
            k1 = k1 + _W1
    return c0, c1, c2, c3


def bits_to_uniform(w):
    """Map 64-bit words to doubles uniform on [0, 1) (53-bit resolution)."""
    return (np.asarray(w, dtype=np.uint64) >> np.uint64(11)) * _INV53


def bits_to_normal(w):
    """Map 64-bit words to standard normals via the inverse CDF.

    The uniform is centered, ``u = (bits + 0.5) * 2**-53``, so it never
    hits 0 or 1 and each normal consumes exactly one word (fixed
    consumption is what makes the streams counter-addressable).
    """
    u = ((np.asarray(w, dtype=np.uint64) >> np.uint64(11)).astype(np.float64) + 0.5) * _INV53
    return normal_icdf(u)


# Rational minimax coefficients for the normal quantile (Wichura's
# PPND16 / algorithm AS 241), full double accuracy.
_ICDF_A = (
    3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
    1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
    3.3430575583588128105e4, 2.5090809287301226727e3,
)
_ICDF_B = (
    1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
    2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
    5.2264952788528545610e3,
)
_ICDF_C = (
    1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
    3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
    2.27238449892691845833e-2, 7.74545014278341407640e-4,
)
_ICDF_D = (
    1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
    1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
    1.05075007164441684324e-9,
)
_ICDF_E = (
    6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
    2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
    2.71155556874348757815e-5, 2.01033439929228813265e-7,
)
_ICDF_F = (
    1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
    7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
    2.04426310338993978564e-15,
)


def _poly(coef, r):
    s = np.full_like(r, coef[7])
    for c in coef[6::-1]:
        s = s * r + c
    return s


def normal_icdf(p):
    """Standard normal quantile function, elementwise, for p in (0, 1)."""
    p = np.asarray(p, dtype=np.float64)
    scalar = p.ndim == 0
    p = np.atleast_1d(p)
    q = p - 0.5
    central = np.abs(q) <= 0.425

    r = 0.180625 - q * q
    out = q * _poly(_ICDF_A, r) / _poly(_ICDF_B, r)

    if not central.all():
        tail = ~central
        pt = np.where(q < 0, p, 1.0 - p)
        # placeholder inside the central region keeps log() quiet there
        pt = np.where(tail, pt, 0.5)
        r = np.sqrt(-np.log(pt))
        near = r <= 5.0
        rn = r - 1.6
        rf = r - 5.0
        v = np.where(
            near,
            _poly(_ICDF_C, rn) / _poly(_ICDF_D, rn),
            _poly(_ICDF_E, rf) / _poly(_ICDF_F, rf),
        )
        out = np.where(tail, np.where(q < 0, -v, v), out)
    return float(out[0]) if scalar else out


def _splitmix64(z):
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(base_seed, *parts):
    """Derive an independent 64-bit sub-seed from a base seed and tags.

    Used to give each (scheme, h, purpose) ensemble its own seed so that
    self-difference error estimates are statistically independent.
    """
    s = _splitmix64(int(base_seed) & _MASK64)
    for p in parts:
        s = _splitmix64(s ^ _splitmix64(int(p) & _MASK64))
    return s


class RngStream:
    """Deterministic per-trajectory stream of step-structured draws.

    Replaying a stream with identical ``(base_seed, trajectory_index)``
    and starting slot reproduces every draw bit-for-bit.  Streams with
    distinct keys are independent (a Philox guarantee).
    """

    def __init__(self, base_seed, trajectory_index=0, slot=0):
        self.base_seed = int(base_seed) & _MASK64
        self.trajectory_index = int(trajectory_index) & _MASK64
        self.slot = int(slot)

    def __repr__(self):
        return (f"RngStream(base_seed={self.base_seed}, "
                f"trajectory_index={self.trajectory_index}, slot={self.slot})")

    def _words(self, n_words):
        """The first n_words 64-bit words of the current slot."""
        n_blocks = (n_words + 3) // 4
        out = np.empty(n_blocks * 4, dtype=np.uint64)
        for blk in range(n_blocks):
            w = philox4x64(self.slot, blk, 0, 0, self.base_seed, self.trajectory_index)
            out[4 * blk:4 * blk + 4] = w
        return out[:n_words]

    def next_step(self, d=1):
        """Draw one integrator slot: d standard normals and one uniform."""
        words = self._words(d + 1)
        self.slot += 1
        z = bits_to_normal(words[:d])
        u = float(bits_to_uniform(words[d]))
        return z, u

    def next_normals(self, d=1):
        """Draw the d normals of the current slot (uniform word unused)."""
        words = self._words(d)
        self.slot += 1
        return bits_to_normal(words)

    def next_uniform(self):
        """Draw the word-0 uniform of the current slot."""
        words = self._words(1)
        self.slot += 1
        return float(bits_to_uniform(words[0]))
