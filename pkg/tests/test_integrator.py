"""Step-level behavior, stream contracts, and ensemble estimates."""

import math

import numpy as np
import pytest

from metrodiff import (ChainState, DiffusionModel, EvalOutsideSupport,
                       NonIntegerStepCount, RngStream, acceptance_prob,
                       builtin_models, constant_model, derive_coefficients,
                       detailed_balance_log_residual, em_step,
                       ensemble_final_positions, get_model, mh_step, propose,
                       proposal_density, simulate_ensemble,
                       simulate_trajectory, steps_for_horizon)

class FixedStream:
    """Stream stub handing out preset draws (normals, uniform) per slot."""

    def __init__(self, normals, uniforms=None):
        self.normals = list(normals)
        self.uniforms = list(uniforms or [])
        self.slot = 0

    def next_step(self, d=1):
        z = np.atleast_1d(np.asarray(self.normals.pop(0), dtype=float))
        u = self.uniforms.pop(0)
        self.slot += 1
        return z, u

    def next_normals(self, d=1):
        z = np.atleast_1d(np.asarray(self.normals.pop(0), dtype=float))
        self.slot += 1
        return z


def gaussian_2d_model():
    return DiffusionModel(
        label="gauss2d",
        dim=2,
        D=lambda v: 1.0 + 0.25 * float(np.asarray(v)[0]) ** 2,
        ln_rho_eq=lambda v: -0.5 * float(np.dot(v, v)),
        support=lambda v: True,
        grad_D=lambda v: np.array([0.5 * float(np.asarray(v)[0]), 0.0]),
        grad_ln_rho_eq=lambda v: -np.asarray(v, dtype=float),
    )


# --- proposals -------------------------------------------------------------

def test_propose_zero_draw_is_identity():
    model = constant_model(0.5)
    assert propose(model, 1.3, 1.0, FixedStream([0.0])) == 1.3


def test_propose_gbm_example():
    # x=2, h=0.01, z=1: sqrt(2 D) sqrt(h) = 2 * 0.1
    y = propose(get_model("gbm"), 2.0, 0.01, FixedStream([1.0]))
    assert y == pytest.approx(2.2, abs=1e-15)


def test_propose_unit_noise_at_arcsine_center():
    # D(0) = 1/2 makes the proposal exactly z * sqrt(h)
    z = 0.7345
    y = propose(get_model("arcsine"), 0.0, 0.25, FixedStream([z]))
    assert y == pytest.approx(z * 0.5, abs=1e-15)


def test_proposal_density_values():
    model = constant_model(0.5)
    assert proposal_density(model, 0.3, 0.3, 1.0) == pytest.approx(
        1.0 / math.sqrt(2.0 * math.pi), rel=1e-14)
    two_d = gaussian_2d_model()
    x = np.zeros(2)
    assert proposal_density(two_d, x, x, 0.5) == pytest.approx(
        1.0 / (2.0 * math.pi), rel=1e-14)  # D=1, h=1/2: N(0, I) at 0


def test_proposal_density_symmetric_in_displacement(rng_np):
    model = get_model("sine-diffusion")
    for _ in range(50):
        x, v = rng_np.normal(size=2)
        h = float(rng_np.uniform(0.01, 1.0))
        # (x + v) - x only matches v to rounding, hence the tolerance
        assert proposal_density(model, x, x + v, h) == pytest.approx(
            proposal_density(model, x, x - v, h), rel=1e-12)


def test_proposal_density_outside_support():
    with pytest.raises(EvalOutsideSupport):
        proposal_density(get_model("arcsine"), 1.5, 0.0, 0.1)


# --- acceptance ------------------------------------------------------------

def test_acceptance_is_one_for_constant_model(rng_np):
    model = constant_model(2.0)
    for _ in range(20):
        x, y = rng_np.normal(size=2)
        assert acceptance_prob(model, x, y, 0.3) == 1.0


def test_acceptance_piecewise_value():
    # independent scalar oracle: min(1, sqrt(2) exp(-5/4))
    alpha = acceptance_prob(get_model("piecewise"), 0.5, -0.5, 0.1)
    assert alpha == pytest.approx(math.sqrt(2.0) * math.exp(-1.25), rel=1e-12)
    assert alpha == pytest.approx(0.40518, abs=1e-5)


def test_acceptance_zero_outside_support():
    assert acceptance_prob(get_model("arcsine"), 0.0, 1.5, 0.1) == 0.0


def test_acceptance_matches_direct_density_ratio(rng_np):
    # dual route: log-space simplification vs the raw q rho products
    for model in builtin_models():
        lo, hi = (0.1, 3.0) if model.label == "gbm" else (-0.9, 0.9)
        for _ in range(100):
            x, y = rng_np.uniform(lo, hi, 2)
            h = float(rng_np.uniform(0.005, 0.5))
            direct = min(1.0, (proposal_density(model, y, x, h)
                               * math.exp(float(model.ln_rho_eq(y)))
                               / (proposal_density(model, x, y, h)
                                  * math.exp(float(model.ln_rho_eq(x))))))
            assert acceptance_prob(model, x, y, h) == pytest.approx(
                direct, rel=1e-10)


def test_acceptance_reciprocity(rng_np):
    model = get_model("arcsine")
    for _ in range(100):
        x, y = rng_np.uniform(-0.95, 0.95, 2)
        h = 0.05
        a_xy = acceptance_prob(model, x, y, h)
        a_yx = acceptance_prob(model, y, x, h)
        if a_xy < 1.0:
            assert a_yx == 1.0
        if a_yx < 1.0:
            assert a_xy == 1.0


def test_detailed_balance_identity(rng_np):
    for model in builtin_models():
        lo, hi = (0.05, 5.0) if model.label == "gbm" else (-0.99, 0.99)
        xs = rng_np.uniform(lo, hi, 2000)
        ys = rng_np.uniform(lo, hi, 2000)
        for h in (1.0, 1e-2):
            res = detailed_balance_log_residual(model, xs, ys, h)
            assert np.max(res) < 1e-12


def test_detailed_balance_2d(rng_np):
    model = gaussian_2d_model()
    for _ in range(100):
        x = rng_np.normal(size=2)
        y = rng_np.normal(size=2)
        h = 0.2
        lhs = (math.exp(float(model.ln_rho_eq(x)))
               * proposal_density(model, x, y, h)
               * acceptance_prob(model, x, y, h))
        rhs = (math.exp(float(model.ln_rho_eq(y)))
               * proposal_density(model, y, x, h)
               * acceptance_prob(model, y, x, h))
        assert lhs == pytest.approx(rhs, rel=1e-12)


# --- single steps ----------------------------------------------------------

def test_mh_step_accepts_when_alpha_is_one():
    model = constant_model(0.5)
    out = mh_step(model, ChainState(0.0), 0.1, FixedStream([1.2], [0.999999]))
    assert out.accepted and out.alpha == 1.0 and out.next == out.proposal


def test_mh_step_rejects_on_large_xi():
    # alpha ~ 0.405 for this jump; xi = 0.99 must reject
    model = get_model("piecewise")
    d_x = 2.0
    z = -1.0 / math.sqrt(2.0 * d_x * 0.1)  # lands exactly at -0.5
    out = mh_step(model, ChainState(0.5), 0.1, FixedStream([z], [0.99]))
    assert out.proposal == pytest.approx(-0.5, abs=1e-12)
    assert out.alpha == pytest.approx(0.40518, abs=1e-5)
    assert not out.accepted and out.next == 0.5


def test_mh_step_invariants(rng_np):
    model = get_model("arcsine")
    rng = RngStream(42, 0)
    state = ChainState(0.2)
    for n in range(200):
        out = mh_step(model, state, 0.05, rng)
        assert 0.0 <= out.alpha <= 1.0
        if out.accepted:
            assert out.next == out.proposal
        else:
            assert out.next == state.x
        state = ChainState(out.next, n + 1)
        assert abs(state.x) < 1.0


def test_em_step_examples():
    gbm = get_model("gbm")
    out = em_step(gbm, derive_coefficients(gbm), ChainState(1.0), 0.5,
                  FixedStream([0.0]))
    assert out.next == pytest.approx(1.5, abs=1e-15)
    assert out.accepted and out.alpha == 1.0

    sine = get_model("sine-diffusion")
    out = em_step(sine, derive_coefficients(sine), ChainState(0.0), 0.1,
                  FixedStream([1.0]))
    assert out.next == pytest.approx(0.1 + math.sqrt(0.4) * 1.0, rel=1e-14)


def test_variate_consumption_counts():
    model = constant_model(0.5)
    rng = RngStream(1, 2)
    mh_step(model, ChainState(0.0), 0.1, rng)
    assert rng.slot == 1
    em_step(model, derive_coefficients(model), ChainState(0.0), 0.1, rng)
    assert rng.slot == 2
    propose(model, 0.0, 0.1, rng)
    assert rng.slot == 3


def test_mh_and_em_coincide_for_constant_model():
    # alpha = 1 and a = 0: the two schemes are the same map on one stream
    model = constant_model(0.5)
    coeffs = derive_coefficients(model)
    mh_state, em_state = ChainState(0.3), ChainState(0.3)
    rng_mh, rng_em = RngStream(77, 5), RngStream(77, 5)
    for n in range(100):
        a = mh_step(model, mh_state, 0.2, rng_mh)
        b = em_step(model, coeffs, em_state, 0.2, rng_em)
        assert a.accepted and a.next == b.next
        mh_state, em_state = ChainState(a.next), ChainState(b.next)


# --- trajectories ----------------------------------------------------------

def test_trajectory_zero_steps():
    traj = simulate_trajectory(get_model("arcsine"), "mh", 0.5, 0.01, 0,
                               RngStream(3, 0))
    assert traj.shape == (1,) and traj[0] == 0.5


def test_trajectory_stays_in_support(each_backend):
    traj = simulate_trajectory(get_model("arcsine"), "mh", 0.5, 0.01, 100000,
                               RngStream(11, 0))
    assert traj.shape == (100001,)
    assert np.all(np.abs(traj) < 1.0)


def test_trajectory_deterministic_and_advances_slot():
    model = get_model("sine-diffusion")
    rng = RngStream(8, 3)
    t1 = simulate_trajectory(model, "mh", 0.0, 0.05, 500, rng)
    assert rng.slot == 500
    t2 = simulate_trajectory(model, "mh", 0.0, 0.05, 500, RngStream(8, 3))
    assert np.array_equal(t1, t2)
    t3 = simulate_trajectory(model, "mh", 0.0, 0.05, 500, RngStream(8, 4))
    assert not np.array_equal(t1, t3)


def test_trajectory_matches_scalar_steps(each_backend):
    # kernel fast path equals the public single-step recursion
    model = get_model("arcsine")
    fast = simulate_trajectory(model, "mh", 0.2, 0.05, 300, RngStream(21, 9))
    state = ChainState(0.2)
    rng = RngStream(21, 9)
    slow = [0.2]
    for _ in range(300):
        out = mh_step(model, state, 0.05, rng)
        state = ChainState(out.next)
        slow.append(out.next)
    np.testing.assert_allclose(fast, slow, rtol=1e-9, atol=1e-12)


def test_em_trajectory_reports_support_exit():
    # forced big step from near the arcsine boundary exits and D < 0
    model = get_model("arcsine")
    with pytest.raises(EvalOutsideSupport):
        simulate_trajectory(model, "em", 0.999, 4.0, 50, RngStream(1234, 0))


def test_em_gbm_crosses_zero_without_error():
    # coefficient formulas extend to all of R for this model
    traj = simulate_trajectory(get_model("gbm"), "em", 1.0, 0.125, 64,
                               RngStream(500, 7))
    assert np.all(np.isfinite(traj))


def test_mh_trajectory_2d_model():
    model = gaussian_2d_model()
    traj = simulate_trajectory(model, "mh", np.zeros(2), 0.1, 200,
                               RngStream(13, 0))
    assert traj.shape == (201, 2)
    assert np.all(np.isfinite(traj))
    assert np.any(traj[1:] != traj[:-1])


# --- horizons and ensembles -------------------------------------------------

def test_steps_for_horizon():
    assert steps_for_horizon(1.0, 2.0 ** -8) == 256
    assert steps_for_horizon(1000.0, 0.01) == 100000
    assert steps_for_horizon(1000.0, 0.001) == 1000000
    with pytest.raises(NonIntegerStepCount):
        steps_for_horizon(1.0, 0.3)
    with pytest.raises(NonIntegerStepCount):
        steps_for_horizon(0.0, 0.1)


def test_ensemble_constant_f():
    stats = simulate_ensemble(constant_model(0.5), "mh", 0.0, 0.25, 1.0, 500,
                              lambda x: 7.5, base_seed=4)
    assert stats.mean == 7.5 and stats.stderr == 0.0


def test_ensemble_rejects_bad_horizon():
    with pytest.raises(NonIntegerStepCount):
        simulate_ensemble(constant_model(0.5), "mh", 0.0, 0.3, 1.0, 100,
                          lambda x: x, base_seed=4)


def test_ensemble_scheduling_independence(each_backend):
    model = get_model("arcsine")
    a = ensemble_final_positions(model, "mh", 0.5, 0.125, 8, 3000, 99,
                                 threads=1)
    b = ensemble_final_positions(model, "mh", 0.5, 0.125, 8, 3000, 99,
                                 threads=3)
    assert np.array_equal(a, b)


def test_ensemble_brownian_moments(each_backend):
    # constant D: X_T - x0 ~ N(0, 2 D T) exactly, any h
    d0, t_final = 0.7, 1.0
    stats = simulate_ensemble(constant_model(d0), "mh", 0.0, 0.125, t_final,
                              20000, lambda x: x, base_seed=31)
    assert abs(stats.mean) < 4.0 * stats.stderr
    expected_sd = math.sqrt(2.0 * d0 * t_final)
    assert stats.stderr == pytest.approx(expected_sd / math.sqrt(20000),
                                         rel=0.1)


def test_ensemble_em_matches_mh_for_constant_model(each_backend):
    model = constant_model(0.5)
    a = ensemble_final_positions(model, "mh", 0.0, 0.25, 4, 2000, 11)
    b = ensemble_final_positions(model, "em", 0.0, 0.25, 4, 2000, 11)
    assert np.array_equal(a, b)


def test_ensemble_gbm_em_mean(each_backend):
    # E X_T = (1 + h)^N exactly for the EM chain
    h, n = 2.0 ** -6, 64
    stats = simulate_ensemble(get_model("gbm"), "em", 1.0, h, 1.0, 40000,
                              lambda x: x, base_seed=17)
    assert stats.mean == pytest.approx((1.0 + h) ** n, abs=4 * stats.stderr)


def test_mean_recovery_arcsine(each_backend):
    stats = simulate_ensemble(get_model("arcsine"), "mh", 0.5, 2.0 ** -7, 1.0,
                              30000, lambda x: x, base_seed=66)
    exact = 0.5 * math.exp(-0.5)
    # order sqrt(h) bias plus 4 sigma of noise
    assert abs(stats.mean - exact) < 0.05 * math.sqrt(2.0 ** -7) \
        + 4 * stats.stderr
