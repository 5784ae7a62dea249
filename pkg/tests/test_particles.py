"""Tests for the heavy-tailed particle system.

The jump sampler is validated against its target characteristic function
(an empirical-CF gate with exact variance bands), then the lifecycle pieces
are checked: Poisson initialization, survival under constant absorption,
Euler and exact transition moments, the closed-form expected density of the
surviving cloud, and the spatial/temporal laws of deposited particles.
"""

import math

import numpy as np
import pytest
from scipy.stats import kstest

from spdelab.particles import (
    DensityGrid,
    DiracAt,
    LevyParams,
    ModelParams,
    UniformDisc,
    analytic_intensity,
    deposited_density_check,
    exact_gaussian_transition,
    init,
    intensity_box_mass,
    step_euler,
    stable_increment,
)
from spdelab.special import DomainError


def cf_check(alpha, gamma, dt, d, xis, n, seed):
    """Worst z-score of the empirical characteristic function against
    exp(-dt*gamma*|xi|^alpha); the cosine variance is computed from the
    target CF itself, so the band is exact rather than estimated."""
    draws = stable_increment(dt, alpha, gamma, d, np.random.default_rng(seed),
                             n=n)
    worst = 0.0
    for xi in xis:
        xi = np.asarray(xi, dtype=float)
        target = math.exp(-dt * gamma * np.linalg.norm(xi) ** alpha)
        target2 = math.exp(-dt * gamma * np.linalg.norm(2 * xi) ** alpha)
        est = np.cos(draws @ xi).mean()
        sd = math.sqrt(max((1 + target2) / 2 - target**2, 1e-12) / n)
        worst = max(worst, abs(est - target) / sd)
    return worst


# ---------------------------------------------------------------------------
# Jump sampler
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("alpha", [0.7, 1.0, 1.5, 2.0])
def test_increment_matches_target_characteristic_function(alpha):
    worst = cf_check(alpha, 0.8, 0.37, 2,
                     [(0.5, 0.0), (0.0, 1.0), (2.0, 0.0)], n=200_000, seed=7)
    assert worst < 3.0


def test_increment_law_is_rotation_invariant():
    n = 200_000
    draws = stable_increment(0.5, 1.2, 0.6, 2, np.random.default_rng(8), n=n)
    xa = np.array([1.0, 0.0])
    xb = np.array([1.0, 1.0]) / math.sqrt(2)
    ca = np.cos(draws @ xa).mean()
    cb = np.cos(draws @ xb).mean()
    assert abs(ca - cb) < 3 * math.sqrt(2 / n)


def test_gaussian_case_has_variance_two_gamma_dt_per_axis():
    # alpha=2 with scale gamma gives CF exp(-dt*gamma*|xi|^2), i.e. a
    # Gaussian with per-coordinate variance 2*gamma*dt
    n = 200_000
    dt, gamma = 0.25, 0.5
    draws = stable_increment(dt, 2.0, gamma, 3, np.random.default_rng(9), n=n)
    v = draws.var(axis=0)
    target = 2 * gamma * dt
    assert np.all(np.abs(v - target) < 3 * target * math.sqrt(2 / n))


def test_cauchy_tail_exponent_is_one():
    draws = stable_increment(1.0, 1.0, 1.0, 1, np.random.default_rng(10),
                             n=10**6)[:, 0]
    qs = np.array([20.0, 200.0])
    fr = [(np.abs(draws) > q).mean() for q in qs]
    slope = math.log(fr[1] / fr[0]) / math.log(qs[1] / qs[0])
    assert abs(slope + 1.0) < 0.15


def test_increment_rejects_nonpositive_dt():
    with pytest.raises(ValueError):
        stable_increment(0.0, 1.5, 1.0, 2, np.random.default_rng(0), n=4)


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def _disc_params(eta0=10**4):
    return LevyParams(alpha=2.0, gamma=0.5, kappa=1 / math.sqrt(3), eta0=eta0,
                      p0=UniformDisc((0.0, 0.0), 0.05), B=(0.3, 0.5),
                      sigma=0.3)


def test_initial_count_is_poisson():
    params = _disc_params()
    counts = [init(params, np.random.default_rng(s)).n_total
              for s in range(200)]
    m, v = np.mean(counts), np.var(counts)
    assert abs(m - 1e4) < 3 * math.sqrt(1e4 / 200)
    assert abs(v - 1e4) < 3 * 1e4 * math.sqrt(2 / 199)


def test_initial_positions_fill_the_release_disc():
    params = _disc_params()
    sys0 = init(params, np.random.default_rng(5))
    r = np.linalg.norm(sys0.positions, axis=1)
    assert np.all(r <= 0.05 + 1e-15)
    # uniform on a disc: P(r <= R/2) = 1/4
    frac = (r <= 0.025).mean()
    assert abs(frac - 0.25) < 3 * math.sqrt(0.25 * 0.75 / sys0.n_total)


def test_point_release_starts_every_particle_at_the_point():
    params = LevyParams(alpha=2.0, gamma=0.5, kappa=1.0, eta0=500,
                        p0=DiracAt((1.0, -2.0)), B=(0.0, 0.0), sigma=1.0)
    sys0 = init(params, np.random.default_rng(42))
    assert np.all(sys0.positions == np.array([1.0, -2.0]))
    assert np.all(sys0.alive)


def test_density_grid_release_respects_the_density():
    from spdelab.fields import Grid, GridField

    g = Grid(((-1.0, 1.0),), (40,))
    dens = np.where(g.centers()[..., 0] > 0, 1.0, 0.0)  # right half only
    p0 = DensityGrid(GridField(g, dens, 0.0))
    params = LevyParams(alpha=2.0, gamma=0.5, kappa=1.0, eta0=2000,
                        p0=p0, B=(0.0,), sigma=1.0)
    sys0 = init(params, np.random.default_rng(17))
    assert np.all(sys0.positions[:, 0] > 0.0)


# ---------------------------------------------------------------------------
# Transitions
# ---------------------------------------------------------------------------

def test_survival_fraction_decays_at_the_absorption_rate():
    params = _disc_params()
    sys0 = init(params, np.random.default_rng(3))
    s1 = exact_gaussian_transition(sys0, 1.0, params,
                                   np.random.default_rng(4))
    pth = math.exp(-1.0 / 3.0)  # kappa^2 = 1/3, t = 1
    fr = s1.alive.mean()
    assert abs(fr - pth) < 3 * math.sqrt(pth * (1 - pth) / s1.n_total)


def test_euler_chain_reproduces_gaussian_moments():
    params = LevyParams(alpha=2.0, gamma=0.5, kappa=0.05, eta0=20000,
                        p0=DiracAt((0.0, 0.0)), B=(0.3, 0.5), sigma=0.3)
    s = init(params, np.random.default_rng(11))
    r2 = np.random.default_rng(12)
    for _ in range(20):
        s = step_euler(s, 0.05, params, r2)
    pos = s.alive_positions()
    n = pos.shape[0]
    mean, var = pos.mean(axis=0), pos.var(axis=0)
    # after t=1: mean = B*t, per-axis variance = sigma^2 * t
    assert np.all(np.abs(mean - [0.3, 0.5]) < 3 * 0.3 / math.sqrt(n))
    assert np.all(np.abs(var - 0.09) < 3 * 0.09 * math.sqrt(2 / n))


def test_exact_transition_matches_euler_distribution():
    params = LevyParams(alpha=2.0, gamma=0.5, kappa=0.05, eta0=20000,
                        p0=DiracAt((0.0, 0.0)), B=(0.3, 0.5), sigma=0.3)
    sys0 = init(params, np.random.default_rng(11))
    s_eul = sys0
    r2 = np.random.default_rng(12)
    for _ in range(20):
        s_eul = step_euler(s_eul, 0.05, params, r2)
    s_ex = exact_gaussian_transition(sys0, 1.0, params,
                                     np.random.default_rng(15))
    pe, pu = s_ex.alive_positions(), s_eul.alive_positions()
    n = min(pe.shape[0], pu.shape[0])
    assert np.all(np.abs(pe.mean(0) - pu.mean(0)) < 3 * 0.3 * math.sqrt(2 / n))
    assert np.all(np.abs(pe.var(0) - pu.var(0)) < 4 * 0.09 * math.sqrt(2 / n))


def test_zero_drift_vanishing_noise_leaves_positions_fixed():
    params = LevyParams(alpha=2.0, gamma=0.5, kappa=1e-9, eta0=100,
                        p0=DiracAt((0.5, 0.5)), B=(0.0, 0.0), sigma=1e-300)
    s0 = init(params, np.random.default_rng(13))
    s1 = step_euler(s0, 0.1, params, np.random.default_rng(14))
    assert np.allclose(s1.positions, 0.5, atol=1e-12)


def test_exact_transition_at_same_time_is_identity():
    params = _disc_params(eta0=500)
    sys0 = init(params, np.random.default_rng(16))
    si = exact_gaussian_transition(sys0, 0.0, params,
                                   np.random.default_rng(16))
    assert np.all(si.positions == sys0.positions)
    assert np.all(si.alive == sys0.alive)


def test_exact_transition_validation():
    params = _disc_params(eta0=100)
    sys0 = init(params, np.random.default_rng(1))
    with pytest.raises(ValueError):
        exact_gaussian_transition(sys0, -1.0, params,
                                  np.random.default_rng(1))
    jumpy = LevyParams(alpha=1.5, gamma=0.5, kappa=1.0, eta0=100,
                       p0=UniformDisc((0.0, 0.0), 0.05), B=(0.0, 0.0),
                       sigma=0.3)
    with pytest.raises(ValueError):
        exact_gaussian_transition(sys0, 1.0, jumpy, np.random.default_rng(1))


# ---------------------------------------------------------------------------
# Expected-density closed form
# ---------------------------------------------------------------------------

THETA = ModelParams(B1=0.3, B2=0.5, sigma=0.3, kappa=1 / math.sqrt(3))


def test_intensity_integrates_to_expected_survivors():
    big = ((-20.0, 20.0), (-20.0, 20.0))
    val = intensity_box_mass(big, 1.0, THETA, 1e4)
    assert abs(val - 1e4 * math.exp(-1.0 / 3.0)) < 1e-6


def test_intensity_peak_value():
    pk = analytic_intensity(np.array([0.3, 0.5]), 1.0, THETA, 1e4)
    th = 1e4 * math.exp(-1.0 / 3.0) / (2 * math.pi * 0.09)
    assert abs(pk - th) < 1e-9


def test_intensity_requires_positive_time():
    with pytest.raises(DomainError):
        analytic_intensity(np.array([0.0, 0.0]), 0.0, THETA, 1e4)
    with pytest.raises(DomainError):
        intensity_box_mass(((0.0, 1.0), (0.0, 1.0)), -1.0, THETA, 1e4)


def test_simulated_window_counts_match_intensity_mass():
    params = _disc_params()
    window = ((0.0, 1.0), (0.0, 1.0))
    tot_in = 0
    n_runs = 60
    for s in range(n_runs):
        ss = init(params, np.random.default_rng(1000 + s))
        ss = exact_gaussian_transition(ss, 1.0, params,
                                       np.random.default_rng(2000 + s))
        ap = ss.alive_positions()
        tot_in += int(np.sum((ap[:, 0] >= 0) & (ap[:, 0] < 1)
                             & (ap[:, 1] >= 0) & (ap[:, 1] < 1)))
    expected = n_runs * intensity_box_mass(window, 1.0, THETA, 1e4)
    # the finite release disc vs the point-release closed form justifies
    # the small relative slack on top of the Poisson band
    assert abs(tot_in - expected) < 3 * math.sqrt(expected) + 0.002 * expected


# ---------------------------------------------------------------------------
# Deposition
# ---------------------------------------------------------------------------

def test_deposited_density_matches_time_integrated_intensity():
    params = _disc_params()
    ss = init(params, np.random.default_rng(77))
    for tt in (1.0, 3.0):
        ss = exact_gaussian_transition(ss, tt, params,
                                       np.random.default_rng(int(77 + tt)))
    res = deposited_density_check(ss, ((-1.0, 1.0), (-1.0, 1.0)), 3.0,
                                  THETA, 1e4)
    assert abs(res["z"]) < 3.0


def test_deposit_times_are_exponential():
    params = _disc_params()
    ss = init(params, np.random.default_rng(88))
    ss = exact_gaussian_transition(ss, 50.0, params, np.random.default_rng(89))
    stat, pval = kstest(ss.deposit_times(), "expon", args=(0, 3.0))
    assert pval > 0.01


def test_deposit_bookkeeping_is_consistent():
    params = _disc_params(eta0=2000)
    ss = init(params, np.random.default_rng(21))
    ss = exact_gaussian_transition(ss, 2.0, params, np.random.default_rng(22))
    n_alive = int(ss.alive.sum())
    assert n_alive + len(ss.deposited_positions()) == ss.n_total
    assert np.all(ss.deposit_times() <= 2.0)
    assert np.all(ss.deposit_times() >= 0.0)


# ---------------------------------------------------------------------------
# Parameter validation
# ---------------------------------------------------------------------------

def test_model_params_validation():
    with pytest.raises(ValueError):
        ModelParams(B1=0.0, B2=0.0, sigma=0.0, kappa=1.0)
    with pytest.raises(ValueError):
        ModelParams(B1=0.0, B2=0.0, sigma=1.0, kappa=-1.0)


def test_levy_params_validation():
    p0 = UniformDisc((0.0, 0.0), 0.05)
    with pytest.raises(ValueError):
        LevyParams(alpha=2.5, gamma=0.5, kappa=1.0, eta0=100, p0=p0,
                   B=(0.0, 0.0), sigma=1.0)
    with pytest.raises(ValueError):
        LevyParams(alpha=2.0, gamma=-0.5, kappa=1.0, eta0=100, p0=p0,
                   B=(0.0, 0.0), sigma=1.0)
    with pytest.raises(ValueError):  # B and Bfun together
        LevyParams(alpha=2.0, gamma=0.5, kappa=1.0, eta0=100, p0=p0,
                   B=(0.0, 0.0), Bfun=lambda x, t: x, sigma=1.0)
    with pytest.raises(ValueError):  # B dimension mismatch
        LevyParams(alpha=2.0, gamma=0.5, kappa=1.0, eta0=100, p0=p0,
                   B=(0.0,), sigma=1.0)
    with pytest.raises(ValueError):
        UniformDisc((0.0, 0.0), 0.0)
