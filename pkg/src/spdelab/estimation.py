"""Pseudo-likelihood estimation for the planar drift-diffusion-death model.

Observations are particle locations (or just particle counts) inside a few
windows at a few times.  Both observation modes lead to Poisson-type
pseudo-log-likelihoods built from the closed-form mean intensity of
:mod:`spdelab.particles`; maximization runs Nelder-Mead on a per-coordinate
scaled-logit transform of the parameter box (log scale for the positive
scale parameters), so every evaluated parameter vector lies strictly inside
the box.  ``mc_study`` repeats the
simulate-observe-fit cycle over independent replicate streams and summarizes
the sampling distribution of the estimators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .particles import (
    DiracAt,
    LevyParams,
    ModelParams,
    UniformDisc,
    analytic_intensity,
    exact_gaussian_transition,
    init as init_particles,
)
from .pointprocess import Window, _gl_integral

__all__ = [
    "Bounds",
    "ObservationSet",
    "simulate_observations",
    "pseudo_loglik_locations",
    "pseudo_loglik_counts",
    "fit",
    "FitResult",
    "StudyConfig",
    "StudyResult",
    "default_study_config",
    "mc_study",
    "splitmix64",
]

PARAM_NAMES = ("B1", "B2", "sigma", "kappa")
SUMMARY_PARAMS = ("B1", "B2", "sigma", "inv_kappa2")

# sigma and kappa are positive scale parameters whose boxes span decades,
# so search coordinates interpolate them geometrically; the drift
# components may take either sign and stay linear
_GEOMETRIC = np.array([False, False, True, True])


# ---------------------------------------------------------------------------
# Parameter box
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Bounds:
    """Per-parameter open search box (low, high) for (B1, B2, sigma, kappa).

    The sigma and kappa boxes need positive lower bounds; both parameters
    are searched on a log scale."""

    B1: tuple = (-1.0, 1.0)
    B2: tuple = (-1.0, 1.0)
    sigma: tuple = (0.01, 1.0)
    kappa: tuple = (0.1, 10.0)

    def __post_init__(self):
        for name, geometric in zip(PARAM_NAMES, _GEOMETRIC):
            lo, hi = (float(v) for v in getattr(self, name))
            if not lo < hi:
                raise ValueError(f"{name}: need low < high, got ({lo}, {hi})")
            if geometric and lo <= 0.0:
                raise ValueError(f"{name}: low bound must be positive")
            object.__setattr__(self, name, (lo, hi))

    @property
    def lows(self) -> np.ndarray:
        return np.array([getattr(self, n)[0] for n in PARAM_NAMES])

    @property
    def highs(self) -> np.ndarray:
        return np.array([getattr(self, n)[1] for n in PARAM_NAMES])

    def contains(self, theta: ModelParams) -> bool:
        vec = (theta.B1, theta.B2, theta.sigma, theta.kappa)
        return all(lo < v < hi
                   for v, lo, hi in zip(vec, self.lows, self.highs))


# ---------------------------------------------------------------------------
# Observations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ObservationSet:
    """Window observations at strictly increasing positive times.

    ``mode`` is ``"locations"`` (per-window point arrays) or ``"counts"``
    (per-window integers).  Location sets precompute per-window sufficient
    statistics (n, sum x, sum |x|^2) so likelihood evaluations do not rescan
    the points.
    """

    mode: str
    windows: tuple
    times: tuple
    points: Optional[tuple] = None
    counts: Optional[tuple] = None

    def __post_init__(self):
        if self.mode not in ("locations", "counts"):
            raise ValueError("mode must be 'locations' or 'counts'")
        windows = tuple(self.windows)
        times = tuple(float(t) for t in self.times)
        object.__setattr__(self, "windows", windows)
        object.__setattr__(self, "times", times)
        if len(windows) < 1:
            raise ValueError("need at least one observation window")
        if len(times) != len(windows):
            raise ValueError("need one time per window")
        if times[0] <= 0 or any(a >= b for a, b in zip(times, times[1:])):
            raise ValueError("times must be positive and strictly increasing")
        if self.mode == "locations":
            if self.points is None or self.counts is not None:
                raise ValueError("locations mode takes points, not counts")
            pts = []
            for w, p in zip(windows, self.points):
                arr = np.asarray(p, dtype=float).reshape(-1, w.d)
                if arr.size and not np.all(w.contains(arr)):
                    raise ValueError("every point must lie in its window")
                pts.append(arr)
            object.__setattr__(self, "points", tuple(pts))
            # fsum is correctly rounded, so the statistics (and through them
            # the likelihood) are exactly invariant to point ordering
            stats = tuple((a.shape[0],
                           np.array([math.fsum(a[:, 0]), math.fsum(a[:, 1])]),
                           math.fsum(a.ravel() ** 2))
                          for a in self.points)
            object.__setattr__(self, "_loc_stats", stats)
        else:
            if self.counts is None or self.points is not None:
                raise ValueError("counts mode takes counts, not points")
            cnt = tuple(int(c) for c in self.counts)
            if any(c < 0 for c in cnt):
                raise ValueError("counts must be nonnegative")
            object.__setattr__(self, "counts", cnt)

    @property
    def K(self) -> int:
        return len(self.windows)

    def to_counts(self) -> "ObservationSet":
        """Forget the locations, keeping only the per-window counts."""
        if self.mode != "locations":
            raise ValueError("already a counts observation set")
        return ObservationSet(mode="counts", windows=self.windows,
                              times=self.times,
                              counts=tuple(p.shape[0] for p in self.points))


def simulate_observations(theta: ModelParams, eta0: float, windows, times,
                          rng: np.random.Generator,
                          release_radius: float = 0.05) -> ObservationSet:
    """Run one particle system (released uniformly in a small disc at the
    origin, exact Gaussian transitions) and record the alive locations
    inside each window at its time.  The likelihoods approximate the release
    as a point mass; ``release_radius=0`` makes that exact."""
    p0 = (UniformDisc((0.0, 0.0), release_radius) if release_radius > 0
          else DiracAt((0.0, 0.0)))
    params = LevyParams(alpha=2.0, gamma=0.5, kappa=theta.kappa, eta0=eta0,
                        p0=p0, B=(theta.B1, theta.B2), sigma=theta.sigma)
    sys = init_particles(params, rng)
    pts = []
    for w, t in zip(windows, times):
        sys = exact_gaussian_transition(sys, float(t), params, rng)
        alive = sys.alive_positions()
        pts.append(alive[w.contains(alive)] if alive.size
                   else np.empty((0, w.d)))
    return ObservationSet(mode="locations", windows=tuple(windows),
                          times=tuple(times), points=tuple(pts))


# ---------------------------------------------------------------------------
# Pseudo-log-likelihoods
# ---------------------------------------------------------------------------


def _phi(window: Window, t: float, theta: ModelParams, eta0: float,
         n_nodes: int) -> float:
    """Gauss-Legendre intensity measure of one window (the value component
    of pointprocess.intensity_measure)."""
    return _gl_integral(
        lambda x, tt: analytic_intensity(x, tt, theta, eta0),
        window, t, n_nodes)


def pseudo_loglik_locations(obs: ObservationSet, theta: ModelParams,
                            eta0: float, n_nodes: int = 32) -> float:
    """Poisson-process pseudo-log-likelihood of observed locations:

        sum_k [ |A_k| - phi_k + sum_i log u(t_k, X_i) ]

    with u the closed-form mean intensity and phi_k its quadrature measure
    of window k.  The constant |A_k| term is kept.  Returns -inf when any
    observed point has zero intensity (degenerate configuration)."""
    if obs.mode != "locations":
        raise ValueError("needs a locations observation set")
    b1, b2, sig, kap = theta.B1, theta.B2, theta.sigma, theta.kappa
    bsq = b1 * b1 + b2 * b2
    log_eta0 = math.log(eta0)
    total = 0.0
    for window, t, (n, s1, s2) in zip(obs.windows, obs.times,
                                      obs._loc_stats):
        total += window.volume - _phi(window, t, theta, eta0, n_nodes)
        if n:
            v = sig * sig * t
            sq_dev = s2 - 2.0 * t * (b1 * s1[0] + b2 * s1[1]) + n * t * t * bsq
            total += (n * (log_eta0 - kap * kap * t
                           - math.log(2.0 * math.pi * v))
                      - sq_dev / (2.0 * v))
    return total if math.isfinite(total) else -math.inf


def pseudo_loglik_counts(obs: ObservationSet, theta: ModelParams,
                         eta0: float, n_nodes: int = 32) -> float:
    """Poisson-count pseudo-log-likelihood of window counts:

        sum_k [ N_k log phi_k - phi_k - log N_k! ]."""
    if obs.mode != "counts":
        raise ValueError("needs a counts observation set")
    total = 0.0
    for window, t, n_k in zip(obs.windows, obs.times, obs.counts):
        phi = _phi(window, t, theta, eta0, n_nodes)
        if phi <= 0.0:
            if n_k > 0:
                return -math.inf
            continue
        total += n_k * math.log(phi) - phi - math.lgamma(n_k + 1)
    return total if math.isfinite(total) else -math.inf


def _loglik(obs: ObservationSet, theta: ModelParams, eta0: float,
            n_nodes: int) -> float:
    if obs.mode == "locations":
        return pseudo_loglik_locations(obs, theta, eta0, n_nodes)
    return pseudo_loglik_counts(obs, theta, eta0, n_nodes)


# ---------------------------------------------------------------------------
# Box-constrained maximization
# ---------------------------------------------------------------------------


class FitResult(NamedTuple):
    theta: ModelParams
    loglik: float
    diagnostics: dict


def _unit_to_vec(u: np.ndarray, lows: np.ndarray,
                 highs: np.ndarray) -> np.ndarray:
    """Map unit-interval search coordinates to parameter vectors (linear
    for the drift components, geometric for the scale parameters)."""
    u = np.asarray(u, dtype=float)
    vec = lows + (highs - lows) * u
    m = _GEOMETRIC
    vec[..., m] = lows[m] * (highs[m] / lows[m]) ** u[..., m]
    return vec


def _vec_to_unit(vec: np.ndarray, lows: np.ndarray,
                 highs: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    u = (vec - lows) / (highs - lows)
    m = _GEOMETRIC
    u[..., m] = np.log(vec[..., m] / lows[m]) / np.log(highs[m] / lows[m])
    return u


def _theta_from_y(y: np.ndarray, lows: np.ndarray,
                  highs: np.ndarray) -> ModelParams:
    s = np.clip(expit(np.asarray(y, dtype=float)), 1e-12, 1.0 - 1e-12)
    return ModelParams(*_unit_to_vec(s, lows, highs))

def _y_from_theta(vec: np.ndarray, lows: np.ndarray,
                  highs: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        s = _vec_to_unit(vec, lows, highs)
    if not np.all((s > 0.0) & (s < 1.0)):
        raise ValueError("start point must lie strictly inside the bounds")
    return np.log(s / (1.0 - s))


def _latin_hypercube(bounds: Bounds, n: int,
                     rng: np.random.Generator) -> np.ndarray:
    """n stratified starts, strictly inside the box on every coordinate
    (stratification is uniform in the search coordinates, so scale
    parameters are covered evenly across their decades)."""
    lows, highs = bounds.lows, bounds.highs
    u = np.empty((n, len(PARAM_NAMES)))
    for j in range(len(PARAM_NAMES)):
        u[rng.permutation(n), j] = (np.arange(n)
                                    + rng.uniform(0.1, 0.9, size=n)) / n
    return _unit_to_vec(u, lows, highs)


def fit(obs: ObservationSet, bounds: Optional[Bounds] = None,
        init: Optional[ModelParams] = None, eta0: float = 1e4,
        n_starts: int = 5, seed: int = 0, n_nodes: int = 32,
        maxfev: int = 2000, xatol: float = 1e-6) -> FitResult:
    """Maximize the mode-appropriate pseudo-log-likelihood over the box.

    Nelder-Mead runs in scaled-logit coordinates, linear for the drift
    components and logarithmic for the scale parameters, so iterates stay
    strictly inside the box.  Starts are ``init`` (or the midpoint of the
    search coordinates) plus Latin-hypercube draws seeded by ``seed``.  A
    start terminates when its simplex diameter falls below ``xatol`` or
    after ``maxfev`` evaluations.  Returns the best vertex;
    ``diagnostics["converged"]`` is False when no start improved on its
    own starting value."""
    bounds = bounds if bounds is not None else Bounds()
    if init is not None and not bounds.contains(init):
        raise ValueError("init must lie strictly inside the bounds")

    def loglik(theta):
        return _loglik(obs, theta, eta0, n_nodes)

    first = init if init is not None else ModelParams(
        *_unit_to_vec(np.full(len(PARAM_NAMES), 0.5), bounds.lows,
                      bounds.highs))
    starts = [np.array([first.B1, first.B2, first.sigma, first.kappa])]
    if n_starts > 1:
        rng = np.random.default_rng(seed)
        starts.extend(_latin_hypercube(bounds, n_starts - 1, rng))
    return _maximize_box(loglik, bounds, starts, maxfev, xatol)


def _maximize_box(loglik, bounds: Bounds, starts,
                  maxfev: int, xatol: float) -> FitResult:
    """Nelder-Mead maximization of loglik(ModelParams) in scaled-logit
    coordinates from each start, keeping the global best."""
    lows, highs = bounds.lows, bounds.highs

    def objective(y):
        theta = _theta_from_y(y, lows, highs)
        assert bounds.contains(theta)
        val = loglik(theta)
        return -val if math.isfinite(val) else math.inf

    records, best = [], None
    for theta0 in starts:
        y0 = _y_from_theta(theta0, lows, highs)
        f0 = objective(y0)
        res = minimize(objective, y0, method="Nelder-Mead",
                       options={"xatol": xatol, "fatol": math.inf,
                                "maxfev": maxfev})
        improved = res.fun < f0
        records.append({"theta0": tuple(theta0), "loglik": -res.fun,
                        "nfev": int(res.nfev), "improved": bool(improved)})
        if best is None or res.fun < best[0]:
            best = (res.fun, res.x)
    theta_hat = _theta_from_y(best[1], lows, highs)
    diagnostics = {
        "converged": any(r["improved"] for r in records),
        "n_evals": sum(r["nfev"] for r in records) + len(records),
        "best_start": int(np.argmax([r["loglik"] for r in records])),
        "starts": records,
    }
    return FitResult(theta_hat, -best[0], diagnostics)


# ---------------------------------------------------------------------------
# Replicated simulation study
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1


def splitmix64(seed: int, index: int) -> int:
    """Mix (seed, index) into an independent 64-bit stream seed (splitmix64
    finalizer), so replicate results do not depend on evaluation order."""
    z = (int(seed) + (int(index) + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class StudyConfig:
    """Everything a replicated simulate-observe-fit study needs."""

    truth: ModelParams
    eta0: float
    windows: tuple
    times: tuple
    bounds: Bounds = field(default_factory=Bounds)
    modes: tuple = ("locations", "counts")
    n_starts: int = 5
    n_nodes: int = 32
    maxfev: int = 2000


def default_study_config() -> StudyConfig:
    """Three-window benchmark study: drift (0.3, 0.5), sigma 0.3, mean
    lifetime 3, ten thousand initial particles."""
    return StudyConfig(
        truth=ModelParams(0.3, 0.5, 0.3, 1.0 / math.sqrt(3.0)),
        eta0=1e4,
        windows=(Window(((0.0, 1.0), (0.0, 1.0))),
                 Window(((-1.0, 0.0), (-1.0, 0.0))),
                 Window(((1.0, 2.0), (2.0, 3.0)))),
        times=(1.0, 3.0, 6.0),
    )


@dataclass
class StudyResult:
    """Summary rows plus the raw per-replicate estimates by mode."""

    rows: list
    estimates: dict
    excluded: dict
    reps: int
    master_seed: int


def mc_study(cfg: StudyConfig, reps: int, master_seed: int) -> StudyResult:
    """Replicate simulate -> observe -> fit; summarize estimator moments.

    Replicate r draws every random input from streams derived via
    ``splitmix64(master_seed, r)``, so the result is reproducible and
    independent of the order replicates are evaluated in.  Replicates whose
    fit fails to converge are excluded from the summary and counted."""
    if reps < 30:
        raise ValueError("need at least 30 replicates")
    estimates = {mode: [] for mode in cfg.modes}
    excluded = {mode: 0 for mode in cfg.modes}
    for r in range(reps):
        rep_seed = splitmix64(master_seed, r)
        obs = simulate_observations(
            cfg.truth, cfg.eta0, cfg.windows, cfg.times,
            np.random.default_rng(splitmix64(rep_seed, 0)))
        by_mode = {"locations": obs}
        if "counts" in cfg.modes:
            by_mode["counts"] = obs.to_counts()
        for m_idx, mode in enumerate(cfg.modes):
            theta, _, diag = fit(
                by_mode[mode], cfg.bounds, eta0=cfg.eta0,
                n_starts=cfg.n_starts, seed=splitmix64(rep_seed, 1 + m_idx),
                n_nodes=cfg.n_nodes, maxfev=cfg.maxfev)
            if diag["converged"]:
                estimates[mode].append(
                    [theta.B1, theta.B2, theta.sigma,
                     1.0 / theta.kappa ** 2])
            else:
                excluded[mode] += 1
    rows = []
    for mode in cfg.modes:
        est = np.asarray(estimates[mode], dtype=float).reshape(-1, 4)
        for j, param in enumerate(SUMMARY_PARAMS):
            col = est[:, j]
            rows.append({
                "param": param,
                "mode": mode,
                "mean": float(col.mean()) if col.size else math.nan,
                "sd": float(col.std(ddof=1)) if col.size > 1 else math.nan,
                "reps": int(col.size),
                "excluded": excluded[mode],
            })
        estimates[mode] = est
    return StudyResult(rows=rows, estimates=estimates, excluded=excluded,
                       reps=reps, master_seed=master_seed)
