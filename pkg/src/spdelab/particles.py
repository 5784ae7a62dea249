"""Interacting-free particle system: stable Levy flights with drift and
exponential deposition.

Each particle follows dX = B(X, t) dt + sigma(X, t) dL where L is a
rotation-invariant alpha-stable process with scale gamma (characteristic
function of an increment: exp(-dt gamma |xi|^alpha)), and carries an
independent Exp(kappa^2) deposition clock tau.  Once tau elapses the
particle stops and is recorded at its deposit position.

The homogeneous Gaussian special case (alpha = 2, gamma = 1/2, constant B
and sigma) admits exact transitions over arbitrary time gaps and a closed
form for the expected density of dispersing particles started from a point
mass at the origin (:func:`analytic_intensity`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field, replace
from typing import Callable, Optional, Union

import numpy as np
from scipy.special import ndtr

from .special import DomainError

__all__ = [
    "ModelParams",
    "UniformDisc",
    "DiracAt",
    "DensityGrid",
    "LevyParams",
    "ParticleSystem",
    "init",
    "stable_increment",
    "step_euler",
    "exact_gaussian_transition",
    "analytic_intensity",
    "deposited_density_check",
]


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the planar homogeneous Gaussian model: drift (B1, B2),
    noise scale sigma, deposition rate kappa^2."""

    B1: float
    B2: float
    sigma: float
    kappa: float

    def __post_init__(self):
        if self.sigma <= 0 or self.kappa <= 0:
            raise ValueError("sigma and kappa must be positive")

    @property
    def B(self) -> np.ndarray:
        return np.array([self.B1, self.B2])


# ---------------------------------------------------------------------------
# Initial distributions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UniformDisc:
    """Uniform on a ball (interval / disc / solid sphere) of given radius."""

    center: tuple
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def d(self) -> int:
        return len(self.center)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        d = self.d
        c = np.asarray(self.center)
        r = self.radius * rng.uniform(size=n) ** (1.0 / d)
        if d == 1:
            sgn = rng.choice([-1.0, 1.0], size=n)
            return c + (r * sgn)[:, None]
        g = rng.standard_normal((n, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return c + r[:, None] * g


@dataclass(frozen=True)
class DiracAt:
    point: tuple

    def __post_init__(self):
        object.__setattr__(self, "point", tuple(float(c) for c in self.point))

    @property
    def d(self) -> int:
        return len(self.point)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.tile(np.asarray(self.point), (n, 1))


@dataclass(frozen=True)
class DensityGrid:
    """Initial density proportional to nonnegative grid values."""

    field: "object"  # GridField

    @property
    def d(self) -> int:
        return self.field.grid.d

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        grid = self.field.grid
        w = np.asarray(self.field.values, dtype=float).ravel()
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("density values must be nonnegative with positive mass")
        idx = rng.choice(w.size, size=n, p=w / w.sum())
        multi = np.unravel_index(idx, grid.n)
        pts = np.empty((n, grid.d))
        for a in range(grid.d):
            lo = grid.extent[a][0]
            pts[:, a] = lo + (multi[a] + rng.uniform(size=n)) * grid.dx
        return pts


InitialDistribution = Union[UniformDisc, DiracAt, DensityGrid]


# ---------------------------------------------------------------------------
# Model parameters and system state
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LevyParams:
    """Full particle-model specification.

    Pass constants `B` (vector) and `sigma` (scalar) for the spatially
    homogeneous model, or callables `Bfun(x, t)` / `sigmafun(x, t)` for the
    general one.  `homogeneous` is true only in the constant case.
    """

    alpha: float
    gamma: float
    kappa: float
    eta0: float
    p0: InitialDistribution
    B: Optional[tuple] = None
    sigma: Optional[float] = None
    Bfun: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    sigmafun: Optional[Callable[[np.ndarray, float], np.ndarray]] = None

    def __post_init__(self):
        if not 0 < self.alpha <= 2:
            raise ValueError("alpha must lie in (0, 2]")
        if self.gamma <= 0 or self.kappa <= 0 or self.eta0 <= 0:
            raise ValueError("gamma, kappa, eta0 must be positive")
        if (self.B is None) == (self.Bfun is None):
            raise ValueError("give exactly one of B, Bfun")
        if (self.sigma is None) == (self.sigmafun is None):
            raise ValueError("give exactly one of sigma, sigmafun")
        if self.B is not None:
            object.__setattr__(self, "B", tuple(float(b) for b in self.B))
            if len(self.B) != self.p0.d:
                raise ValueError("B dimension must match p0")
        if self.sigma is not None and self.sigma <= 0:
            raise ValueError("sigma must be positive")

    @property
    def d(self) -> int:
        return self.p0.d

    @property
    def homogeneous(self) -> bool:
        return self.B is not None and self.sigma is not None

    def drift_at(self, x: np.ndarray, t: float) -> np.ndarray:
        if self.B is not None:
            return np.broadcast_to(np.asarray(self.B), x.shape)
        return np.asarray(self.Bfun(x, t), dtype=float)

    def noise_scale_at(self, x: np.ndarray, t: float) -> np.ndarray:
        if self.sigma is not None:
            return np.full(x.shape[:-1], self.sigma)
        return np.asarray(self.sigmafun(x, t), dtype=float)


@dataclass
class ParticleSystem:
    """State of every particle ever created: current (or deposit) position,
    alive flag, pre-drawn deposition time tau, and the current time."""

    positions: np.ndarray
    alive: np.ndarray
    tau: np.ndarray
    t: float

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        self.alive = np.asarray(self.alive, dtype=bool)
        self.tau = np.asarray(self.tau, dtype=float)

    @property
    def n_total(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    def alive_positions(self) -> np.ndarray:
        return self.positions[self.alive]

    def deposited_positions(self) -> np.ndarray:
        return self.positions[~self.alive]

    def deposit_times(self) -> np.ndarray:
        """Deposition times of deposited particles (their tau draws)."""
        return self.tau[~self.alive]


def init(params: LevyParams, rng: np.random.Generator) -> ParticleSystem:
    """Draw a fresh system: Poisson(eta0) particles, i.i.d. initial
    positions from p0, pre-drawn Exp(kappa^2) deposition clocks."""
    n0 = int(rng.poisson(params.eta0))
    positions = params.p0.sample(n0, rng) if n0 > 0 else np.empty((0, params.d))
    tau = rng.exponential(1.0 / params.kappa ** 2, size=n0)
    return ParticleSystem(positions=positions, alive=np.ones(n0, dtype=bool),
                          tau=tau, t=0.0)


# ---------------------------------------------------------------------------
# Stable increments (subordinated Gaussian construction)
# ---------------------------------------------------------------------------


def _positive_stable(a: float, size, rng: np.random.Generator) -> np.ndarray:
    """Positive a-stable draws (0 < a < 1) with Laplace transform
    exp(-lambda^a), via Kanter's representation."""
    theta = rng.uniform(0.0, math.pi, size=size)
    w = rng.exponential(1.0, size=size)
    ratio = a / (1.0 - a)
    A = (np.sin(a * theta) ** ratio * np.sin((1.0 - a) * theta)
         / np.sin(theta) ** (1.0 / (1.0 - a)))
    return (A / w) ** (1.0 / ratio)


def stable_increment(dt: float, alpha: float, gamma: float, d: int,
                     rng: np.random.Generator, n: int = 1) -> np.ndarray:
    """n rotation-invariant alpha-stable increments over a step dt, as an
    (n, d) array with E[exp(i xi . dL)] = exp(-dt gamma |xi|^alpha).

    Subordination: dL = sqrt(2 (dt gamma)^(2/alpha) S) Z with S positive
    (alpha/2)-stable (unit Laplace scale) and Z standard normal.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    z = rng.standard_normal((n, d))
    if alpha == 2.0:
        return math.sqrt(2.0 * gamma * dt) * z
    s = _positive_stable(alpha / 2.0, n, rng)
    return np.sqrt(2.0 * (dt * gamma) ** (2.0 / alpha) * s)[:, None] * z


# ---------------------------------------------------------------------------
# Time evolution
# ---------------------------------------------------------------------------


def step_euler(sys: ParticleSystem, dt: float, params: LevyParams,
               rng: np.random.Generator) -> ParticleSystem:
    """One Euler step: deposit particles whose clock elapses during
    (t, t+dt] at their pre-jump position; move the rest."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    pos = sys.positions.copy()
    alive = sys.alive.copy()
    t = sys.t
    dying = alive & (sys.tau <= t + dt)
    movers = alive & ~dying
    n_mov = int(movers.sum())
    if n_mov > 0:
        x = pos[movers]
        dl = stable_increment(dt, params.alpha, params.gamma, sys.d, rng, n=n_mov)
        pos[movers] = (x + params.drift_at(x, t) * dt
                       + params.noise_scale_at(x, t)[:, None] * dl)
    alive[dying] = False
    return ParticleSystem(positions=pos, alive=alive, tau=sys.tau, t=t + dt)


def exact_gaussian_transition(sys: ParticleSystem, t_next: float,
                              params: LevyParams,
                              rng: np.random.Generator) -> ParticleSystem:
    """Jump the homogeneous Gaussian system directly to t_next, exact in law.

    Survivors move by N(B dt, 2 gamma sigma^2 dt I); particles whose clock
    elapses in (t, t_next] are deposited at their exact position at tau.
    """
    if not (params.homogeneous and params.alpha == 2.0):
        raise ValueError("exact transition needs the homogeneous alpha=2 model")
    if t_next < sys.t:
        raise ValueError("t_next must not precede the current time")
    if t_next == sys.t:
        return replace(sys, positions=sys.positions.copy(),
                       alive=sys.alive.copy())
    pos = sys.positions.copy()
    alive = sys.alive.copy()
    B = np.asarray(params.B)
    sig = params.sigma
    dying = alive & (sys.tau <= t_next)
    movers = alive & ~dying
    for mask, gap in ((dying, sys.tau[dying] - sys.t),
                      (movers, np.full(int(movers.sum()), t_next - sys.t))):
        n = int(mask.sum())
        if n == 0:
            continue
        z = rng.standard_normal((n, sys.d))
        pos[mask] = (pos[mask] + B * gap[:, None]
                     + sig * np.sqrt(2.0 * params.gamma * gap)[:, None] * z)
    alive[dying] = False
    return ParticleSystem(positions=pos, alive=alive, tau=sys.tau, t=t_next)


# ---------------------------------------------------------------------------
# Closed-form intensity of the planar Brownian model (point-mass start)
# ---------------------------------------------------------------------------


def analytic_intensity(x, t: float, theta: ModelParams, eta0: float):
    """Expected density of dispersing particles at x (shape (..., 2)) and
    time t > 0 for the homogeneous model started as a point mass at 0:

        eta0 exp(-kappa^2 t) (sigma sqrt(2 pi t))^(-2)
             exp(-|x - B t|^2 / (2 sigma^2 t)).
    """
    if t <= 0:
        raise DomainError("analytic intensity requires t > 0")
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2:
        raise ValueError("x must have trailing dimension 2")
    v = theta.sigma ** 2 * t
    dev = x - theta.B * t
    quad = (dev ** 2).sum(axis=-1)
    out = (eta0 * math.exp(-theta.kappa ** 2 * t) / (2.0 * math.pi * v)
           * np.exp(-quad / (2.0 * v)))
    return out if out.ndim else float(out)


def intensity_box_mass(box, t: float, theta: ModelParams, eta0: float) -> float:
    """Integral of analytic_intensity over an axis-aligned box, exactly
    (product of Gaussian interval probabilities)."""
    if t <= 0:
        raise DomainError("requires t > 0")
    sd = theta.sigma * math.sqrt(t)
    mass = eta0 * math.exp(-theta.kappa ** 2 * t)
    for (lo, hi), b in zip(box, (theta.B1, theta.B2)):
        mass *= ndtr((hi - b * t) / sd) - ndtr((lo - b * t) / sd)
    return float(mass)


def deposited_density_check(sys: ParticleSystem, box, t: float,
                            theta: ModelParams, eta0: float) -> dict:
    """Compare the number of recorded deposits inside `box` with clock time
    <= t against the model's expectation kappa^2 int_0^t phi_s(box) ds.

    Returns observed and expected counts and the normal deviate z under the
    (slightly conservative) Poisson variance approximation.
    """
    from scipy.integrate import quad

    dep_pos = sys.deposited_positions()
    dep_t = sys.deposit_times()
    inside = np.ones(dep_pos.shape[0], dtype=bool)
    for a, (lo, hi) in enumerate(box):
        inside &= (dep_pos[:, a] >= lo) & (dep_pos[:, a] < hi)
    observed = int((inside & (dep_t <= t)).sum())
    rate = lambda s: intensity_box_mass(box, s, theta, eta0)
    integral, _ = quad(rate, 0.0, t, limit=200)
    expected = theta.kappa ** 2 * integral
    z = (observed - expected) / math.sqrt(max(expected, 1e-300))
    return {"observed": observed, "expected": expected, "z": z}
