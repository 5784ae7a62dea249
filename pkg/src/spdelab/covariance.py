"""Stationary covariance functions and their spectral-side counterparts.

A dispersal model is described by a :class:`CovarianceSpec`: an operator
family (damped fractional diffusion, fractional diffusion with reaction,
convolution against a dispersal kernel, or a pure nugget), the dimension,
and its parameters.  The module exposes

* the Fourier symbol ``g(xi)`` and spectral density of each family,
* closed-form covariances (Matern, algebraic-decay, exponential-kernel),
* ``cov_by_transform``, a numerical inverse transform of the spectral
  density used as the reference route against every closed form,
* small utilities (``damped_kernel``, ``h_kappa``, ``practical_range``).

Closed forms are evaluated with the in-repo functions from
:mod:`spdelab.special`; the transform route deliberately relies on
scipy quadrature and scipy Bessel functions so the two sides share no code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import special as _sp
from scipy.integrate import quad as _quad

from . import special as sf

__all__ = [
    "Exponential",
    "MaternKernel",
    "PowerLaw",
    "CovarianceSpec",
    "SpectralPoint",
    "TransformError",
    "symbol",
    "spectral_density",
    "kernel_fourier",
    "conv_density_parts",
    "matern_cov",
    "generalized_matern_cov",
    "frac_reaction_cov_1d",
    "frac_reaction_cov_2d",
    "damped_kernel",
    "h_kappa",
    "cov_exp_kernel_1d",
    "cov_by_transform",
    "practical_range",
]

_FAMILIES = ("DampedFractional", "FractionalReaction", "ConvolutionKernel", "Nugget")


class TransformError(RuntimeError):
    """Numerical inverse transform failed to reach the requested tolerance."""


# ---------------------------------------------------------------------------
# Kernel shapes for the convolution family
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Exponential:
    """Exponential dispersal kernel with range parameter beta > 0."""

    beta: float

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("Exponential kernel requires beta > 0")


@dataclass(frozen=True)
class MaternKernel:
    """Kernel whose scaled Fourier transform is (1 + beta^2 |xi|^2)^(-m)."""

    m: float
    beta: float

    def __post_init__(self):
        if self.m <= 0 or self.beta <= 0:
            raise ValueError("MaternKernel requires m > 0 and beta > 0")


@dataclass(frozen=True)
class PowerLaw:
    """Non-integrable power-law tail |x|^-(d+alpha); only meaningful through
    the FractionalReaction family, never as a convolution kernel."""

    alpha: float

    def __post_init__(self):
        if not 0 < self.alpha < 2:
            raise ValueError("PowerLaw requires 0 < alpha < 2")


KernelShape = Union[Exponential, MaternKernel, PowerLaw]


def kernel_fourier(kernel: KernelShape, xi_norm: float, d: int) -> float:
    """Scaled Fourier transform (2 pi)^(d/2) F(J)(xi) of a unit-mass kernel."""
    t = float(xi_norm) ** 2
    if isinstance(kernel, Exponential):
        return (1.0 + kernel.beta ** 2 * t) ** (-(d + 1) / 2.0)
    if isinstance(kernel, MaternKernel):
        return (1.0 + kernel.beta ** 2 * t) ** (-kernel.m)
    raise ValueError(
        "PowerLaw tails have no integrable kernel; use the FractionalReaction "
        "family, whose symbol |xi|^alpha + kappa^2 is the same limit"
    )


def kernel_density(kernel: KernelShape, r, d: int):
    """Unnormalized kernel density J(|x|) at radii r (vectorized)."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if isinstance(kernel, Exponential):
        return np.exp(-r / kernel.beta)
    if isinstance(kernel, MaternKernel):
        m, beta = kernel.m, kernel.beta
        out = np.empty_like(r)
        small = r < 1e-12 * beta
        out[small] = 2.0 ** (m - 1.0) * sf.gamma(m)
        out[~small] = [rv ** m * sf.bessel_k(m, rv) for rv in r[~small] / beta]
        return out
    raise ValueError("PowerLaw kernels cannot be evaluated as a density")


# ---------------------------------------------------------------------------
# Model specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CovarianceSpec:
    """Operator family plus parameters defining one stationary model.

    family : one of DampedFractional, FractionalReaction, ConvolutionKernel,
             Nugget
    d      : spatial dimension (1, 2 or 3)
    alpha  : fractional order (damped / reaction families)
    kappa  : damping parameter, kappa > 0
    D      : dispersal rate (convolution family)
    kernel : kernel shape (convolution family)
    """

    family: str
    d: int
    kappa: float
    alpha: float = 2.0
    D: float = 0.0
    kernel: Optional[KernelShape] = None

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {_FAMILIES}")
        if self.d not in (1, 2, 3):
            raise ValueError("d must be 1, 2 or 3")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.family in ("DampedFractional", "FractionalReaction") and not 0 < self.alpha <= 2:
            raise ValueError("alpha must lie in (0, 2]")
        if self.family == "ConvolutionKernel":
            if self.kernel is None:
                raise ValueError("ConvolutionKernel requires a kernel shape")
            if self.D < 0:
                raise ValueError("D must be nonnegative")


@dataclass(frozen=True)
class SpectralPoint:
    """Frequency-domain point: spatial wavevector xi, optional temporal omega."""

    xi: Sequence[float]
    omega: Optional[float] = None


def _xi_norm(p: SpectralPoint) -> float:
    return float(np.linalg.norm(np.atleast_1d(np.asarray(p.xi, dtype=float))))


def symbol(spec: CovarianceSpec, p: SpectralPoint) -> float:
    """Fourier symbol g(xi) > 0 of the dispersal-damping operator."""
    xn = _xi_norm(p)
    if spec.family == "DampedFractional":
        return (xn * xn + spec.kappa ** 2) ** (spec.alpha / 2.0)
    if spec.family == "FractionalReaction":
        return xn ** spec.alpha + spec.kappa ** 2
    if spec.family == "ConvolutionKernel":
        fj = kernel_fourier(spec.kernel, xn, spec.d)
        return spec.D * (1.0 - fj) + spec.kappa ** 2
    return spec.kappa ** 2  # Nugget: constant symbol


def _symbol_at_infinity_density(spec: CovarianceSpec) -> float:
    """Large-|xi| limit of the spectral density (the Lebesgue/nugget part)."""
    if spec.family == "ConvolutionKernel":
        g_inf = spec.D + spec.kappa ** 2
    elif spec.family == "Nugget":
        g_inf = spec.kappa ** 2
    else:
        return 0.0
    return (2.0 * math.pi) ** (-spec.d / 2.0) / g_inf ** 2


def spectral_density(spec: CovarianceSpec, p: SpectralPoint, temporal: bool = False) -> float:
    """Spectral density of the stationary solution.

    With ``temporal=True`` the space-time density
    (2 pi)^(-(d+1)/2) / (omega^2 + g(xi)^2); otherwise the purely spatial
    density (2 pi)^(-d/2) / g(xi)^2.
    """
    g = symbol(spec, p)
    if temporal:
        if p.omega is None:
            raise ValueError("temporal density requires omega")
        return (2.0 * math.pi) ** (-(spec.d + 1) / 2.0) / (p.omega ** 2 + g * g)
    return (2.0 * math.pi) ** (-spec.d / 2.0) / (g * g)


def conv_density_parts(spec: CovarianceSpec, xi_norm: float) -> tuple[float, float, float]:
    """Spatial spectral density of the convolution family split into a
    Lebesgue constant plus two positive terms rational in the scaled kernel
    transform: dens = lebesgue + part1 + part2 with

        part1 = (2 pi)^(-d/2) (2 D / c^2) / (c / FJ - D)
        part2 = (2 pi)^(-d/2) (D^2 / c^2) / (c / FJ - D)^2,   c = kappa^2 + D.
    """
    if spec.family != "ConvolutionKernel":
        raise ValueError("decomposition applies to the ConvolutionKernel family")
    c = spec.kappa ** 2 + spec.D
    fj = kernel_fourier(spec.kernel, xi_norm, spec.d)
    pref = (2.0 * math.pi) ** (-spec.d / 2.0)
    denom = c / fj - spec.D
    part1 = pref * (2.0 * spec.D / c ** 2) / denom
    part2 = pref * (spec.D ** 2 / c ** 2) / denom ** 2
    return pref / c ** 2, part1, part2


# ---------------------------------------------------------------------------
# Closed-form covariances
# ---------------------------------------------------------------------------


def _lag_norm(h) -> float:
    arr = np.atleast_1d(np.asarray(h, dtype=float))
    if arr.size == 1:
        return abs(float(arr[0]))
    return float(np.linalg.norm(arr))


def matern_cov(h, alpha: float, kappa: float, d: int) -> float:
    """Matern covariance of the damped fractional family, alpha > d/2.

    rho(h) = (kappa |h|)^nu K_nu(kappa |h|) /
             ((2 pi)^(d/2) 2^(alpha-1) kappa^(2 alpha - d) Gamma(alpha)),
    nu = alpha - d/2, with the finite limit at h = 0.
    """
    nu = alpha - d / 2.0
    if nu <= 0:
        raise ValueError("matern_cov requires alpha > d/2; at alpha = d/2 use "
                         "generalized_matern_cov")
    s = _lag_norm(h)
    c = ((2.0 * math.pi) ** (d / 2.0) * 2.0 ** (alpha - 1.0)
         * kappa ** (2.0 * alpha - d) * sf.gamma(alpha))
    z = kappa * s
    if z < 1e-8:
        # (kappa h)^nu K_nu -> 2^(nu-1) Gamma(nu)
        return 2.0 ** (nu - 1.0) * sf.gamma(nu) / c
    return z ** nu * sf.bessel_k(nu, z) / c


def generalized_matern_cov(h, kappa: float, d: int = 2) -> float:
    """Limiting case alpha = d/2 of the Matern family, proportional to K_0.

    The normalization keeps the Matern constant with the diverging
    2^(nu-1) Gamma(nu) factor replaced by the K_0 profile itself:
    rho(h) = (2 pi)^(-d/2) 2^(1-d/2) Gamma(d/2)^(-1) K_0(kappa |h|).
    This equals the exact inverse transform of the spectral density
    (2 pi)^(-d/2) (|xi|^2 + kappa^2)^(-d/2); the variance is infinite and the
    value at h = 0 is +inf.
    """
    s = _lag_norm(h)
    c = ((2.0 * math.pi) ** (-d / 2.0) * 2.0 ** (1.0 - d / 2.0) / sf.gamma(d / 2.0))
    if s == 0.0:
        return math.inf
    return c * sf.bessel_k(0.0, kappa * s)


def frac_reaction_cov_1d(h, kappa: float) -> float:
    """Covariance of the d = 1, alpha = 1 fractional-reaction model.

    rho(h) = (1/(kappa^2 pi)) [1 - kappa^2 |h| f(kappa^2 |h|)] with the
    auxiliary cosine/sine-integral function f; algebraic 1/h^2 tail.
    """
    z = kappa ** 2 * _lag_norm(h)
    return (1.0 - z * sf.aux_f(z)) / (kappa ** 2 * math.pi)


_FUSED_TAIL_SWITCH = 40.0


def frac_reaction_cov_2d(h, kappa: float) -> float:
    """Covariance of the d = 2, alpha = 1 fractional-reaction model.

    With z = kappa^2 |h|:
    rho = (z/4) [(Y_1 - H_1)(z) + 2/pi] - (1/4) (Y_0 - H_0)(z).
    For z above 40 the two Struve-Bessel differences are folded into one
    asymptotic series in 1/z (the leading 1/z parts cancel exactly, leaving
    the 1/(pi z^3) tail); evaluating them separately would lose the tail to
    cancellation.  Diverges logarithmically as |h| -> 0.
    """
    z = kappa ** 2 * _lag_norm(h)
    if z == 0.0:
        return math.inf
    if z < _FUSED_TAIL_SWITCH:
        return ((z / 4.0) * (sf.y_minus_struve(1, z) + 2.0 / math.pi)
                - 0.25 * sf.y_minus_struve(0, z))
    return _frac_reaction_2d_tail(z)


def _frac_reaction_2d_tail(z: float) -> float:
    """Fused asymptotic series: rho(z) = sum_k c_k z^(1-2k), k >= 2."""
    total, last = 0.0, math.inf
    for k in range(2, 80):
        c = (2.0 ** (2 * k - 1) / (4.0 * math.pi)) * sf.gamma(k - 0.5) \
            * (2.0 - 2.0 * k) / sf.gamma(1.5 - k)
        term = c * z ** (1 - 2 * k)
        if abs(term) > last:
            break
        total += term
        last = abs(term)
        if last < 1e-17 * abs(total):
            break
    return total


def damped_kernel(s: float, alpha: float, kappa: float, d: int) -> float:
    """Radial kernel K_nu(kappa s)/s^nu with nu = (alpha + d)/2, s > 0."""
    if s <= 0:
        raise ValueError("damped_kernel requires s > 0")
    nu = (alpha + d) / 2.0
    return sf.bessel_k(nu, kappa * s) / s ** nu


def h_kappa(alpha: float, kappa: float, tol: float = 1e-10) -> float:
    """Damping constant produced by killing at rate kappa^2 under a stable
    subordinator: (1/|Gamma(-alpha/2)|) int_0^inf (1 - e^(-kappa^2 t))
    t^(-1-alpha/2) dt, computed by adaptive quadrature (identity: kappa^alpha).
    """
    if not 0 < alpha < 2:
        raise ValueError("h_kappa requires 0 < alpha < 2")
    s = alpha / 2.0
    a = kappa ** 2
    split = 1.0 / a

    def integrand(t):
        return -math.expm1(-a * t) * t ** (-1.0 - s)

    head, _ = _quad(integrand, 0.0, split, epsabs=0.0, epsrel=tol, limit=400)
    tail, _ = _quad(integrand, split, np.inf, epsabs=0.0, epsrel=tol, limit=400)
    norm = abs(sf.gamma(-s))
    return (head + tail) / norm


def cov_exp_kernel_1d(h, D: float, kappa: float, beta: float) -> tuple[float, float]:
    """Covariance of the d = 1 exponential-kernel convolution model.

    Returns ``(nugget, continuous)``: a nugget of mass 1/(kappa^2 + D)^2
    sitting at h = 0, plus the continuous part

        c1 e^(-a|h|)/(2a) + c2 (1 + a|h|) e^(-a|h|)/(4a^3),

    a = kappa / (beta sqrt(kappa^2 + D)), c1 = 2D/(beta^2 (kappa^2+D)^3),
    c2 = D^2/(beta^4 (kappa^2+D)^4).  For D -> 0 only the nugget 1/kappa^4
    survives.
    """
    if kappa <= 0 or beta <= 0 or D < 0:
        raise ValueError("require kappa > 0, beta > 0, D >= 0")
    s = _lag_norm(h)
    c = kappa ** 2 + D
    nugget = 1.0 / c ** 2
    if D == 0.0:
        return nugget, 0.0
    a = kappa / (beta * math.sqrt(c))
    c1 = 2.0 * D / (beta ** 2 * c ** 3)
    c2 = D ** 2 / (beta ** 4 * c ** 4)
    e = math.exp(-a * s)
    continuous = c1 * e / (2.0 * a) + c2 * (1.0 + a * s) * e / (4.0 * a ** 3)
    return nugget, continuous


# ---------------------------------------------------------------------------
# Numerical inverse transform (reference route)
# ---------------------------------------------------------------------------


def _wynn_epsilon(partials: Sequence[float]) -> tuple[float, float]:
    """Accelerate a sequence of partial sums; returns (value, error estimate)."""
    prev2 = [0.0] * (len(partials) + 1)
    prev1 = list(partials)
    best = [partials[-1]]
    for k in range(1, len(partials)):
        cur = []
        for i in range(len(prev1) - 1):
            diff = prev1[i + 1] - prev1[i]
            if diff == 0.0:
                return prev1[i], 0.0
            cur.append(prev2[i + 1] + 1.0 / diff)
        prev2, prev1 = prev1, cur
        if k % 2 == 0:
            best.append(cur[-1])
    if len(best) == 1:
        return best[0], math.inf
    return best[-1], abs(best[-1] - best[-2])


def cov_by_transform(spec: CovarianceSpec, h, tol: float = 1e-8,
                     n_cells: int = 50) -> float:
    """Covariance at lag h by numerical inversion of the spectral density.

    The radial integral is evaluated with adaptive Gauss-Kronrod quadrature
    on cells bounded by the zeros of the oscillating factor (cos, J_0 or sin
    for d = 1, 2, 3) and the oscillatory tail is resummed with Wynn's epsilon
    algorithm, which handles both the algebraic and the exponential density
    tails.  The constant large-frequency part of the density (nugget mass,
    convolution and nugget families) is removed before inversion, so the
    returned value is the continuous covariance part.

    Raises :class:`TransformError` if the estimated error exceeds ``tol``.
    """
    d = spec.d
    leb = _symbol_at_infinity_density(spec)

    def dens(r):
        return spectral_density(spec, SpectralPoint(xi=[r])) - leb

    s = _lag_norm(h)
    if s == 0.0:
        if d == 1:
            val, err = _quad(lambda r: dens(r), 0.0, np.inf, epsabs=tol / 10, limit=400)
            val *= math.sqrt(2.0 / math.pi)
        elif d == 2:
            val, err = _quad(lambda r: dens(r) * r, 0.0, np.inf, epsabs=tol / 10, limit=400)
        else:
            val, err = _quad(lambda r: dens(r) * r * r, 0.0, np.inf, epsabs=tol / 10, limit=400)
            val *= math.sqrt(2.0 / math.pi)
        if err > tol:
            raise TransformError(f"quadrature error {err:.2e} exceeds tol {tol:.2e}")
        return val

    if d == 1:
        edges = np.concatenate([[0.0], (np.arange(n_cells) + 0.5) * math.pi / s])
        integrand: Callable[[float], float] = lambda r: dens(r) * math.cos(s * r)
        prefactor = math.sqrt(2.0 / math.pi)
    elif d == 2:
        edges = np.concatenate([[0.0], _sp.jn_zeros(0, n_cells)]) / s
        integrand = lambda r: dens(r) * _sp.j0(s * r) * r
        prefactor = 1.0
    else:
        edges = np.arange(n_cells + 1) * math.pi / s
        integrand = lambda r: dens(r) * r * math.sin(s * r)
        prefactor = math.sqrt(2.0 / math.pi) / s

    parts = []
    for a, b in zip(edges[:-1], edges[1:]):
        v, _ = _quad(integrand, a, b, epsabs=tol * 1e-3, epsrel=1e-12, limit=200)
        parts.append(v)
    val, err = _wynn_epsilon(list(np.cumsum(parts)))
    if not math.isfinite(val) or err > tol:
        raise TransformError(f"transform error estimate {err:.2e} exceeds tol {tol:.2e}")
    return prefactor * val


def practical_range(curve: Callable[[float], float], level: float = 0.05,
                    bracket: tuple[float, float] = (1e-3, 1e3)) -> float:
    """Lag at which a decreasing covariance curve crosses ``level``.

    ``curve`` is the (caller-normalized) covariance as a function of lag.
    Bisection on ``bracket``; raises ValueError when the bracket does not
    straddle the level.
    """
    lo, hi = bracket
    flo = curve(lo) - level
    fhi = curve(hi) - level
    if not (np.isfinite(flo) and np.isfinite(fhi)) or flo * fhi > 0:
        raise ValueError(f"no sign change on bracket {bracket}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = curve(mid) - level
        if fm == 0.0 or hi - lo < 1e-13 * max(1.0, abs(mid)):
            return mid
        if flo * fm < 0:
            hi, fhi = mid, fm
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)
