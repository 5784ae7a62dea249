"""Scalar special functions used by the covariance evaluators.

Everything here is implemented from series, continued fractions and
asymptotic expansions so the package does not depend on an external
special-function library.  Each function documents its switching point
between the small-argument and large-argument regimes.  Accuracy targets
(relative, away from zeros of oscillatory functions):

* ``gamma``          1e-12 on [-10, 30]
* ``bessel_k``       1e-10 for nu in [0, 5], x in (0, 50]
* ``bessel_j/y``     5e-9  on (0, 100]
* ``struve_h``       5e-8  on (0, 100]
* ``cosint/sinint``  1e-10 on (0, 100]
"""

from __future__ import annotations

import math

__all__ = [
    "DomainError",
    "gamma",
    "bessel_k",
    "bessel_j",
    "bessel_y",
    "struve_h",
    "cosint",
    "sinint",
    "aux_f",
    "y_minus_struve",
]

EULER_GAMMA = 0.5772156649015328606

_MAXIT = 20000
_EPS = 1e-17


class DomainError(ValueError):
    """Argument outside the mathematical domain of a special function."""


# ---------------------------------------------------------------------------
# Gamma function (Lanczos approximation, g = 7, 9 coefficients)
# ---------------------------------------------------------------------------

_LANCZOS_G = 7.0
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gamma(x: float) -> float:
    """Gamma function for real x, poles at non-positive integers."""
    if x <= 0.0 and x == math.floor(x):
        raise DomainError(f"gamma pole at x={x}")
    if x < 0.5:
        # reflection: gamma(x) gamma(1-x) = pi / sin(pi x)
        return math.pi / (math.sin(math.pi * x) * gamma(1.0 - x))
    z = x - 1.0
    acc = _LANCZOS[0]
    for i, c in enumerate(_LANCZOS[1:], start=1):
        acc += c / (z + i)
    t = z + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * t ** (z + 0.5) * math.exp(-t) * acc


def _recip_gamma_pair(mu: float) -> tuple[float, float, float, float]:
    """Return (gam1, gam2, 1/gamma(1+mu), 1/gamma(1-mu)) for |mu| <= 1/2.

    gam1 = [1/gamma(1-mu) - 1/gamma(1+mu)] / (2 mu), continued through mu=0.
    gam2 = [1/gamma(1-mu) + 1/gamma(1+mu)] / 2.
    """
    gampl = 1.0 / gamma(1.0 + mu)
    gammi = 1.0 / gamma(1.0 - mu)
    if abs(mu) < 1e-3:
        # series from 1/gamma(1+z) = 1 + g1 z + g2 z^2 + g3 z^3 + ...
        zeta3 = 1.2020569031595942854
        g = EULER_GAMMA
        c3 = g * g * g / 6.0 - g * math.pi ** 2 / 12.0 + zeta3 / 3.0
        gam1 = -(g + c3 * mu * mu)
    else:
        gam1 = (gammi - gampl) / (2.0 * mu)
    gam2 = 0.5 * (gammi + gampl)
    return gam1, gam2, gampl, gammi


# ---------------------------------------------------------------------------
# Modified Bessel K_nu: Temme's series for x < 2, Steed/Thompson-Barnett
# continued fraction for x >= 2, upward recurrence in the order.
# ---------------------------------------------------------------------------


def bessel_k(nu: float, x: float) -> float:
    """Modified Bessel function of the second kind, real order nu >= 0."""
    if x <= 0.0:
        raise DomainError(f"bessel_k requires x > 0, got {x}")
    if nu < 0.0:
        nu = -nu  # K_{-nu} = K_nu
    n = int(nu + 0.5)
    mu = nu - n  # in [-1/2, 1/2]
    if x < 2.0:
        kmu, kmu1 = _bessel_k_temme(mu, x)
    else:
        kmu, kmu1 = _bessel_k_cf2(mu, x)
    # upward recurrence K_{v+1} = K_{v-1} + (2 v / x) K_v (stable for K)
    for i in range(n):
        kmu, kmu1 = kmu1, kmu + 2.0 * (mu + i + 1.0) / x * kmu1
    return kmu


def _bessel_k_temme(mu: float, x: float) -> tuple[float, float]:
    """K_mu(x) and K_{mu+1}(x) for |mu| <= 1/2, 0 < x < 2 (Temme 1975)."""
    x2 = 0.5 * x
    pimu = math.pi * mu
    fact = 1.0 if abs(pimu) < 1e-15 else pimu / math.sin(pimu)
    d = -math.log(x2)
    e = mu * d
    fact2 = 1.0 if abs(e) < 1e-15 else math.sinh(e) / e
    gam1, gam2, gampl, gammi = _recip_gamma_pair(mu)
    ff = fact * (gam1 * math.cosh(e) + gam2 * fact2 * d)
    total = ff
    e = math.exp(e)
    p = 0.5 * e / gampl
    q = 0.5 / (e * gammi)
    c = 1.0
    d = x2 * x2
    total1 = p
    mu2 = mu * mu
    for i in range(1, _MAXIT):
        ff = (i * ff + p + q) / (i * i - mu2)
        c *= d / i
        p /= i - mu
        q /= i + mu
        delt = c * ff
        total += delt
        total1 += c * (p - i * ff)
        if abs(delt) < abs(total) * _EPS:
            return total, total1 * (2.0 / x)
    raise ArithmeticError("bessel_k series failed to converge")


def _bessel_k_cf2(mu: float, x: float) -> tuple[float, float]:
    """K_mu(x) and K_{mu+1}(x) for |mu| <= 1/2, x >= 2 (continued fraction)."""
    mu2 = mu * mu
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = delh = d
    q1, q2 = 0.0, 1.0
    a1 = 0.25 - mu2
    q = c = a1
    a = -a1
    s = 1.0 + q * delh
    for i in range(2, _MAXIT):
        a -= 2.0 * (i - 1)
        c = -a * c / i
        qnew = (q1 - b * q2) / a
        q1, q2 = q2, qnew
        q += c * qnew
        b += 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h += delh
        dels = q * delh
        s += dels
        if abs(dels / s) < _EPS:
            break
    else:
        raise ArithmeticError("bessel_k continued fraction failed to converge")
    h = a1 * h
    kmu = math.sqrt(math.pi / (2.0 * x)) * math.exp(-x) / s
    kmu1 = kmu * (mu + x + 0.5 - h) / x
    return kmu, kmu1


# ---------------------------------------------------------------------------
# Bessel J0, J1, Y0, Y1: power series below x = 14, Hankel asymptotic
# expansion (P/Q series truncated at the smallest term) above.
# ---------------------------------------------------------------------------

_BESSEL_SWITCH = 14.0


def bessel_j(order: int, x: float) -> float:
    """Bessel function of the first kind, order 0 or 1, x >= 0."""
    _check_order(order)
    if x < 0.0:
        raise DomainError("bessel_j requires x >= 0")
    if x < _BESSEL_SWITCH:
        return _j_series(order, x)
    return _jy_asymptotic(order, x)[0]


def bessel_y(order: int, x: float) -> float:
    """Bessel function of the second kind, order 0 or 1, x > 0."""
    _check_order(order)
    if x <= 0.0:
        raise DomainError("bessel_y requires x > 0")
    if x < _BESSEL_SWITCH:
        return _y_series(order, x)
    return _jy_asymptotic(order, x)[1]


def _check_order(order: int) -> None:
    if order not in (0, 1):
        raise DomainError(f"order must be 0 or 1, got {order}")


def _j_series(order: int, x: float) -> float:
    q = -0.25 * x * x
    if order == 0:
        term, total = 1.0, 1.0
        for k in range(1, _MAXIT):
            term *= q / (k * k)
            total += term
            if abs(term) < _EPS * (abs(total) + 1e-300):
                return total
    else:
        term = 0.5 * x
        total = term
        for k in range(1, _MAXIT):
            term *= q / (k * (k + 1))
            total += term
            if abs(term) < _EPS * (abs(total) + 1e-300):
                return total
    raise ArithmeticError("bessel_j series failed to converge")


def _y_series(order: int, x: float) -> float:
    lg = math.log(0.5 * x) + EULER_GAMMA
    q = -0.25 * x * x
    if order == 0:
        # (2/pi) [ lg * J0 + sum_{k>=1} (-1)^{k+1} H_k (x^2/4)^k / (k!)^2 ]
        term, total, hk = 1.0, 0.0, 0.0
        for k in range(1, _MAXIT):
            term *= q / (k * k)
            hk += 1.0 / k
            contrib = -term * hk  # (-1)^{k+1} (x^2/4)^k H_k/(k!)^2
            total += contrib
            if abs(contrib) < _EPS * (abs(total) + 1e-300):
                break
        return (2.0 / math.pi) * (lg * _j_series(0, x) + total)
    # order 1: -2/(pi x) + (2/pi) lg J1 - (x/(2 pi)) sum (-1)^k (H_k + H_{k+1}) q^k/(k!(k+1)!)
    term, total = 1.0, 1.0  # k = 0 contribution: H_0 + H_1 = 1, term = 1
    hk, hk1 = 0.0, 1.0
    for k in range(1, _MAXIT):
        term *= q / (k * (k + 1))
        hk += 1.0 / k
        hk1 += 1.0 / (k + 1)
        contrib = term * (hk + hk1)
        total += contrib
        if abs(contrib) < _EPS * (abs(total) + 1e-300):
            break
    return (-2.0 / (math.pi * x) + (2.0 / math.pi) * lg * _j_series(1, x)
            - (x / (2.0 * math.pi)) * total)


def _jy_asymptotic(order: int, x: float) -> tuple[float, float]:
    """(J_order(x), Y_order(x)) from the Hankel P/Q asymptotic expansion."""
    nu4 = 4.0 * order * order
    p, q = 1.0, 0.0
    a = 1.0
    last = math.inf
    for k in range(1, 60):
        a *= (nu4 - (2 * k - 1) ** 2) / (k * 8.0 * x)
        mag = abs(a)
        if mag > last:
            break
        signed = a if (k // 2) % 2 == 0 else -a
        if k % 2 == 1:
            q += signed
        else:
            p += signed
        last = mag
        if mag < _EPS:
            break
    omega = x - (2.0 * order + 1.0) * math.pi / 4.0
    amp = math.sqrt(2.0 / (math.pi * x))
    c, s = math.cos(omega), math.sin(omega)
    return amp * (p * c - q * s), amp * (p * s + q * c)


# ---------------------------------------------------------------------------
# Struve H0, H1: power series below x = 22, Y_nu plus the (H - Y)
# Laplace-integral difference above.
# ---------------------------------------------------------------------------

_STRUVE_SWITCH = 22.0


def struve_h(order: int, x: float) -> float:
    """Struve function H_0 or H_1 for x >= 0."""
    _check_order(order)
    if x < 0.0:
        raise DomainError("struve_h requires x >= 0")
    if x == 0.0:
        return 0.0
    if x < _STRUVE_SWITCH:
        return _struve_series(order, x)
    return bessel_y(order, x) + _struve_minus_y_laplace(order, x)


def _struve_series(order: int, x: float) -> float:
    x2 = 0.5 * x
    q = -x2 * x2
    if order == 0:
        # sum_k (-1)^k (x/2)^{2k+1} / gamma(k+3/2)^2
        g = gamma(1.5)
        term = x2 / (g * g)
        total = term
        for k in range(1, _MAXIT):
            term *= q / ((k + 0.5) * (k + 0.5))
            total += term
            if abs(term) < _EPS * (abs(total) + 1e-300):
                return total
    else:
        # sum_k (-1)^k (x/2)^{2k+2} / (gamma(k+3/2) gamma(k+5/2))
        term = x2 * x2 / (gamma(1.5) * gamma(2.5))
        total = term
        for k in range(1, _MAXIT):
            term *= q / ((k + 0.5) * (k + 1.5))
            total += term
            if abs(term) < _EPS * (abs(total) + 1e-300):
                return total
    raise ArithmeticError("struve series failed to converge")


# 10-point Gauss-Legendre nodes and weights on [-1, 1]
_GL10_NODES = (
    -0.9739065285171717, -0.8650633666889845, -0.6794095682990244,
    -0.4333953941292472, -0.1488743389816312, 0.1488743389816312,
    0.4333953941292472, 0.6794095682990244, 0.8650633666889845,
    0.9739065285171717,
)
_GL10_WEIGHTS = (
    0.0666713443086881, 0.1494513491505806, 0.2190863625159820,
    0.2692667193099963, 0.2955242247147529, 0.2955242247147529,
    0.2692667193099963, 0.2190863625159820, 0.1494513491505806,
    0.0666713443086881,
)

_LAPLACE_SWITCH = 8.0


def _struve_minus_y_laplace(order: int, x: float) -> float:
    """H_nu(x) - Y_nu(x) via its Laplace representation, accurate for x >= 8.

    H_nu(x) - Y_nu(x) = c_nu int_0^inf e^{-x t} (1 + t^2)^{nu - 1/2} dt with
    c_0 = 2/pi and c_1 = 2x/pi.  Substituting t = u/x fixes the integration
    scale; composite 10-point Gauss-Legendre on u in [0, 60] (truncation
    below e^{-60}) resolves the smooth integrand to ~1e-15 absolute.
    """
    power = order - 0.5
    inv_x2 = 1.0 / (x * x)
    total = 0.0
    for cell in range(12):
        mid = 5.0 * cell + 2.5
        acc = 0.0
        for node, w in zip(_GL10_NODES, _GL10_WEIGHTS):
            u = mid + 2.5 * node
            acc += w * math.exp(-u) * (1.0 + u * u * inv_x2) ** power
        total += 2.5 * acc
    if order == 0:
        return (2.0 / math.pi) * total / x
    return (2.0 / math.pi) * total


def y_minus_struve(order: int, x: float) -> float:
    """Y_nu(x) - H_nu(x) without cancellation (nu in {0, 1}).

    Below x = 8 the power series of both functions carry full accuracy and
    the direct difference is exact to ~1e-12; above, the difference itself
    is evaluated from its Laplace representation, avoiding the loss of all
    significant digits that the subtraction of two O(1) oscillating values
    would cause.
    """
    _check_order(order)
    if x <= 0.0:
        raise DomainError("y_minus_struve requires x > 0")
    if x < _LAPLACE_SWITCH:
        return bessel_y(order, x) - _struve_series(order, x)
    return -_struve_minus_y_laplace(order, x)


# ---------------------------------------------------------------------------
# Cosine / sine integrals and the auxiliary function
# f(z) = Ci(z) sin z + (pi/2 - Si(z)) cos z = int_0^inf e^{-zt}/(1+t^2) dt.
# Power series below z = 4, Lentz continued fraction for E1(iz) above.
# ---------------------------------------------------------------------------

_CISI_SWITCH = 4.0


def sinint(x: float) -> float:
    """Sine integral Si(x) = int_0^x sin(t)/t dt, x >= 0."""
    if x < 0.0:
        raise DomainError("sinint requires x >= 0")
    if x == 0.0:
        return 0.0
    if x <= _CISI_SWITCH:
        return _si_series(x)
    f, g = _aux_fg_cf(x)
    return math.pi / 2.0 - f * math.cos(x) - g * math.sin(x)


def cosint(x: float) -> float:
    """Cosine integral Ci(x), x > 0."""
    if x <= 0.0:
        raise DomainError("cosint requires x > 0")
    if x <= _CISI_SWITCH:
        return _ci_series(x)
    f, g = _aux_fg_cf(x)
    return f * math.sin(x) - g * math.cos(x)


def aux_f(z: float) -> float:
    """f(z) = Ci(z) sin z + (pi/2 - Si(z)) cos z, with f(0) = pi/2."""
    if z < 0.0:
        raise DomainError("aux_f requires z >= 0")
    if z == 0.0:
        return math.pi / 2.0
    if z <= _CISI_SWITCH:
        return _ci_series(z) * math.sin(z) + (math.pi / 2.0 - _si_series(z)) * math.cos(z)
    return _aux_fg_cf(z)[0]


def _si_series(x: float) -> float:
    term, total = x, x
    q = -x * x
    for k in range(1, _MAXIT):
        term *= q / ((2 * k) * (2 * k + 1))
        contrib = term / (2 * k + 1)
        total += contrib
        if abs(contrib) < _EPS * abs(total):
            return total
    raise ArithmeticError("sinint series failed to converge")


def _ci_series(x: float) -> float:
    total = EULER_GAMMA + math.log(x)
    term = 1.0
    q = -x * x
    for k in range(1, _MAXIT):
        term *= q / ((2 * k - 1) * (2 * k))
        contrib = term / (2 * k)
        total += contrib
        if abs(contrib) < _EPS * (abs(total) + 1e-300):
            return total
    raise ArithmeticError("cosint series failed to converge")


def _aux_fg_cf(x: float) -> tuple[float, float]:
    """Auxiliary (f, g) via the Lentz continued fraction for E1(ix).

    E1(ix) = e^{-ix} / (ix + 1 - 1/(ix + 3 - 4/(ix + 5 - ...))), and the
    continued-fraction value itself equals g(x) - i f(x).
    """
    tiny = 1e-300
    b = complex(1.0, x)
    c = complex(1.0 / tiny, 0.0)
    d = 1.0 / b
    h = d
    for i in range(1, _MAXIT):
        a = -float(i * i)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delt = c * d
        h *= delt
        if abs(delt.real - 1.0) + abs(delt.imag) < _EPS:
            return -h.imag, h.real
    raise ArithmeticError("cosint/sinint continued fraction failed to converge")
