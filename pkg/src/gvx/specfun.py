"""Self-contained special-function kernel.

Log-gamma, regularized incomplete gamma (both tails), incomplete beta,
Kummer's confluent hypergeometric M, the Laplace transform of a squared
gamma variate, shifted Legendre coefficients, and spherical Bessel families
(ordinary, and modified with exponential scaling).

All routines are pure functions of their arguments. Gamma-function ratios
are always formed as differences of log_gamma, never as quotients of Gamma.
"""

from __future__ import annotations

import math
from typing import List, Tuple

import numpy as np

from .dd import two_prod
from .errors import BudgetExceeded, ConvergenceError, DomainError

_MAX_ITER = 10_000

# Lanczos-type coefficients, g = 671/128 (Numerical Recipes, 3rd ed. gammln).
_LANCZOS_COF = (
    57.1562356658629235, -59.5979603554754912, 14.1360979747417471,
    -0.491913816097620199, 0.339946499848118887e-4, 0.465236289270485756e-4,
    -0.983744753048795646e-4, 0.158088703224912494e-3, -0.210264441724104883e-3,
    0.217439618115212643e-3, -0.164318106536763890e-3, 0.844182239838527433e-4,
    -0.261908384015814087e-4, 0.368991826595316234e-5,
)


def log_gamma(x: float) -> float:
    """ln Gamma(x) for x > 0, relative error ~1e-15 for x >= 0.5."""
    if not x > 0.0:
        raise DomainError(f"log_gamma requires x > 0, got {x}")
    if x < 0.5:
        # shift up once; avoids the less accurate small-x end of the kernel
        return log_gamma(x + 1.0) - math.log(x)
    y = x
    tmp = x + 5.24218750000000000
    tmp = (x + 0.5) * math.log(tmp) - tmp
    ser = 0.999999999999997092
    for c in _LANCZOS_COF:
        y += 1.0
        ser += c / y
    return tmp + math.log(2.5066282746310005 * ser / x)


def _log1pmx(u: float) -> float:
    """log(1+u) - u without cancellation for small |u|."""
    if abs(u) > 0.45:
        return math.log1p(u) - u
    # -u^2/2 + u^3/3 - u^4/4 + ...
    term = -u * u
    total = 0.5 * term
    for k in range(3, 200):
        term *= -u
        prev = total
        total += term / k
        if total == prev:
            return total
    return total


# Stirling remainder: ln Gamma(a) - ((a-1/2) ln a - a + ln(2 pi)/2), a >= 15.
_STIRLING_COEF = (
    1.0 / 12.0, -1.0 / 360.0, 1.0 / 1260.0, -1.0 / 1680.0, 1.0 / 1188.0,
    -691.0 / 360360.0, 1.0 / 156.0, -3617.0 / 122400.0,
)


def _stirling_remainder(a: float) -> float:
    inv2 = 1.0 / (a * a)
    s = 0.0
    p = 1.0 / a
    for c in _STIRLING_COEF:
        s += c * p
        p *= inv2
    return s


_HALF_LOG_TWO_PI = 0.9189385332046727418


def _gamma_prefactor(a: float, x: float) -> float:
    """x^a e^(-x) / Gamma(a) with the exponent centered at x = a.

    Plain evaluation of a*ln(x) - x - lnGamma(a) loses ~a*eps absolutely,
    which ruins the central region for large a; the centered form keeps
    every contribution O(|x - a|^2 / a).
    """
    if a < 15.0 or not 0.55 * a < x < 1.45 * a:
        return math.exp(a * math.log(x) - x - log_gamma(a))
    d = x - a
    u = d / a
    p, e = two_prod(a, u)
    c1 = (p - d) + e  # a*u - d, error-free to double-double accuracy
    expo = a * _log1pmx(u) + c1 + 0.5 * math.log(a) - _HALF_LOG_TWO_PI \
        - _stirling_remainder(a)
    return math.exp(expo)


def _gamma_series(a: float, x: float) -> float:
    """P(a, x) by power series; requires 0 <= x < a + 1."""
    if x == 0.0:
        return 0.0
    ap = a
    term = 1.0 / a
    total = term
    comp = 0.0
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
        if abs(term) < abs(total) * 1e-17:
            return total * _gamma_prefactor(a, x)
    raise BudgetExceeded(f"incomplete gamma series stagnated for a={a}, x={x}")


def _gamma_cf(a: float, x: float) -> float:
    """Q(a, x) by modified Lentz continued fraction; requires x >= a + 1."""
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 4e-16:
            return _gamma_prefactor(a, x) * h
    raise BudgetExceeded(f"incomplete gamma continued fraction stagnated for a={a}, x={x}")


def reg_gamma_cdf(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) = G_a(x)."""
    if not a > 0.0:
        raise DomainError(f"reg_gamma_cdf requires a > 0, got {a}")
    if x < 0.0:
        raise DomainError(f"reg_gamma_cdf requires x >= 0, got {x}")
    if x < a + 1.0:
        return _gamma_series(a, x)
    return 1.0 - _gamma_cf(a, x)


def upper_gamma_ratio(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) = 1 - G_a(x), no cancellation."""
    if not a > 0.0:
        raise DomainError(f"upper_gamma_ratio requires a > 0, got {a}")
    if x < 0.0:
        raise DomainError(f"upper_gamma_ratio requires x >= 0, got {x}")
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cf(a, x)


def gamma_cdf_ladder(a0: float, kmax: int, x: np.ndarray) -> np.ndarray:
    """G_{a0+k}(x) for k = 0..kmax on a vector of points x >= 0.

    Forward recurrence G_{a+1}(x) = G_a(x) - x^a e^{-x} / Gamma(a+1).
    The subtracted density terms are positive and decreasing once a > x, so
    absolute errors stay at the level of the initial G_{a0} evaluation;
    intended for mixture sums where only absolute accuracy matters.
    Returns array of shape (kmax + 1, len(x)).
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((kmax + 1, x.size))
    out[0] = np.array([reg_gamma_cdf(a0, xi) for xi in x])
    if kmax == 0:
        return out
    # log of x^a e^{-x} / Gamma(a+1), marched in a
    with np.errstate(divide="ignore"):
        logx = np.where(x > 0.0, np.log(x), -np.inf)
    logterm = a0 * logx - x - log_gamma(a0 + 1.0)
    for k in range(1, kmax + 1):
        a = a0 + k - 1.0
        out[k] = np.maximum(out[k - 1] - np.exp(logterm), 0.0)
        logterm += logx - math.log(a0 + k)
    return out


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the regularized incomplete beta (NR style)."""
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 4e-16:
            return h
    raise BudgetExceeded(f"incomplete beta continued fraction stagnated for a={a}, b={b}, x={x}")


def reg_beta_cdf(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if not (a > 0.0 and b > 0.0):
        raise DomainError(f"reg_beta_cdf requires a, b > 0, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"reg_beta_cdf requires 0 <= x <= 1, got {x}")
    if x == 0.0 or x == 1.0:
        return float(x)
    lbeta = log_gamma(a) + log_gamma(b) - log_gamma(a + b)
    front = math.exp(a * math.log(x) + b * math.log1p(-x) - lbeta)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def incomplete_beta(a: float, b: float, x: float) -> float:
    """Non-regularized incomplete beta B(a, b; x) = int_0^x t^(a-1)(1-t)^(b-1) dt."""
    lbeta = log_gamma(a) + log_gamma(b) - log_gamma(a + b)
    return reg_beta_cdf(a, b, x) * math.exp(lbeta)


def kummer_m(a: float, b: float, z: float, max_terms: int = _MAX_ITER) -> float:
    """Kummer's confluent hypergeometric M(a, b; z) by power series.

    For z < 0 the transformation M(a,b;z) = e^z M(b-a, b; -z) (A.S. 13.1.27)
    is applied first, so the series is summed with nonnegative argument.
    """
    if b <= 0.0 and b == math.floor(b):
        raise DomainError(f"kummer_m undefined for nonpositive integer b={b}")
    if z < 0.0:
        return math.exp(z) * kummer_m(b - a, b, -z, max_terms)
    term = 1.0
    total = 1.0
    comp = 0.0  # Kahan compensation
    ak = a
    bk = b
    for k in range(1, max_terms + 1):
        term *= ak * z / (bk * k)
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
        ak += 1.0
        bk += 1.0
        if abs(term) < 1e-17 * abs(total) and k > 4:
            return total
    raise ConvergenceError(f"kummer_m series did not converge for a={a}, b={b}, z={z}")


def erf_via_kummer(x: float) -> float:
    """erf(x) = 2x/sqrt(pi) * M(1/2, 3/2; -x^2); exercised by psi tests."""
    return 2.0 * x / math.sqrt(math.pi) * kummer_m(0.5, 1.5, -x * x)


def psi_alpha(alpha: float, t: float) -> float:
    """Laplace transform at t of the square of a unit-scale gamma(alpha) variate.

    Confluent-hypergeometric closed form; for alpha = 1 it reduces to the
    normal-cdf expression sqrt(pi/t) e^(1/4t) Phi(-1/sqrt(2t)).
    """
    if not alpha > 0.0:
        raise DomainError(f"psi_alpha requires alpha > 0, got {alpha}")
    if not t > 0.0:
        raise DomainError(f"psi_alpha requires t > 0, got {t}")
    q = 1.0 / (4.0 * t)
    ga = math.exp(log_gamma(0.5 * alpha))
    ga1 = math.exp(log_gamma(0.5 * (alpha + 1.0)))
    m1 = kummer_m(0.5 * (1.0 - alpha), 0.5, -q)
    m2 = kummer_m(0.5 * (2.0 - alpha), 1.5, -q)
    val = ga * m1 - ga1 * m2 / math.sqrt(t)
    return val * math.exp(q) * t ** (-0.5 * alpha) / (2.0 * math.exp(log_gamma(alpha)))


def shifted_legendre(kmax: int) -> List[List[int]]:
    """Exact integer coefficients of the shifted Legendre polynomials on [0, 1].

    Row k holds p[k][j] with P*_k(y) = sum_j p[k][j] y^j and
    int_0^1 P*_k(y)^2 dy = 1/(2k+1); p[k][j] = (-1)^(k+j) C(k,j) C(k+j,j).
    """
    if kmax < 0:
        raise DomainError("kmax must be >= 0")
    if kmax > 60:
        raise OverflowError("shifted_legendre supports kmax <= 60")
    table: List[List[int]] = []
    for k in range(kmax + 1):
        row = [(-1) ** (k + j) * math.comb(k, j) * math.comb(k + j, j)
               for j in range(k + 1)]
        table.append(row)
    return table


def _miller_start_oscillatory(kmax: int, x: float) -> int:
    # must begin above the turning point k ~ |x| where j_k starts decaying;
    # the 10*x^(1/3) term covers the Airy transition zone
    ax = abs(x)
    base = max(kmax, int(math.ceil(ax + 10.0 * ax ** (1.0 / 3.0))))
    return base + int(math.ceil(math.sqrt(40.0 * max(kmax, 1)))) + 20


def _miller_start_modified(kmax: int, x: float) -> int:
    # contamination by the growing solution shrinks like exp(-(M^2-k^2)/x),
    # so the start order must satisfy M^2 >~ kmax^2 + 40 x
    base = max(kmax, int(math.ceil(math.sqrt(kmax * kmax + 40.0 * abs(x)))))
    return base + int(math.ceil(math.sqrt(40.0 * max(kmax, 1)))) + 20


def sph_bessel_j(kmax: int, x: float) -> np.ndarray:
    """Spherical Bessel functions j_0(x) .. j_kmax(x), downward recurrence."""
    if kmax < 0:
        raise DomainError("kmax must be >= 0")
    if x == 0.0:
        out = np.zeros(kmax + 1)
        out[0] = 1.0
        return out
    j0 = math.sin(x) / x
    if kmax == 0:
        return np.array([j0])
    j1 = j0 / x - math.cos(x) / x
    m = _miller_start_oscillatory(kmax, x)
    out = np.zeros(kmax + 1)
    jp = 0.0
    jc = 1e-290
    for k in range(m, 0, -1):
        jm = (2 * k + 1) / x * jc - jp
        jp = jc
        jc = jm
        if k - 1 <= kmax:
            out[k - 1] = jc
        if abs(jc) > 1e250:
            jc *= 1e-250
            jp *= 1e-250
            out *= 1e-250
    # jc, jp are surrogates for j_0, j_1; anchor at the larger true value
    # (j_0 vanishes at multiples of pi)
    if abs(j0) >= abs(j1):
        out *= j0 / jc
    else:
        out *= j1 / jp
    return out


def mod_sph_bessel_i_scaled(kmax: int, x: float) -> Tuple[np.ndarray, bool]:
    """e^(-x) sqrt(pi/(2x)) I_(k+1/2)(x) for k = 0..kmax, values in (0, 1].

    Downward recurrence (upward is unstable), normalized at
    k = 0: e^(-x) sinh(x)/x = (1 - e^(-2x))/(2x).
    Returns (values, underflowed); entries that underflow are exact 0.
    """
    if not x > 0.0:
        raise DomainError(f"mod_sph_bessel_i_scaled requires x > 0, got {x}")
    if kmax < 0:
        raise DomainError("kmax must be >= 0")
    s0 = -math.expm1(-2.0 * x) / (2.0 * x)
    if kmax == 0:
        return np.array([s0]), False
    m = _miller_start_modified(kmax, x)
    out = np.zeros(kmax + 1)
    pp = 0.0
    pc = 1e-290
    for k in range(m, 0, -1):
        pm = pp + (2 * k + 1) / x * pc
        pp = pc
        pc = pm
        if k - 1 <= kmax:
            out[k - 1] = pc
        if pc > 1e250:
            pc *= 1e-250
            pp *= 1e-250
            out *= 1e-250
    with np.errstate(over="ignore", invalid="ignore"):
        out *= s0 / pc
    underflow = bool(np.any(out == 0.0))
    out = np.nan_to_num(out, nan=0.0, posinf=0.0, neginf=0.0)
    return out, underflow
