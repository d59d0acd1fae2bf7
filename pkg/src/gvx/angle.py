"""Distribution of the angle between the sample vector and the diagonal.

For integer shape alpha the cdf of tan Phi is an even polynomial (times
t^(n-1)) on [0, 1/sqrt(n-1)], the largest interval on which the cone
{Phi <= phi} stays inside the positive orthant:

    W(t) = Gamma(an) / (Gamma(alpha)^n n^(an/2))
           * sum_j a_{2j} t^(n-1+2j) / (n-1+2j).

The coefficients a_{2j} solve a dense linear system whose entries are
Gamma(1/2 + beta n + m - j) Gamma((n-1)/2 + j) against right-hand sides
built from n-fold convolutions; rows and columns are rescaled in log space
before a pivoted solve with iterative refinement.

The truncated moments of cos Phi and cot Phi over the complementary angle
range feed the integer-alpha route to the sample-variance cdf; they are
built in mpmath (a forward incomplete-beta recurrence makes that cheap)
because the subtraction gamma_k - (polynomial part) cancels ever deeper
as k grows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import mpmath as mp
import numpy as np

from . import dd
from .coeffs import ModelParams, MomentTable, _build_mp_gamma
from .errors import (BudgetExceeded, ConditioningError, DomainError,
                     NegativeDensityAlarm)
from .specfun import log_gamma

_MAX_SYSTEM = 60


@dataclass
class AngleCoefficients:
    """Solved polynomial coefficients a_{2j} plus derived quantities.

    a_mp carries the same coefficients at extended precision; the truncated
    moments subtract the polynomial part from gamma_k across ever more
    digits as k grows, so double precision coefficients would floor them.
    """

    params: ModelParams
    N: int
    a: np.ndarray
    cond_estimate: float
    W_at_phi_n: float
    a_mp: Optional[list] = None
    _gbar_cache: dict = field(default_factory=dict, repr=False)

    @property
    def t_max(self) -> float:
        return 1.0 / math.sqrt(self.params.n - 1)


def _require_integer_alpha(params: ModelParams) -> int:
    if not params.integer_alpha:
        raise DomainError("the polynomial angle cdf requires integer alpha")
    return int(round(params.alpha))


def _log_conv_short(logc: List[float], n: int, upto: int) -> np.ndarray:
    """n-fold log-space self-convolution of a short positive sequence."""
    arr = np.array(logc[: upto + 1])

    def conv(a, b):
        out = np.empty(upto + 1)
        for k in range(upto + 1):
            v = a[: k + 1] + b[k::-1]
            m = np.max(v)
            out[k] = m + math.log(np.sum(np.exp(v - m)))
        return out

    res = None
    base = arr.copy()
    e = n
    while e:
        if e & 1:
            res = base.copy() if res is None else conv(res, base)
        e >>= 1
        if e:
            base = conv(base, base)
    return res


def _residual(A: np.ndarray, x: np.ndarray, b: np.ndarray) -> np.ndarray:
    """b - A x with error-free products and exactly rounded sums."""
    out = np.empty(b.size)
    for i in range(b.size):
        parts = [b[i]]
        for j in range(x.size):
            p, e = dd.two_prod(A[i, j], -x[j])
            parts.append(p)
            parts.append(e)
        out[i] = math.fsum(parts)
    return out


def solve_angle_coeffs(params: ModelParams) -> AngleCoefficients:
    """Build and solve the rescaled linear system for the a_{2j}."""
    alpha = _require_integer_alpha(params)
    n = params.n
    if n < 2:
        raise DomainError("the angle distribution requires n >= 2")
    N = ((alpha - 1) * n) // 2
    if N + 1 > _MAX_SYSTEM:
        raise DomainError(f"system size {N + 1} exceeds the {_MAX_SYSTEM} guard")
    if alpha % 2 == 1:
        beta = (alpha - 1) // 2
        logc = [log_gamma(0.5 + beta + m) - log_gamma(2 * m + 1.0)
                for m in range(N + 1)]
        conv = _log_conv_short(logc, n, N)
        logrhs = np.array([math.log(2.0) + log_gamma(2 * m + 1.0)
                           - m * math.log(n) + conv[m] for m in range(N + 1)])
    else:
        beta = alpha // 2
        logc = [log_gamma(0.5 + beta + m) - log_gamma(2 * m + 2.0)
                for m in range(N + 1)]
        conv = _log_conv_short(logc, n, N)
        logrhs = np.array([math.log(2.0) + log_gamma(2.0 * m + n + 1.0)
                           - (m + 0.5 * n) * math.log(n) + conv[m]
                           for m in range(N + 1)])

    # scaled system: divide row m by Gamma(1/2 + beta n + m), column j by
    # Gamma((n-1)/2 + j); entries become reciprocal rising factorials
    bn = beta * n
    A = np.empty((N + 1, N + 1))
    for m in range(N + 1):
        for j in range(N + 1):
            A[m, j] = math.exp(log_gamma(0.5 + bn + m - j)
                               - log_gamma(0.5 + bn + m))
    shift = float(np.max(logrhs - np.array(
        [log_gamma(0.5 + bn + m) for m in range(N + 1)])))
    rhs = np.array([math.exp(logrhs[m] - log_gamma(0.5 + bn + m) - shift)
                    for m in range(N + 1)])
    cond = float(np.linalg.cond(A, 1)) if N else 1.0
    if cond > 1e12:
        raise ConditioningError(
            f"angle system condition ~{cond:.2e} beyond 1e12; "
            "the polynomial route is limited to moderate alpha*n")
    x = np.linalg.solve(A, rhs)
    for _ in range(6):
        res = _residual(A, x, rhs)
        if np.max(np.abs(res)) <= 1e-12 * max(np.max(np.abs(rhs)), 1e-300):
            break
        x = x + np.linalg.solve(A, res)
    else:
        res = _residual(A, x, rhs)
        if np.max(np.abs(res)) > 1e-10 * max(np.max(np.abs(rhs)), 1e-300):
            raise ConditioningError("iterative refinement stalled")

    a = np.array([x[j] * math.exp(shift - log_gamma(0.5 * (n - 1) + j))
                  for j in range(N + 1)])
    a_mp = _solve_mp(alpha, n, N)
    coeffs = AngleCoefficients(params=params, N=N, a=a, cond_estimate=cond,
                               W_at_phi_n=0.0, a_mp=a_mp)
    if a_mp is not None:
        with mp.workdps(40):
            diff = max(abs(float(v) - av) / max(abs(av), 1e-300)
                       for v, av in zip(a_mp, a))
        if diff > max(1e-9, cond * 5e-13):
            raise ConditioningError(
                f"double and extended solves disagree ({diff:.1e})")
    coeffs.W_at_phi_n = tan_cdf(coeffs, coeffs.t_max)
    _validate(coeffs)
    coeffs.W_at_phi_n = min(max(coeffs.W_at_phi_n, 0.0), 1.0)
    return coeffs


def _solve_mp(alpha: int, n: int, N: int, dps: int = 60) -> list:
    """The same linear system at extended precision (small, so cheap)."""
    with mp.workdps(dps):
        if alpha % 2 == 1:
            beta = (alpha - 1) // 2
            e = [mp.gamma(mp.mpf(1) / 2 + beta + m) / mp.factorial(2 * m)
                 for m in range(N + 1)]
        else:
            beta = alpha // 2
            e = [mp.gamma(mp.mpf(1) / 2 + beta + m) / mp.factorial(2 * m + 1)
                 for m in range(N + 1)]
        conv = [mp.mpf(0)] * (N + 1)
        res = None
        base = e[:]
        ee = n

        def convolve(u, v):
            return [mp.fsum(u[i] * v[m - i] for i in range(m + 1))
                    for m in range(N + 1)]

        while ee:
            if ee & 1:
                res = base[:] if res is None else convolve(res, base)
            ee >>= 1
            if ee:
                base = convolve(base, base)
        conv = res
        rhs = []
        for m in range(N + 1):
            if alpha % 2 == 1:
                rhs.append(2 * mp.factorial(2 * m) / mp.mpf(n) ** m * conv[m])
            else:
                rhs.append(2 * mp.factorial(2 * m + n)
                           / mp.power(n, m + mp.mpf(n) / 2) * conv[m])
        bn = beta * n
        M = mp.matrix(N + 1, N + 1)
        for m in range(N + 1):
            for j in range(N + 1):
                M[m, j] = mp.gamma(mp.mpf(1) / 2 + bn + m - j) \
                    * mp.gamma(mp.mpf(n - 1) / 2 + j)
        sol = mp.lu_solve(M, mp.matrix(rhs))
        return [sol[j] for j in range(N + 1)]


def _log_w_prefactor(params: ModelParams) -> float:
    alpha, n = params.alpha, params.n
    return (log_gamma(params.an) - n * log_gamma(alpha)
            - 0.5 * params.an * math.log(n))


def _validate(coeffs: AngleCoefficients) -> None:
    if not 0.0 <= coeffs.W_at_phi_n <= 1.0 + 1e-12:
        raise NegativeDensityAlarm(
            f"W at the interval end is {coeffs.W_at_phi_n}, outside [0, 1]")
    t = np.linspace(0.0, coeffs.t_max, 1000)
    if np.any(_pdf_grid(coeffs, t) < -1e-12 * max(1.0, np.max(np.abs(coeffs.a)))):
        raise NegativeDensityAlarm("negative tangent density (failed solve)")


def _pdf_grid(coeffs: AngleCoefficients, t: np.ndarray) -> np.ndarray:
    n = coeffs.params.n
    pref = math.exp(_log_w_prefactor(coeffs.params))
    out = np.zeros_like(t)
    for j in range(coeffs.N, -1, -1):
        out = out * t * t + coeffs.a[j]
    with np.errstate(invalid="ignore"):
        base = np.where(t > 0, t ** (n - 2), 1.0 if n == 2 else 0.0)
    return pref * out * base


def tan_cdf(coeffs: AngleCoefficients, t: float) -> float:
    """W(t) = Pr{tan Phi <= t} on [0, (n-1)^(-1/2)]."""
    n = coeffs.params.n
    if t < -1e-15 or t > coeffs.t_max * (1.0 + 1e-12):
        raise DomainError(
            f"t={t} outside [0, {coeffs.t_max}] where the polynomial form holds")
    t = min(max(t, 0.0), coeffs.t_max)
    if t == 0.0:
        return 0.0
    pref = math.exp(_log_w_prefactor(coeffs.params))
    tot = 0.0
    for j in range(coeffs.N, -1, -1):
        tot = tot * t * t + coeffs.a[j] / (n - 1 + 2 * j)
    return pref * tot * t ** (n - 1)


def tan_pdf(coeffs: AngleCoefficients, t: float) -> float:
    """Density of tan Phi on [0, (n-1)^(-1/2)]."""
    if t < -1e-15 or t > coeffs.t_max * (1.0 + 1e-12):
        raise DomainError(
            f"t={t} outside [0, {coeffs.t_max}] where the polynomial form holds")
    val = float(_pdf_grid(coeffs, np.array([max(t, 0.0)]))[0])
    if val < -1e-12:
        raise NegativeDensityAlarm(f"negative density {val} at t={t}")
    return max(val, 0.0)


# ---------------------------------------------------------------------------
# truncated moments
# ---------------------------------------------------------------------------

def _gbar_mp(coeffs: AngleCoefficients, kmax: int, dps: int = 60) -> list:
    """Truncated moments gbar_k of cos Phi over the outer angle range, as
    mpmath values for k = 0..kmax.

    gbar_k = gamma_k - pref/2 sum_j a_{2j} B((n-1)/2+j, ((alpha-1)n+k+1)/2-j; 1/n);
    the incomplete betas are marched in k with the stable forward recurrence
    B(a, b+1; x) = (b B(a,b;x) + x^a (1-x)^b) / (a+b).
    """
    key = (kmax, dps)
    hit = coeffs._gbar_cache.get(key)
    if hit is not None:
        return hit
    params = coeffs.params
    alpha = int(round(params.alpha))
    n = params.n
    N = coeffs.N
    gam = _build_mp_gamma(params, kmax, dps=dps)
    # the polynomial coefficients sit inside a subtraction that cancels as
    # deep as the gbar themselves; re-solve them at matching precision
    acache = getattr(coeffs, "_a_mp_cache", None)
    if acache is None or acache[0] < dps:
        acache = (dps, _solve_mp(alpha, n, N, dps=dps + 10))
        coeffs._a_mp_cache = acache
    a_hi = acache[1]
    with mp.workdps(dps):
        x = mp.mpf(1) / n
        logpref = mp.loggamma(params.an) - n * mp.loggamma(alpha) \
            - params.an * mp.log(n) / 2
        pref = mp.e ** logpref
        amp = [mp.mpf(a_hi[j]) for j in range(N + 1)]
        out = []
        # per-j forward chains over k (parity 0 and 1 seeds)
        achain = [mp.mpf(n - 1) / 2 + j for j in range(N + 1)]
        bstart = [[((alpha - 1) * n + k + 1) / mp.mpf(2) - j for j in range(N + 1)]
                  for k in (0, 1)]
        # mp.betainc is non-regularized by default
        bval = [[mp.betainc(achain[j], bstart[p][j], 0, x)
                 for j in range(N + 1)] for p in (0, 1)]
        bcur = [list(bv) for bv in bval]
        bpar = [list(bs) for bs in bstart]
        for k in range(kmax + 1):
            p = k % 2
            tot = mp.mpf(0)
            for j in range(N + 1):
                tot += amp[j] * bcur[p][j]
            out.append(gam[k] - pref / 2 * tot)
            # advance this parity chain: b -> b + 1 (i.e. k -> k + 2)
            for j in range(N + 1):
                a_ = achain[j]
                b_ = bpar[p][j]
                bcur[p][j] = (b_ * bcur[p][j] + x ** a_ * (1 - x) ** b_) / (a_ + b_)
                bpar[p][j] = b_ + 1
    coeffs._gbar_cache[key] = out
    return out


def truncated_cos_moments(coeffs: AngleCoefficients, table: MomentTable,
                          kmax: int) -> np.ndarray:
    """gbar_k for k = 0..kmax as floats; 0 <= gbar_k <= gamma_k.

    For alpha = 1 the closed-form specialization (single polynomial
    coefficient) is cross-checked against the general path to 1e-12.
    """
    params = coeffs.params
    gbar = _gbar_mp(coeffs, kmax, dps=_gbar_dps(params, kmax))
    out = np.array([float(g) for g in gbar])
    neg = out < -1e-13
    if np.any(neg):
        raise NegativeDensityAlarm(
            "truncated cosine moments came out negative beyond tolerance")
    out = np.maximum(out, 0.0)
    if int(round(params.alpha)) == 1:
        spec = _gbar_alpha1(params, table, min(kmax, 12))
        if np.max(np.abs(out[: spec.size] - spec)) > 1e-12:
            raise NegativeDensityAlarm(
                "alpha=1 closed form disagrees with the general path")
    return out


def _gbar_dps(params: ModelParams, kmax: int) -> int:
    # the subtraction cancels like (n/(n-1))^((an+k)/2)
    n = params.n
    loss = 0.5 * (params.an + kmax) * math.log10(n / (n - 1.0))
    return 30 + int(math.ceil(loss))


def _gbar_alpha1(params: ModelParams, table: MomentTable, kmax: int
                 ) -> np.ndarray:
    """Closed-form truncated cosine moments for alpha = 1."""
    from .specfun import incomplete_beta
    n = params.n
    pref = math.exp(log_gamma(float(n)) - 0.5 * n * math.log(n)
                    + 0.5 * (n - 1) * math.log(math.pi)
                    - log_gamma(0.5 * (n - 1)))
    gam = np.exp(table.log_gamma_m[: kmax + 1])
    out = np.empty(kmax + 1)
    for k in range(kmax + 1):
        out[k] = gam[k] - pref * incomplete_beta(
            0.5 * (n - 1), 0.5 * (k + 1), 1.0 / n)
    return np.maximum(out, 0.0)


def truncated_cot_moments(gbar, params: ModelParams, kmax: int,
                          tol: float = 1e-14,
                          coeffs: Optional[AngleCoefficients] = None
                          ) -> np.ndarray:
    """Mbar_k = sum_j C((an+k)/2 + j - 1, j) gbar_{k+2j}, k = 0..kmax.

    The tail is bounded geometrically through cos^2 <= (n-1)/n on the
    truncated angle range. For n = 2 the range has measure zero and every
    Mbar_k is exactly 0. Pass `coeffs` to let the adaptive depth extend the
    gbar sequence beyond what was supplied.
    """
    n = params.n
    if n == 2:
        return np.zeros(kmax + 1)
    an = params.an
    q = (n - 1.0) / n
    have = len(gbar)
    vals = list(gbar)
    out = np.empty(kmax + 1)
    for k in range(kmax + 1):
        tot = 0.0
        c = 1.0
        j = 0
        while True:
            idx = k + 2 * j
            if idx >= have:
                if coeffs is not None:
                    need = max(2 * have, idx + 64)
                    more = _gbar_mp(coeffs, need,
                                    dps=_gbar_dps(params, need))
                    vals = [float(g) for g in more]
                    have = len(vals)
                else:
                    raise BudgetExceeded(
                        "gbar sequence too short for the requested tail "
                        f"accuracy (need index {idx})")
            term = c * vals[idx]
            tot += term
            # remaining terms bounded by term * sum of (ratio q)^i
            ratio = (0.5 * (an + k) + j) / (j + 1.0) * q
            if ratio < 1.0 and term * ratio / (1.0 - ratio) < tol * max(tot, 1e-300):
                break
            j += 1
            c *= (0.5 * (an + k) + j - 1.0) / j
            if j > 20000:
                raise BudgetExceeded(
                    "cotangent moment tail did not close; alpha*n too large "
                    "for the truncated-moment route")
        out[k] = tot
    return out


def mbar_mp(coeffs: AngleCoefficients, kmax: int, extra_digits: int = 40
            ) -> Tuple[list, list]:
    """Mbar_k (and per-k error bounds) as mpmath values, k = 0..kmax.

    They grow like (n-1)^(k/2) and feed a deeply cancelling alternating
    series; extra_digits sets how many digits beyond their own scale they
    must stay reliable for. Summation covers the term hump at
    j ~ (an+k)/2 q/(1-q); the geometric remainder (cos^2 <= q on the
    truncated range, so gbar ratios are <= q exactly) is closed in one
    regularized-incomplete-beta evaluation of the negative-binomial tail.
    Cached on the coefficients.
    """
    cache = getattr(coeffs, "_mbar_mp_cache", None)
    if cache is not None and cache[0] >= kmax and cache[2] >= extra_digits:
        return cache[1][: kmax + 1], cache[3][: kmax + 1]
    params = coeffs.params
    n = params.n
    if n == 2:
        out = [mp.mpf(0)] * (kmax + 1)
        coeffs._mbar_mp_cache = (kmax, out, extra_digits, out)
        return out, out
    an = params.an
    q = (n - 1.0) / n
    # the j-sum for Mbar_k peaks at j* ~ s2 q/(1-q); past it the term ratio
    # (s2+j)/(j+1) q climbs from 1 toward q only slowly, so the stopping
    # index J solves (J-j*)(-ln q) - s2 ln(J/j*) = target
    s2 = 0.5 * (an + kmax)
    jstar = max(s2 * q / (1.0 - q), 4.0)
    target = (extra_digits + 8) * math.log(10.0) + 6.0
    J = jstar + 1.3 * target / (-math.log(q))
    for _ in range(4):
        J = jstar + (target + s2 * math.log(J / jstar)) / (-math.log(q))
    depth = kmax + 2 * int(J + 6.0 * math.sqrt(jstar + 4)) + 8
    dps = _gbar_dps(params, depth) - 30 + extra_digits
    tol = mp.mpf(10) ** (-extra_digits - 4)
    gbar = _gbar_mp(coeffs, depth, dps=dps)
    out = []
    errs = []
    with mp.workdps(dps):
        man = mp.mpf(params.alpha) * n
        for k in range(kmax + 1):
            s2 = (man + k) / 2
            tot = mp.mpf(0)
            c = mp.mpf(1)
            j = 0
            prev = mp.inf
            floor_err = mp.mpf(0)
            while True:
                idx = k + 2 * j
                if idx >= len(gbar):
                    depth = max(int(1.6 * len(gbar)), idx + 64)
                    gbar = _gbar_mp(coeffs, depth,
                                    dps=_gbar_dps(params, depth) - 30
                                    + extra_digits)
                term = c * gbar[idx]
                ratio = float(s2 + j) / (j + 1.0) * q
                if ratio < 1.0 and (term <= 0 or term > prev):
                    # gbar has bottomed out at its precision floor; the
                    # remaining true tail is below prev/(1-ratio)
                    floor_err = prev * ratio / (1 - ratio) + abs(term)
                    break
                tot += term
                if ratio < 1.0 and term * ratio / (1 - ratio) < tol * tot:
                    break
                if ratio < 1.0:
                    prev = term
                j += 1
                c *= (s2 + j - 1) / j
            out.append(tot)
            errs.append(tot * tol * 10 + floor_err)
    coeffs._mbar_mp_cache = (kmax, out, extra_digits, errs)
    return out, errs


def mbar_dd(coeffs: AngleCoefficients, kmax: int, tol: float = 1e-28
            ) -> Tuple[np.ndarray, np.ndarray]:
    """Mbar as double-double pairs (rounded from the mpmath values)."""
    vals, _ = mbar_mp(coeffs, kmax)
    hi = np.empty(kmax + 1)
    lo = np.empty(kmax + 1)
    with mp.workdps(40):
        for k, v in enumerate(vals):
            hi[k], lo[k] = dd.from_mpf(v)
    return hi, lo
