"""Moment machinery for i.i.d. gamma samples.

Everything downstream (sum-of-squares cdf, sample-variance cdf, angle cdf)
is driven by one sequence: the moments of the cosine of the angle between
the sample vector and the diagonal,

    mu_k = E((sqrt(n) cos Phi)^(alpha n + k)) = n^((alpha n + k)/2) gamma_k.

mu is obtained from the coefficient sequence beta of the expansion of the
n-th power of the Laplace transform of a squared gamma variate in powers
of t^(-1/2); beta is an n-fold convolution of single-variate terms
Gamma((alpha+k)/2)/k!, computed by square-and-multiply on truncated
sequences. Sequences are stored as (sign, log magnitude): mu grows like
n^((alpha n + k)/2) and beta decays factorially, so plain doubles overflow
near k ~ 300.

A parallel double-double pipeline provides gamma_k and the gamma-function
ratio chain to ~31 digits for bounded k; the alternating sums downstream
cancel far below double precision and are fed from it.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Optional, Tuple

import mpmath as mp
import numpy as np

from . import dd
from .errors import BudgetExceeded, CancellationAlarm, DomainError
from .specfun import log_gamma

_BETA_BUDGET = 10_000


@dataclass(frozen=True)
class ModelParams:
    """Shape alpha of the gamma parent and sample size n."""

    alpha: float
    n: int

    def __post_init__(self) -> None:
        if not (isinstance(self.n, int) and self.n >= 1):
            raise DomainError(f"n must be an integer >= 1, got {self.n!r}")
        if not self.alpha > 0.0:
            raise DomainError(f"alpha must be > 0, got {self.alpha!r}")

    @property
    def an(self) -> float:
        return self.alpha * self.n

    def require_variance(self) -> None:
        if self.n < 2:
            raise DomainError("sample variance requires n >= 2")

    @property
    def integer_alpha(self) -> bool:
        return abs(self.alpha - round(self.alpha)) < 1e-12


def _log_conv(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Log-space convolution of two log-magnitude sequences (same length).

    out[k] = log sum_j exp(a[j] + b[k-j]); the per-k max shift is the
    renormalization that keeps exp() in range.
    """
    L = a.size
    out = np.empty(L)
    for k in range(L):
        v = a[: k + 1] + b[k::-1]
        m = np.max(v)
        if not np.isfinite(m):
            out[k] = -np.inf
        else:
            out[k] = m + np.log(np.sum(np.exp(v - m)))
    return out


def _log_conv_power(logc: np.ndarray, n: int) -> np.ndarray:
    """n-fold log-space self-convolution by binary exponentiation.

    Truncation to the input length is exact for the retained indices:
    entry k only receives contributions from indices <= k.
    """
    result: Optional[np.ndarray] = None
    base = logc.copy()
    e = n
    while e:
        if e & 1:
            result = base.copy() if result is None else _log_conv(result, base)
        e >>= 1
        if e:
            base = _log_conv(base, base)
    assert result is not None
    return result


def build_beta(params: ModelParams, K: int) -> np.ndarray:
    """log |beta_k| for k = 0..K; the sign of beta_k is (-1)^k.

    beta_k = (-1)^k (2 Gamma(alpha))^(-n) * sum over compositions
    k = k_1 + ... + k_n of prod Gamma((alpha+k_i)/2) / k_i!.
    """
    if K < 0:
        raise DomainError("K must be >= 0")
    if K > _BETA_BUDGET:
        raise BudgetExceeded(f"beta order K={K} exceeds budget {_BETA_BUDGET}")
    alpha, n = params.alpha, params.n
    k = np.arange(K + 1, dtype=float)
    logc = np.array([log_gamma((alpha + kk) / 2.0) - log_gamma(kk + 1.0)
                     for kk in k])
    conv = _log_conv_power(logc, n)
    return conv - n * (math.log(2.0) + log_gamma(alpha))


@dataclass
class MomentTable:
    """Moment sequences of one (alpha, n) model, in log-magnitude form.

    Immutable after construction (the double-double cache is extended
    lazily under a lock and is itself append-only).
    """

    params: ModelParams
    K: int
    log_beta_abs: np.ndarray
    log_mu: np.ndarray
    log_gamma_m: np.ndarray
    _dd_lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    _dd: Optional["_DDMoments"] = field(default=None, repr=False)

    @property
    def beta_sign(self) -> np.ndarray:
        k = np.arange(self.K + 1)
        return np.where(k % 2 == 0, 1, -1)

    def mu(self, k: int) -> float:
        return float(np.exp(self.log_mu[k]))

    def gamma_m(self, k: int) -> float:
        return float(np.exp(self.log_gamma_m[k]))

    def dd_moments(self, upto: int) -> "_DDMoments":
        """Double-double gamma_k / ratio chains for k <= upto (cached)."""
        with self._dd_lock:
            if self._dd is None or self._dd.order < upto:
                self._dd = _build_dd_moments(self.params, upto)
            return self._dd


def build_moments(params: ModelParams, K: int) -> MomentTable:
    """MomentTable with mu, gamma and beta to order K.

    ln mu_k = ln 2 + ln Gamma(alpha n) + ln k! + ln |beta_k|
              - ln Gamma((alpha n + k)/2),
    gamma_k = mu_k n^(-(alpha n + k)/2).
    """
    log_beta = build_beta(params, K)
    an = params.an
    k = np.arange(K + 1, dtype=float)
    lgk = np.array([log_gamma(kk + 1.0) for kk in k])
    lgan = np.array([log_gamma((an + kk) / 2.0) for kk in k])
    log_mu = math.log(2.0) + log_gamma(an) + lgk + log_beta - lgan
    log_gm = log_mu - (an + k) / 2.0 * math.log(params.n)
    return MomentTable(params=params, K=K, log_beta_abs=log_beta,
                       log_mu=log_mu, log_gamma_m=log_gm)


def scaled_moments(table: MomentTable, lam: float) -> np.ndarray:
    """log of mu_{k,lambda} = lambda^-(alpha n + k) mu_k."""
    if not lam > 0.0:
        raise DomainError(f"lambda must be > 0, got {lam}")
    an = table.params.an
    k = np.arange(table.K + 1, dtype=float)
    return table.log_mu - (an + k) * math.log(lam)


def lambda_star(params: ModelParams) -> float:
    """The moment scale (E U^(-alpha n))^(1/(alpha n)) = mu_0^(1/(alpha n))."""
    alpha, n = params.alpha, params.n
    an = params.an
    ln = (math.log(2.0) + log_gamma(an) + n * log_gamma(alpha / 2.0)
          - n * (math.log(2.0) + log_gamma(alpha)) - log_gamma(an / 2.0))
    return math.exp(ln / an)


@dataclass
class DiffWeights:
    """k-th order alternating differences of a scaled moment sequence."""

    values: np.ndarray
    est_rel_err: np.ndarray
    used_dd: bool


def _diff_table_float(v: np.ndarray, kmax: int) -> Tuple[np.ndarray, np.ndarray]:
    delta = np.empty(kmax + 1)
    err = np.empty(kmax + 1)
    cur = v.astype(float).copy()
    cur_err = np.abs(cur) * 1e-16
    delta[0] = cur[0]
    err[0] = cur_err[0]
    for m in range(1, kmax + 1):
        cur = cur[:-1] - cur[1:]
        cur_err = cur_err[:-1] + cur_err[1:] + np.abs(cur) * 1e-16
        delta[m] = cur[0]
        err[m] = cur_err[0]
    return delta, err


def _diff_table_dd(vh: np.ndarray, vl: np.ndarray, kmax: int,
                   in_rel: float = 1e-31) -> Tuple[np.ndarray, np.ndarray]:
    delta = np.empty(kmax + 1)
    err = np.empty(kmax + 1)
    ch, cl = vh.copy(), vl.copy()
    cur_err = np.abs(ch) * in_rel
    delta[0] = ch[0] + cl[0]
    err[0] = cur_err[0]
    for m in range(1, kmax + 1):
        ch, cl = dd.vsub(ch[:-1], cl[:-1], ch[1:], cl[1:])
        cur_err = cur_err[:-1] + cur_err[1:] + np.abs(ch) * 1e-32
        delta[m] = ch[0] + cl[0]
        err[m] = cur_err[0]
    return delta, err


def diff_weights(scaled_logmu: np.ndarray, kmax: int,
                 dd_values: Optional[Tuple[np.ndarray, np.ndarray]] = None,
                 alarm_rel: float = 1e-6) -> DiffWeights:
    """delta_k = sum_j (-1)^j C(k,j) mu_{j,lambda} for k = 0..kmax.

    Computed by iterated adjacent differencing (better conditioned than the
    binomial sum). If the running error estimate of any delta_k exceeds
    alarm_rel relative, the table is re-accumulated in double-double
    arithmetic; pass dd_values = (hi, lo) of the scaled moments to give that
    fallback full-precision inputs.
    """
    if kmax + 1 > scaled_logmu.size:
        raise DomainError("need scaled moments to order kmax")
    v = np.exp(scaled_logmu[: kmax + 1])
    delta, err = _diff_table_float(v, kmax)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(delta != 0.0, np.abs(err / delta), np.inf)
    if not np.any(rel > alarm_rel):
        return DiffWeights(values=delta, est_rel_err=rel, used_dd=False)
    if dd_values is not None:
        vh, vl = dd_values
        vh, vl = vh[: kmax + 1], vl[: kmax + 1]
        in_rel = 1e-31
    else:
        vh, vl = dd.varray(v)
        in_rel = 1e-16  # inputs themselves only carry double precision
    delta, err = _diff_table_dd(vh, vl, kmax, in_rel=in_rel)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(delta != 0.0, np.abs(err / delta), np.inf)
    return DiffWeights(values=delta, est_rel_err=rel, used_dd=True)


def u2_moments(params: ModelParams, kmax: int) -> np.ndarray:
    """E(U^(2k)) for k = 0..kmax, via the n-fold convolution of
    Gamma(alpha + 2m) / (Gamma(alpha) m!)."""
    if kmax < 0:
        raise DomainError("kmax must be >= 0")
    if kmax > 50:
        raise BudgetExceeded("u2_moments supports kmax <= 50")
    alpha, n = params.alpha, params.n
    an = params.an
    m = np.arange(kmax + 1, dtype=float)
    logd = np.array([log_gamma(alpha + 2.0 * mm) - log_gamma(alpha)
                     - log_gamma(mm + 1.0) for mm in m])
    conv = _log_conv_power(logd, n)
    out = np.empty(kmax + 1)
    for k in range(kmax + 1):
        out[k] = math.exp(log_gamma(an) + log_gamma(k + 1.0)
                          - log_gamma(an + 2.0 * k) + conv[k])
    return out


# ---------------------------------------------------------------------------
# double-double pipeline
# ---------------------------------------------------------------------------

@dataclass
class _DDMoments:
    """gamma_k, adjacent ratios and the gamma-function ratio chain in dd.

    g[k] = Gamma((an+k)/2) / Gamma((an+k+1)/2); gamma ratios satisfy
    gamma_{k+1}/gamma_k = (k+1) c~_{k+1}/c~_k g_k / (sigma sqrt(n)) where c~
    is the sigma-scaled convolution output.
    """

    order: int
    gamma_hi: np.ndarray
    gamma_lo: np.ndarray
    rgamma_hi: np.ndarray  # gamma_{k+1} / gamma_k, k = 0..order-1
    rgamma_lo: np.ndarray
    g_hi: np.ndarray
    g_lo: np.ndarray

    def gamma_dd(self, k: int) -> Tuple[float, float]:
        return self.gamma_hi[k], self.gamma_lo[k]


def _dd_normalize(h: np.ndarray, l: np.ndarray, e: np.ndarray) -> None:
    """Renormalize mantissas into [0.5, 2), folding the shift into e (in place)."""
    for i in range(h.size):
        if h[i] == 0.0:
            continue
        _, ex = math.frexp(h[i])
        if ex:
            h[i] = math.ldexp(h[i], -ex)
            l[i] = math.ldexp(l[i], -ex)
            e[i] += ex


def _dd_conv(ah, al, ae, bh, bl, be) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Truncated convolution of positive dd sequences with per-entry binary
    exponents; unlimited dynamic range, ~31-digit accurate.

    Per output index the products are rescaled by exact powers of two and
    summed with math.fsum on the hi and lo parts separately (fsum is exactly
    rounded, so the only loss is the final recombination).
    """
    L = ah.size
    oh = np.empty(L)
    ol = np.empty(L)
    oe = np.zeros(L, dtype=np.int64)
    for k in range(L):
        ph, pl = dd.vmul(ah[: k + 1], al[: k + 1], bh[k::-1], bl[k::-1])
        ee = ae[: k + 1] + be[k::-1]
        emax = ee.max()
        sc = np.exp2((ee - emax).astype(float))
        ph = ph * sc  # exact: sc are powers of two
        pl = pl * sc
        s = math.fsum(ph)
        r = math.fsum([-s] + ph.tolist()) + math.fsum(pl)
        oh[k], ol[k] = dd.quick_two_sum(s, r)
        oe[k] = emax
    _dd_normalize(oh, ol, oe)
    return oh, ol, oe


def _dd_conv_power(ch, cl, ce, n: int):
    rh = rl = re = None
    bh, bl, be = ch.copy(), cl.copy(), ce.copy()
    e = n
    while e:
        if e & 1:
            if rh is None:
                rh, rl, re = bh.copy(), bl.copy(), be.copy()
            else:
                rh, rl, re = _dd_conv(rh, rl, re, bh, bl, be)
        e >>= 1
        if e:
            bh, bl, be = _dd_conv(bh, bl, be, bh, bl, be)
    assert rh is not None
    return rh, rl, re


def _mp_dd(x: "mp.mpf") -> Tuple[float, float]:
    return dd.from_mpf(x)


def _build_dd_moments(params: ModelParams, order: int) -> _DDMoments:
    """Build the dd gamma pipeline to the given order.

    All sequences involved are positive, so the convolutions are perfectly
    conditioned; only the seeds Gamma(alpha/2), Gamma((alpha+1)/2), gamma_0
    and sqrt(n) need more than double precision, and they come from mpmath.
    """
    alpha, n = params.alpha, params.n
    an = params.an
    L = order + 1
    sh = np.empty(L)
    sl = np.empty(L)
    se = np.zeros(L, dtype=np.int64)
    g_hi = np.empty(L)
    g_lo = np.empty(L)
    with mp.workdps(50):
        malpha = mp.mpf(alpha)
        man = malpha * n
        gam0 = (2 * mp.gamma(man) * mp.gamma(malpha / 2) ** n
                / ((2 * mp.gamma(malpha)) ** n * mp.gamma(man / 2)
                   * mp.power(n, man / 2)))
        sqrtn = mp.sqrt(n)

        # single-variate terms s_k = Gamma((alpha+k)/2)/k! as dd mantissa
        # plus binary exponent; parity recurrence
        # s_{k+2} = s_k (alpha+k)/2 / ((k+1)(k+2))
        cur = [mp.gamma(malpha / 2), mp.gamma((malpha + 1) / 2)]
        for k in range(L):
            v = cur[k % 2]
            ex = mp.mag(v)
            sh[k], sl[k] = _mp_dd(mp.ldexp(v, -int(ex)))
            se[k] = int(ex)
            cur[k % 2] = v * (malpha + k) / 2 / ((k + 1) * (k + 2))

        # ratio chain g_k = Gamma((an+k)/2)/Gamma((an+k+1)/2)
        curg = [mp.gamma(man / 2) / mp.gamma((man + 1) / 2),
                mp.gamma((man + 1) / 2) / mp.gamma((man + 2) / 2)]
        for k in range(L):
            g_hi[k], g_lo[k] = _mp_dd(curg[k % 2])
            curg[k % 2] = curg[k % 2] * (man + k) / (man + k + 1)

        gam0_hi, gam0_lo = _mp_dd(gam0)
        sqn_hi, sqn_lo = _mp_dd(sqrtn)

    ch, cl, ce = _dd_conv_power(sh, sl, se, n)

    # gamma_{k+1} = gamma_k (k+1) (c_{k+1}/c_k) g_k / sqrt(n)
    gamma_hi = np.empty(L)
    gamma_lo = np.empty(L)
    rg_hi = np.empty(L - 1)
    rg_lo = np.empty(L - 1)
    gamma_hi[0], gamma_lo[0] = gam0_hi, gam0_lo
    for k in range(L - 1):
        rh, rl = dd.div(ch[k + 1], cl[k + 1], ch[k], cl[k])
        sc = math.ldexp(float(k + 1), int(ce[k + 1] - ce[k]))
        rh, rl = dd.mul_f(rh, rl, sc)
        rh, rl = dd.mul(rh, rl, g_hi[k], g_lo[k])
        rh, rl = dd.div(rh, rl, sqn_hi, sqn_lo)
        rg_hi[k], rg_lo[k] = rh, rl
        gamma_hi[k + 1], gamma_lo[k + 1] = dd.mul(
            gamma_hi[k], gamma_lo[k], rh, rl)
    return _DDMoments(order=order, gamma_hi=gamma_hi, gamma_lo=gamma_lo,
                      rgamma_hi=rg_hi, rgamma_lo=rg_lo, g_hi=g_hi, g_lo=g_lo)


_mp_gamma_cache: dict = {}
_mp_gamma_lock = threading.Lock()


def _build_mp_gamma(params: ModelParams, upto: int, dps: int = 60) -> list:
    """gamma_k, k = 0..upto, as mpmath values (last-resort precision rung).

    Cached per (alpha, n): the n-fold convolution at extended precision is
    the single most expensive build step, so requests are served from the
    largest build so far whenever its precision and order suffice.
    """
    key = (float(params.alpha), params.n)
    with _mp_gamma_lock:
        hit = _mp_gamma_cache.get(key)
        if hit is not None and hit[0] >= upto and hit[1] >= dps:
            return hit[2][: upto + 1]
    out = _build_mp_gamma_impl(params, upto, dps)
    with _mp_gamma_lock:
        hit = _mp_gamma_cache.get(key)
        if hit is None or upto > hit[0] or (upto == hit[0] and dps > hit[1]):
            _mp_gamma_cache[key] = (upto, dps, out)
    return out


def _build_mp_gamma_impl(params: ModelParams, upto: int, dps: int) -> list:
    alpha, n = params.alpha, params.n
    with mp.workdps(dps):
        malpha = mp.mpf(alpha)
        man = malpha * n
        c = [mp.gamma((malpha + i) / 2) / mp.factorial(i) for i in range(upto + 1)]

        def convolve(a, b):
            return [mp.fsum(a[i] * b[j - i] for i in range(j + 1))
                    for j in range(upto + 1)]

        res = None
        base = c
        e = n
        while e:
            if e & 1:
                res = base[:] if res is None else convolve(res, base)
            e >>= 1
            if e:
                base = convolve(base, base)
        pref = 2 * mp.gamma(man) / (2 * mp.gamma(malpha)) ** n
        out = []
        fact = mp.mpf(1)
        for k in range(upto + 1):
            if k:
                fact *= k
            out.append(pref * fact * res[k]
                       / (mp.gamma((man + k) / 2) * mp.power(n, (man + k) / 2)))
        return out


@dataclass
class MixtureWeights:
    """Nonnegative mixture weights w_k = C(an+k-1, k) delta_{k, sqrt n}.

    The partial sums of w increase to 1; `deficit` is 1 - sum(w) and is a
    certified truncation bound for the gamma-mixture cdf, `abs_err` a bound
    on the accumulated weight noise.
    """

    weights: np.ndarray
    deficit: float
    abs_err: float
    K: int
    precision: str  # "dd" or "mp"


def sqrt_n_mixture_weights(table: MomentTable, abs_target: float,
                           k_cap: int = 400) -> MixtureWeights:
    """Adaptive-K mixture weights at lambda = sqrt(n).

    K grows until deficit + noise < abs_target. The difference table is
    built from double-double moments; if its worst-case noise bound defeats
    the target before the deficit does, the table is rebuilt in mpmath.
    Results are cached on the table per target.
    """
    cache = getattr(table, "_mixture_cache", None)
    if cache is None:
        cache = {}
        table._mixture_cache = cache
    ckey = (round(math.log10(abs_target), 3), k_cap)
    hit = cache.get(ckey)
    if hit is not None:
        return hit
    out = _sqrt_n_mixture_weights_impl(table, abs_target, k_cap)
    cache[ckey] = out
    return out


def _sqrt_n_mixture_weights_impl(table: MomentTable, abs_target: float,
                                 k_cap: int) -> MixtureWeights:
    an = table.params.an
    K = min(k_cap, max(16, int(2 * an) + 16))
    best: Optional[MixtureWeights] = None
    while True:
        ddm = table.dd_moments(min(K, table.K))
        if table.K < K:
            raise BudgetExceeded(
                f"moment table order {table.K} below mixture need {K}")
        dw = diff_weights(table.log_gamma_m, K,
                          dd_values=(ddm.gamma_hi, ddm.gamma_lo))
        k = np.arange(K + 1, dtype=float)
        logC = np.cumsum(np.concatenate(
            ([0.0], np.log((an + k[:-1]) / (k[:-1] + 1.0)))))
        Cf = np.exp(logC)
        w = Cf * dw.values
        werr = Cf * np.abs(dw.values) * dw.est_rel_err
        cums = np.cumsum(w)
        cume = np.cumsum(werr)
        total = (1.0 - cums) + cume
        ok = np.nonzero(total < abs_target)[0]
        if ok.size:
            Kend = int(ok[0])
            best = MixtureWeights(weights=np.maximum(w[: Kend + 1], 0.0),
                                  deficit=max(float(1.0 - cums[Kend]), 0.0),
                                  abs_err=float(cume[Kend]), K=Kend,
                                  precision="dd")
            return best
        # noise-limited? deficit alone would pass where noise spoils it
        noise_limited = np.any((1.0 - cums) < abs_target)
        if noise_limited or K >= k_cap:
            if not noise_limited and K >= k_cap:
                raise BudgetExceeded(
                    f"mixture weight deficit did not reach {abs_target} by K={k_cap}")
            break
        K = min(2 * K, k_cap)
    # mpmath rung, growing K as needed; working precision sized to defeat
    # the 2^K worst case
    while True:
        dps = 40 + int(math.ceil(0.302 * K))
        gam = _build_mp_gamma(table.params, K, dps=dps)
        with mp.workdps(dps):
            delta = list(gam)
            w = np.empty(K + 1)
            werr = np.empty(K + 1)
            man = mp.mpf(table.params.alpha) * table.params.n
            ulp = mp.mpf(10) ** (2 - dps)
            Cm = mp.mpf(1)
            w[0] = float(delta[0])
            werr[0] = float(delta[0] * ulp)
            for m in range(1, K + 1):
                delta = [delta[i] - delta[i + 1] for i in range(len(delta) - 1)]
                Cm = Cm * (man + m - 1) / m
                w[m] = float(Cm * delta[0])
                werr[m] = float(Cm * mp.mpf(2) ** m * ulp)
        cums = np.cumsum(w)
        cume = np.cumsum(werr)
        total = (1.0 - cums) + cume
        ok = np.nonzero(total < abs_target)[0]
        if ok.size:
            Kend = int(ok[0])
            return MixtureWeights(weights=np.maximum(w[: Kend + 1], 0.0),
                                  deficit=max(float(1.0 - cums[Kend]), 0.0),
                                  abs_err=float(cume[Kend]), K=Kend,
                                  precision="mp")
        if K >= k_cap:
            raise BudgetExceeded(
                f"mixture weights not certified to {abs_target} within K={K}")
        K = min(2 * K, k_cap)


# ---------------------------------------------------------------------------
# table cache
# ---------------------------------------------------------------------------

_table_cache: dict = {}
_cache_lock = threading.Lock()


def get_table(alpha: float, n: int, K: int) -> MomentTable:
    """Cached MomentTable for (alpha, n), grown to at least order K."""
    key = (float(alpha), int(n))
    with _cache_lock:
        tab = _table_cache.get(key)
        if tab is None or tab.K < K:
            tab = build_moments(ModelParams(alpha=float(alpha), n=int(n)), K)
            _table_cache[key] = tab
        return tab
