"""Cdf of the sum of squares Z of n i.i.d. gamma(alpha) variates.

H(r) = Pr{Z <= r^2}, in four representations driven by the moment table:

  power     alternating series  (r^an / Gamma(an)) sum mu_k/(an+k) (-r)^k/k!
  mixture   sum_k w_k G_{an+k}(lambda r); at lambda = sqrt(n) the weights are
            nonnegative and sum to 1, so truncation is certified
  legendre  shifted-Legendre expansion of the transform density contracted
            with exponentially scaled modified spherical Bessel values
  fourier   sine expansion of the same density (slowest; kept for
            cross-validation, never chosen automatically)

plus the cdf of U = sqrt(Z)/Y on [1/sqrt(n), 1] from the same Legendre /
Fourier coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from . import dd
from ._series import fit_outer_tail, hurwitz_tail, inner_power_sums
from .coeffs import (ModelParams, MomentTable, diff_weights, get_table,
                     lambda_star, scaled_moments, sqrt_n_mixture_weights)
from .errors import BudgetExceeded, CancellationAlarm, DomainError
from .specfun import (gamma_cdf_ladder, log_gamma, mod_sph_bessel_i_scaled,
                      reg_gamma_cdf, shifted_legendre, sph_bessel_j)

REPRESENTATIONS = ("power", "mixture", "legendre", "fourier", "auto")
LAMBDA_STRATEGIES = ("sqrt_n", "moment", "fixed")


@dataclass
class EvalConfig:
    """Evaluation knobs shared by every series representation."""

    tol: float = 1e-10
    max_k: int = 2000
    max_j: int = 5000
    representation: str = "auto"
    lambda_strategy: str = "sqrt_n"
    lambda_value: Optional[float] = None
    legendre_kmax: int = 40
    fourier_mmax: int = 200

    def __post_init__(self) -> None:
        if self.tol <= 0:
            raise DomainError("tol must be > 0")
        if self.max_k <= 0 or self.max_j <= 0:
            raise DomainError("budgets must be positive")
        if self.representation not in REPRESENTATIONS:
            raise DomainError(f"unknown representation {self.representation!r}")
        if self.lambda_strategy not in LAMBDA_STRATEGIES:
            raise DomainError(f"unknown lambda strategy {self.lambda_strategy!r}")
        if self.lambda_strategy == "fixed" and not (
                self.lambda_value and self.lambda_value > 0):
            raise DomainError("fixed lambda strategy needs lambda_value > 0")


@dataclass
class SeriesResult:
    value: float
    est_error: float
    terms_used: int
    representation: str
    diagnostics: Dict = field(default_factory=dict)


def _clamp(x: float) -> float:
    return min(1.0, max(0.0, x))


def resolve_lambda(table: MomentTable, cfg: EvalConfig) -> float:
    if cfg.lambda_strategy == "sqrt_n":
        return math.sqrt(table.params.n)
    if cfg.lambda_strategy == "moment":
        return lambda_star(table.params)
    return float(cfg.lambda_value)


def _power_k_need(rho: float, cap: int) -> int:
    return min(cap, int(rho + 12.0 * math.sqrt(rho + 1.0) + 40.0))


def cdf_sumsq_power(table: MomentTable, r: float, cfg: Optional[EvalConfig] = None
                    ) -> SeriesResult:
    """Alternating power series for H; double-double term recurrence."""
    cfg = cfg or EvalConfig()
    if r < 0:
        raise DomainError("r must be >= 0")
    if r == 0.0:
        return SeriesResult(0.0, 0.0, 0, "power")
    params = table.params
    an = params.an
    rho = r * math.sqrt(params.n)
    k_cap = _power_k_need(rho, cfg.max_k)
    if table.K < k_cap:
        raise BudgetExceeded(
            f"moment table order {table.K} below power-series need {k_cap}")
    logpref = an * math.log(r) - log_gamma(an) + table.log_mu[0] - math.log(an)
    pref = math.exp(logpref)
    if pref == 0.0:
        return SeriesResult(0.0, 1e-300, 0, "power")
    stop = np.array([max(cfg.tol * 1e-2 / pref, 1e-290)])
    inner = inner_power_sums(table, r, np.array([0]), k_cap, stop)
    s = float(inner.value[0])
    maxu = float(inner.max_abs[0])
    max_term = maxu * pref
    value = pref * s
    est = pref * (float(inner.noise[0]) + float(inner.tail[0])) + abs(value) * 1e-14
    terms = int(inner.terms[0])
    precision = "dd"
    if max_term > 1e12 / cfg.tol or pref * float(inner.noise[0]) > 0.25 * cfg.tol:
        # cancellation beyond the double-double rung; one mpmath
        # re-summation extends the usable range up to max term ~1e40
        if max_term > 1e40:
            raise CancellationAlarm(
                "power representation cancellation beyond budget "
                f"(max term ~ {max_term:.2e} on the cdf scale); "
                "use the mixture representation")
        value, est = _power_mp(table, r, k_cap, max_term)
        precision = "mp"
    return SeriesResult(_clamp(value), est, terms, "power",
                        {"rho": rho, "precision": precision,
                         "max_term_ratio": maxu / max(abs(s), 1e-300)})


def _power_mp(table: MomentTable, r: float, k_cap: int, max_term: float):
    """mpmath rung of the alternating series, for extreme cancellation."""
    import mpmath as mp

    from .coeffs import _build_mp_gamma
    params = table.params
    an = params.an
    dps = 30 + int(math.ceil(math.log10(max(max_term, 1.0))))
    gam = _build_mp_gamma(params, k_cap, dps=dps)
    with mp.workdps(dps):
        rho = mp.mpf(r) * mp.sqrt(params.n)
        man = mp.mpf(params.alpha) * params.n
        term = mp.mpf(1)
        total = gam[0] / man
        fact = mp.mpf(1)
        for k in range(1, k_cap + 1):
            term *= -rho
            fact *= k
            total += gam[k] / (man + k) * term / fact
        pref = mp.power(r, man) * mp.power(params.n, man / 2) / mp.gamma(man)
        value = float(pref * total)
        est = abs(value) * 10.0 ** (10 - dps) + float(
            pref * abs(gam[k_cap] / (man + k_cap) * term / fact))
    return value, est


def cdf_sumsq_mixture(table: MomentTable, r: float, cfg: Optional[EvalConfig] = None
                      ) -> SeriesResult:
    """Gamma-mixture form; certified error bound at lambda = sqrt(n)."""
    cfg = cfg or EvalConfig()
    if r < 0:
        raise DomainError("r must be >= 0")
    params = table.params
    an = params.an
    lam = resolve_lambda(table, cfg)
    if r == 0.0:
        return SeriesResult(0.0, 0.0, 0, "mixture", {"lambda": lam})
    if cfg.lambda_strategy == "sqrt_n":
        mw = sqrt_n_mixture_weights(table, abs_target=cfg.tol * 0.1,
                                    k_cap=min(cfg.max_k, table.K))
        K = mw.K
        glad = gamma_cdf_ladder(an, K + 1, np.array([lam * r]))[:, 0]
        value = float(np.dot(mw.weights, glad[: K + 1]))
        est = mw.deficit * float(glad[K + 1]) + mw.abs_err + (K + 1) * 1e-16
        return SeriesResult(_clamp(value), est, K + 1, "mixture",
                            {"lambda": lam, "deficit": mw.deficit,
                             "weights_precision": mw.precision})
    # generic lambda: no positivity certificate; noise-tracked differences
    K = min(table.K, max(32, int(4 * an) + 48))
    sm = scaled_moments(table, lam)
    ddm = table.dd_moments(min(K, table.K))
    # scaled moments in dd: gamma_k (sqrt(n)/lam)^(an+k)
    ratio = math.sqrt(params.n) / lam
    po_h, po_l = dd.from_float(1.0)
    base_h, base_l = dd.from_float(ratio)
    # (sqrt n / lam)^an via exp/log in float is enough for the common factor;
    # the k-varying part is the dd power ladder below
    common = math.exp(an * math.log(ratio))
    vh = np.empty(K + 1)
    vl = np.empty(K + 1)
    for k in range(K + 1):
        th, tl = dd.mul(ddm.gamma_hi[k], ddm.gamma_lo[k], po_h, po_l)
        th, tl = dd.mul_f(th, tl, common)
        vh[k], vl[k] = th, tl
        po_h, po_l = dd.mul(po_h, po_l, base_h, base_l)
    dw = diff_weights(sm, K, dd_values=(vh, vl))
    k = np.arange(K + 1, dtype=float)
    logC = np.cumsum(np.concatenate(([0.0], np.log((an + k[:-1]) / (k[:-1] + 1.0)))))
    w = np.exp(logC) * dw.values
    werr = np.exp(logC) * np.abs(dw.values) * dw.est_rel_err
    glad = gamma_cdf_ladder(an, K + 1, np.array([lam * r]))[:, 0]
    value = float(np.dot(w, glad[: K + 1]))
    deficit = abs(1.0 - float(np.sum(w)))
    est = deficit * float(glad[K + 1]) + float(np.sum(werr)) + (K + 1) * 1e-16
    return SeriesResult(_clamp(value), est, K + 1, "mixture",
                        {"lambda": lam, "deficit": deficit,
                         "weights_nonneg": bool(np.all(w >= -1e-15))})


# ---------------------------------------------------------------------------
# Legendre / Fourier representations
# ---------------------------------------------------------------------------

@dataclass
class LegendreCoeffs:
    """Coefficients of the shifted-Legendre expansion of the transform density.

    c[k] = (2k+1) n^(an/2)/Gamma(an) chat[k] with
    chat[k] = sum_j p*_{k,j} gamma_j / (an + j); `usable` marks entries whose
    estimated relative error stays below the 1e-6 alarm threshold.
    """

    chat: np.ndarray
    chat_err: np.ndarray
    usable: np.ndarray
    log_scale: float  # ln(n^(an/2)/Gamma(an))

    @property
    def values(self) -> np.ndarray:
        k = np.arange(self.chat.size, dtype=float)
        return (2.0 * k + 1.0) * self.chat * math.exp(self.log_scale)


def legendre_coeffs(table: MomentTable, cfg: Optional[EvalConfig] = None
                    ) -> LegendreCoeffs:
    """Coefficients of the moment functional against the exact integer
    shifted-Legendre table.

    Double-double accumulation first; if its worst-case cancellation
    estimate alarms (> 1e-6 relative) inside the requested order, the whole
    table is recomputed once from mpmath moments at a working precision
    sized to the (3+2 sqrt 2)^k conditioning of the moment map.
    """
    cfg = cfg or EvalConfig()
    kmax = cfg.legendre_kmax
    if kmax > 60:
        raise DomainError("legendre_kmax must be <= 60")
    params = table.params
    an = params.an
    ddm = table.dd_moments(kmax)
    p = shifted_legendre(kmax)
    th = np.empty(kmax + 1)
    tl = np.empty(kmax + 1)
    an_h, an_l = dd.from_float(an)
    for j in range(kmax + 1):
        dh, dl = dd.add_f(an_h, an_l, float(j))
        th[j], tl[j] = dd.div(ddm.gamma_hi[j], ddm.gamma_lo[j], dh, dl)
    chat = np.empty(kmax + 1)
    cerr = np.empty(kmax + 1)
    for k in range(kmax + 1):
        row = p[k]
        ph = np.empty(k + 1)
        pl = np.empty(k + 1)
        for j, pij in enumerate(row):
            h, l = dd.from_mpf(pij)
            ph[j], pl[j] = dd.mul(h, l, th[j], tl[j])
        s = math.fsum(ph)
        resid = math.fsum([-s] + ph.tolist()) + math.fsum(pl)
        chat[k] = s + resid
        # 3e-29: measured relative accuracy of the dd gamma pipeline
        cerr[k] = math.fsum(np.abs(ph)) * 3e-29
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(chat != 0.0, np.abs(cerr / chat), np.inf)
    usable = rel < 1e-6
    if not bool(np.all(usable)):
        chat, cerr, _ = _legendre_chat_mp(table, kmax, p)
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(chat != 0.0, np.abs(cerr / chat), np.inf)
        usable = rel < 1e-6
    log_scale = 0.5 * an * math.log(params.n) - log_gamma(an)
    return LegendreCoeffs(chat=chat, chat_err=cerr, usable=usable,
                          log_scale=log_scale)


def _legendre_chat_mp(table: MomentTable, kmax: int, p=None) -> tuple:
    """mpmath rung of the coefficient accumulation.

    The raw mpf values are cached on the table: the deep-cancellation
    re-summation needs them at full precision, not rounded to double.
    """
    import mpmath as mp

    from .coeffs import _build_mp_gamma
    cache = getattr(table, "_legendre_mp_chat", None)
    if cache is not None and cache[0] >= kmax:
        return cache[1][: kmax + 1], cache[2][: kmax + 1], cache[3][: kmax + 1]
    if p is None:
        p = shifted_legendre(kmax)
    dps = 40 + int(math.ceil(0.8 * kmax))
    gam = _build_mp_gamma(table.params, kmax, dps=dps)
    chat = np.empty(kmax + 1)
    cerr = np.empty(kmax + 1)
    chat_mp = []
    with mp.workdps(dps):
        man = mp.mpf(table.params.alpha) * table.params.n
        t = [gam[j] / (man + j) for j in range(kmax + 1)]
        ulp = mp.mpf(10) ** (3 - dps)
        for k in range(kmax + 1):
            terms = [p[k][j] * t[j] for j in range(k + 1)]
            v = mp.fsum(terms)
            chat_mp.append(v)
            chat[k] = float(v)
            cerr[k] = float(mp.fsum(abs(x) for x in terms) * ulp)
    table._legendre_mp_chat = (kmax, chat, cerr, chat_mp)
    return chat, cerr, chat_mp


def _legendre_cached(table: MomentTable, cfg: EvalConfig) -> LegendreCoeffs:
    cache = getattr(table, "_legendre_cache", None)
    if cache is None or cache[0] < cfg.legendre_kmax:
        lc = legendre_coeffs(table, cfg)
        object.__setattr__(table, "_legendre_cache", (cfg.legendre_kmax, lc))
        return lc
    return cache[1]


def cdf_sumsq_legendre(table: MomentTable, r: float,
                       cfg: Optional[EvalConfig] = None) -> SeriesResult:
    """H via the Legendre expansion contracted with scaled modified
    spherical Bessel values; the e^(-x) scaling folds the exponential
    prefactor exactly."""
    cfg = cfg or EvalConfig()
    if r <= 0:
        if r == 0.0:
            return SeriesResult(0.0, 0.0, 0, "legendre")
        raise DomainError("r must be >= 0")
    params = table.params
    an = params.an
    x = 0.5 * r * math.sqrt(params.n)
    # the Bessel cutoff sits near k ~ x: widen the coefficient window when
    # the evaluation point needs it (support caps at 60)
    need_k = min(60, max(cfg.legendre_kmax, int(math.ceil(x + 10.0 * x ** 0.62))))
    if need_k > cfg.legendre_kmax:
        cfg = EvalConfig(**{**cfg.__dict__, "legendre_kmax": need_k})
    lc = _legendre_cached(table, cfg)
    kmax = lc.chat.size - 1
    sk, _ = mod_sph_bessel_i_scaled(kmax, x)
    k = np.arange(kmax + 1, dtype=float)
    terms = np.where(np.arange(kmax + 1) % 2 == 0, 1.0, -1.0) \
        * (2.0 * k + 1.0) * lc.chat * sk
    terms_err = (2.0 * k + 1.0) * lc.chat_err * sk
    # drop the unreliable tail of the coefficient table
    last = int(np.max(np.nonzero(lc.usable)[0])) if np.any(lc.usable) else 0
    logpref = an * math.log(r) + lc.log_scale
    pref = math.exp(logpref)
    ssum = float(np.sum(terms[: last + 1]))
    value = pref * ssum
    # geometric fit of the last three retained magnitudes for the tail
    mags = np.abs(terms[max(0, last - 2): last + 1])
    if mags.size >= 2 and mags[-2] > 0 and mags[-1] > 0:
        q = min(0.9, mags[-1] / mags[-2])
        tail = mags[-1] * q / (1.0 - q)
    else:
        tail = float(mags[-1]) if mags.size else 0.0
    cancel_noise = pref * float(np.sum(np.abs(terms[: last + 1]))) * 2e-16
    est = pref * (tail + float(np.sum(terms_err[: last + 1]))) \
        + cancel_noise + abs(value) * 1e-14
    precision = "float"
    if cancel_noise > 0.25 * cfg.tol:
        # k-sum cancellation beyond double precision: mpmath re-summation
        value, est2 = _legendre_mp(table, lc, r, last, logpref)
        est = est2 + pref * tail
        precision = "mp"
    diag = {"kmax_used": last, "x": x, "precision": precision,
            "certified": min(an, float(params.n)) > 2.0}
    return SeriesResult(_clamp(value), est, last + 1, "legendre", diag)


def _legendre_mp(table: MomentTable, lc: LegendreCoeffs, r: float,
                 last: int, logpref: float):
    """mpmath rung of the Bessel-contracted sum for deep cancellation."""
    import mpmath as mp
    n = table.params.n
    kmax = lc.chat.size - 1
    _, cerr, chat_mp = _legendre_chat_mp(table, kmax)
    dps = 50 + int(math.ceil(max(logpref, 0.0) / math.log(10.0)))
    with mp.workdps(dps):
        xx = mp.mpf(r) * mp.sqrt(n) / 2
        scale = mp.sqrt(mp.pi / (2 * xx)) * mp.exp(-xx)
        tot = mp.mpf(0)
        errtot = mp.mpf(0)
        for k in range(last + 1):
            skk = scale * mp.besseli(k + mp.mpf(1) / 2, xx)
            tot += (-1) ** k * (2 * k + 1) * chat_mp[k] * skk
            errtot += (2 * k + 1) * mp.mpf(cerr[k]) * skk
        pref = mp.exp(mp.mpf(logpref))
        value = float(pref * tot)
        est = float(pref * errtot) + abs(value) * 1e-13
    return value, est


def fourier_coeffs(table: MomentTable, cfg: Optional[EvalConfig] = None
                   ) -> np.ndarray:
    """Sine-expansion coefficients b_m of the transform density, m = 1..mmax.

    b_m = (2/sqrt n) sum over k with m+k odd of
    (-1)^((m+k-1)/2) c_k j_k(m pi / 2).
    """
    cfg = cfg or EvalConfig()
    bhat, _ = _fourier_bhat(table, cfg)
    lc = _legendre_cached(table, cfg)
    return bhat * math.exp(lc.log_scale)


def _fourier_bhat(table: MomentTable, cfg: EvalConfig):
    """Scaled sine coefficients and their absolute error estimates.

    The error tracks both the noise of the retained Legendre coefficients
    and the omission of orders beyond the usable window.
    """
    cache = getattr(table, "_fourier_cache", None)
    if cache is not None and cache[0] >= cfg.fourier_mmax and \
            cache[1] >= cfg.legendre_kmax:
        return cache[2][: cfg.fourier_mmax], cache[3][: cfg.fourier_mmax]
    lc = _legendre_cached(table, cfg)
    last = int(np.max(np.nonzero(lc.usable)[0])) if np.any(lc.usable) else 0
    kk = np.arange(last + 1)
    coef = (2.0 * kk + 1.0) * lc.chat[: last + 1]
    coef_err = (2.0 * kk + 1.0) * lc.chat_err[: last + 1]
    omission = 3.0 * abs(coef[-1])
    sqn = math.sqrt(table.params.n)
    mmax = cfg.fourier_mmax
    bhat = np.zeros(mmax)
    berr = np.zeros(mmax)
    # below the turning point the downward (Miller) recurrence is required
    m_vec = int(min(mmax, math.ceil(2.0 * (last + 15) / math.pi)))
    for m in range(1, m_vec + 1):
        jk = sph_bessel_j(last, 0.5 * m * math.pi)
        sel = (m + kk) % 2 == 1
        signs = np.where(((m + kk[sel] - 1) // 2) % 2 == 0, 1.0, -1.0)
        bhat[m - 1] = 2.0 / sqn * float(np.sum(signs * coef[sel] * jk[sel]))
        berr[m - 1] = 2.0 / sqn * float(
            np.sum(coef_err[sel] * np.abs(jk[sel]))
            + omission * abs(jk[-1]))
    if m_vec < mmax:
        # x = m pi/2 > last + 15: upward recurrence, vectorized over m
        m = np.arange(m_vec + 1, mmax + 1)
        x = 0.5 * math.pi * m
        j_prev = np.sin(x) / x              # j_0
        j_cur = j_prev / x - np.cos(x) / x  # j_1
        acc = np.zeros(m.size)
        ace = np.zeros(m.size)
        jv = j_prev
        for k in range(last + 1):
            if k == 1:
                jv = j_cur
            elif k >= 2:
                j_prev, j_cur = j_cur, (2 * k - 1) / x * j_cur - j_prev
                jv = j_cur
            sel = (m + k) % 2 == 1
            signs = np.where(((m[sel] + k - 1) // 2) % 2 == 0, 1.0, -1.0)
            acc[sel] += signs * coef[k] * jv[sel]
            ace += coef_err[k] * np.abs(jv)
        ace += omission * np.abs(jv)
        bhat[m_vec:] = 2.0 / sqn * acc
        berr[m_vec:] = 2.0 / sqn * ace
    table._fourier_cache = (mmax, cfg.legendre_kmax, bhat, berr)
    return bhat, berr


def cdf_sumsq_fourier(table: MomentTable, r: float,
                      cfg: Optional[EvalConfig] = None) -> SeriesResult:
    """H via the sine expansion; targets ~1e-6, kept for cross-validation.

    For r beyond the central range the direct series cancels catastrophically
    (the x ~ 0 region of the transform density dominates), so there the
    x <= 1 part, where the density is exactly x^(an-1)/Gamma(an), is
    integrated in closed form and the sine series only covers [1, sqrt n]:

      H(r) = G_an(r) + r^an sum_m b_m int_1^(sqrt n) e^(-rx) sin(m pi x / sqrt n) dx.

    Coefficients are dropped once their error estimate dominates.
    """
    cfg = cfg or EvalConfig()
    if r < 0:
        raise DomainError("r must be >= 0")
    if r == 0.0:
        return SeriesResult(0.0, 0.0, 0, "fourier")
    params = table.params
    an = params.an
    n = params.n
    lc = _legendre_cached(table, cfg)
    bhat, berr = _fourier_bhat(table, cfg)
    # where the transform cancellation is deep, the leading coefficients must
    # be far better than the Legendre window can give: moment-series rung,
    # and the sum stops at its end (beyond it true terms are negligible
    # while the window route only returns artifacts)
    m_need = int(math.ceil(4.5 * r * math.sqrt(n) / math.pi)) + 12
    mp_rung = an * math.log(max(r, 1.0)) > 18.0 and m_need < 220
    if mp_rung:
        bst, bse = _fourier_bhat_mp(table, min(m_need, bhat.size))
        bhat = bhat.copy()
        berr = berr.copy()
        bhat[: bst.size] = bst
        berr[: bse.size] = bse
    bad = np.nonzero(np.abs(bhat) < 3.0 * berr)[0]
    mcut = max(8, int(bad[0]) if bad.size else bhat.size)
    bh = bhat[:mcut]
    be = berr[:mcut]
    m = np.arange(1, mcut + 1, dtype=float)
    sqn = math.sqrt(n)
    logpref = an * math.log(r) + lc.log_scale
    pref = math.exp(logpref)
    w = m * math.pi / sqn
    denom = r * r + w * w
    split = r >= 1.0
    if not split:
        damp = 1.0 - np.where(m.astype(int) % 2 == 0, 1.0, -1.0) * math.exp(-r * sqn)
        factors = (w / denom) * damp
        value = pref * float(np.sum(factors * bh))
    else:
        # int_1^(sqrt n) e^(-rx) sin(wx) dx =
        #   [e^(-rx) (-r sin(wx) - w cos(wx)) / (r^2+w^2)]_1^(sqrt n)
        e1 = math.exp(-r)
        esn = math.exp(-r * sqn)
        at_sn = -esn * w * np.where(m.astype(int) % 2 == 0, 1.0, -1.0)
        at_1 = e1 * (-r * np.sin(w) - w * np.cos(w))
        factors = (at_sn - at_1) / denom
        value = reg_gamma_cdf(an, r) + pref * float(np.sum(factors * bh))
    # coefficient noise folded through the quadrature factors, plus the
    # truncated-tail envelope |b| ~ c m^(-q) with fitted decay exponent
    noise = pref * float(np.sum(np.abs(factors) * be))
    mwin = max(1, mcut // 2)
    if mcut > 8:
        lm = np.log(m[mwin:])
        lb = np.log(np.maximum(np.abs(bh[mwin:]), 1e-300))
        q = -float(np.polyfit(lm, lb, 1)[0])
        q = min(4.0, max(1.2, q))
        env = float(np.median(np.abs(bh[mwin:]) * (m[mwin:] ** q)))
    else:
        q = 2.0
        env = float(np.max(np.abs(bh)))
    ftail = (math.exp(-r) if split else 1.0) * sqn / math.pi
    tail = pref * env * hurwitz_tail(q + 1.0, mcut) * ftail
    est = min(1.0, noise + 1.5 * tail + abs(value) * 1e-13)
    diag = {"mmax": mcut, "split": split,
            "certified": min(an, float(n)) > 2.0,
            "note": "slow-convergence representation"}
    return SeriesResult(_clamp(value), est, mcut, "fourier", diag)


def _fourier_bhat_mp(table: MomentTable, mmax: int):
    """Sine coefficients from the imaginary-axis moment series of the
    transform (their defining formula), in mpmath:

    bhat_m = (2/sqrt n) sum over odd k of
             gamma_k (-1)^((k-1)/2) (m pi)^k / (k! (an+k)).

    The largest term is ~e^(m pi), so the working precision scales with m.
    """
    import mpmath as mp

    from .coeffs import _build_mp_gamma
    cache = getattr(table, "_fourier_mp_cache", None)
    if cache is not None and cache[0] >= mmax:
        return cache[1][:mmax], cache[2][:mmax]
    n = table.params.n
    an = table.params.an

    def _kend(t: float) -> int:
        # suppress (t^k / k!) from e^t down to ~e^-45 past the peak
        return int(t + math.sqrt(2.0 * t * (t + 45.0)) + 25.0)

    kmax = _kend(mmax * math.pi)
    dps = 40 + int(math.ceil(1.3644 * mmax))
    gam = _build_mp_gamma(table.params, kmax, dps=dps)
    bhat = np.empty(mmax)
    berr = np.empty(mmax)
    with mp.workdps(dps):
        man = mp.mpf(table.params.alpha) * n
        two_sqn = 2 / mp.sqrt(n)
        for m in range(1, mmax + 1):
            mpi = m * mp.pi
            term = mpi  # (m pi)^k / k! at k = 1
            tot = gam[1] / (man + 1) * term
            sign = -1
            kend = min(_kend(m * math.pi), kmax)
            maxt = term
            for k in range(3, kend + 1, 2):
                term *= mpi * mpi / ((k - 1) * k)
                if term > maxt:
                    maxt = term
                tot += sign * gam[k] / (man + k) * term
                sign = -sign
            bhat[m - 1] = float(two_sqn * tot)
            berr[m - 1] = float(two_sqn * (maxt * mp.mpf(10) ** (4 - dps)
                                           + gam[kend] * term / (man + kend)))
    table._fourier_mp_cache = (mmax, bhat, berr)
    return bhat, berr


def cdf_u(table: MomentTable, u: float, cfg: Optional[EvalConfig] = None
          ) -> SeriesResult:
    """Cdf of U = sqrt(Z)/Y on [1/sqrt(n), 1], Legendre form; the Fourier
    form of the same cdf is reported in diagnostics."""
    cfg = cfg or EvalConfig()
    params = table.params
    n = params.n
    an = params.an
    lo = 1.0 / math.sqrt(n)
    if u < lo - 1e-12 or u > 1.0 + 1e-12:
        raise DomainError(f"u must lie in [{lo}, 1]")
    u = min(max(u, lo), 1.0)
    lc = _legendre_cached(table, cfg)
    last = int(np.max(np.nonzero(lc.usable)[0])) if np.any(lc.usable) else 0
    y = 1.0 / (math.sqrt(n) * u)
    # stable three-term recurrence for P*_k(y)
    pvals = np.empty(last + 1)
    pvals[0] = 1.0
    if last >= 1:
        z = 2.0 * y - 1.0
        pvals[1] = z
        for k in range(1, last):
            pvals[k + 1] = ((2 * k + 1) * z * pvals[k] - k * pvals[k - 1]) / (k + 1)
    kk = np.arange(last + 1, dtype=float)
    terms = (2.0 * kk + 1.0) * lc.chat[: last + 1] * pvals
    pref = u ** (an - 1.0) * math.exp(0.5 * (an - 1.0) * math.log(n))
    value = pref * float(np.sum(terms))
    # the coefficient envelope decays only algebraically; fit its exponent
    # for the truncation part of the estimate (|P*| <= 1 gives no help)
    env = (2.0 * kk + 1.0) * np.abs(lc.chat[: last + 1])
    half = max(2, last // 2)
    with np.errstate(divide="ignore"):
        qfit = -float(np.polyfit(np.log(kk[half:] + 1.0),
                                 np.log(np.maximum(env[half:], 1e-300)),
                                 1)[0])
    qfit = min(6.0, max(1.1, qfit))
    tail = float(np.median(env[half:] * (kk[half:] + 1.0) ** qfit)) \
        * hurwitz_tail(qfit, last)
    # Fourier form of the same cdf: the disagreement is a live error probe
    bhat, _ = _fourier_bhat(table, cfg)
    m = np.arange(1, bhat.size + 1, dtype=float)
    fpref = u ** (an - 1.0) * math.exp(0.5 * an * math.log(n))
    fval = fpref * float(np.sum(bhat * np.sin(m * math.pi * y)))
    est = pref * (tail + float(np.sum((2 * kk + 1) * lc.chat_err[: last + 1]))) \
        + 1.2 * abs(value - fval)
    return SeriesResult(_clamp(value), est, last + 1, "legendre",
                        {"fourier_value": _clamp(fval), "y": y})


def cdf_sumsq(params: ModelParams, r: float, cfg: Optional[EvalConfig] = None
              ) -> SeriesResult:
    """Dispatch on representation; auto prefers the power series and falls
    back to the certified mixture when cancellation would exceed budget."""
    cfg = cfg or EvalConfig()
    if r < 0:
        raise DomainError("r must be >= 0")
    rho = r * math.sqrt(params.n)
    k_need = _power_k_need(rho, cfg.max_k)
    K = max(k_need + 8, 280)
    table = get_table(params.alpha, params.n, min(K, 10_000))
    rep = cfg.representation
    if rep == "power":
        return cdf_sumsq_power(table, r, cfg)
    if rep == "mixture":
        return cdf_sumsq_mixture(table, r, cfg)
    if rep == "legendre":
        return cdf_sumsq_legendre(table, r, cfg)
    if rep == "fourier":
        return cdf_sumsq_fourier(table, r, cfg)
    # auto: skip the power attempt when its largest term must breach budget
    if rho - 0.5 * math.log(max(rho, 1.0)) > math.log(1e12 / cfg.tol):
        res = cdf_sumsq_mixture(table, r, cfg)
        res.diagnostics["auto_choice"] = "mixture"
        res.diagnostics["auto_reason"] = "cancellation precheck"
        return res
    try:
        res = cdf_sumsq_power(table, r, cfg)
        res.diagnostics["auto_choice"] = "power"
        return res
    except CancellationAlarm:
        res = cdf_sumsq_mixture(table, r, cfg)
        res.diagnostics["auto_choice"] = "mixture"
        res.diagnostics["auto_reason"] = "power cancellation alarm"
        return res


def cdf_sumsq_grid(params: ModelParams, r: np.ndarray,
                   cfg: Optional[EvalConfig] = None) -> np.ndarray:
    """Vectorized H over a grid via the certified sqrt(n) mixture
    (one gamma ladder, one weight vector); used by the verification suite."""
    cfg = cfg or EvalConfig()
    r = np.asarray(r, dtype=float)
    table = get_table(params.alpha, params.n, 280)
    mw = sqrt_n_mixture_weights(table, abs_target=cfg.tol * 0.1,
                                k_cap=min(cfg.max_k, table.K))
    lam = math.sqrt(params.n)
    glad = gamma_cdf_ladder(params.an, mw.K, lam * r)
    return np.clip(mw.weights @ glad, 0.0, 1.0)
