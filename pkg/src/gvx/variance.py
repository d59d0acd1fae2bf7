"""Cdf of the sample variance S^2 for i.i.d. gamma(alpha) samples.

Pr{(n-1) S^2 <= z = r^2} is a Taylor expansion around the sum-of-squares
cdf with outer terms decaying like j^(-(n+1)/2):

  series   (r^an / Gamma(an)) sum_j n^-j
           sum_k C((an+k)/2+j-1, j) mu_{2j+k}/(an+k) (-r)^k/k!
  mixture  sum_j (lambda^2/n)^j sum_k delta_{j,k,lambda}
           C(an+k-1, k) G_{an+k}(lambda r)

with delta the k-th alternating differences of
C((an+l)/2+j-1, j) mu_{2j+l} / lambda^(an+2j+l). The mixture weights are
collapsed over j into one weight per gamma order, so a whole grid costs a
single gamma-function ladder.

For integer alpha a third route goes through the polynomial angle cdf:
truncated cotangent-moment series plus closed-form boundary terms (the
tail integral reduces term by term to upper incomplete gammas).
"""

from __future__ import annotations

import math
from typing import Optional, Tuple

import numpy as np

from . import dd
from ._series import (close_outer_sum, fit_outer_tail, inner_power_sums,
                      inner_power_sums_float)
from .angle import AngleCoefficients, mbar_dd, solve_angle_coeffs, tan_cdf
from .coeffs import ModelParams, MomentTable, get_table
from .errors import BudgetExceeded, CancellationAlarm, DomainError
from .specfun import gamma_cdf_ladder, log_gamma, reg_gamma_cdf, \
    upper_gamma_ratio
from .sumsq import EvalConfig, SeriesResult, _clamp

_DD_BUDGET = 1500


def _outer_p(n: int) -> float:
    return 0.5 * (n + 1)


def _j_budget(params: ModelParams, cfg: EvalConfig) -> int:
    return min(cfg.max_j,
               max(48, int((1.0 / cfg.tol) ** (2.0 / (params.n + 1))) + 40))


def _series_table_need(params: ModelParams, r: float, cfg: EvalConfig) -> int:
    """Moment order the double series may consume (outer window widens the
    inner one like rho * sqrt(1 + 2 j / an))."""
    jb = _j_budget(params, cfg)
    rho = r * math.sqrt(params.n)
    rho_eff = rho * math.sqrt(1.0 + 2.0 * jb / params.an)
    k_cap = min(cfg.max_k, int(rho_eff + 12.0 * math.sqrt(rho_eff + 1.0) + 40.0))
    return 2 * jb + k_cap + 8


def _log_prefactor(table: MomentTable, r: float, j: int) -> float:
    an = table.params.an
    lc = (log_gamma(0.5 * an + j) - log_gamma(0.5 * an)
          - log_gamma(j + 1.0)) if j else 0.0
    return (lc + table.log_mu[2 * j] - math.log(an)
            - j * math.log(table.params.n) + an * math.log(r) - log_gamma(an))


def svar_cdf_series(table: MomentTable, z: float,
                    cfg: Optional[EvalConfig] = None) -> SeriesResult:
    """Double-series route; outer tail fitted against j^(-(n+1)/2) and
    corrected by its integrated model."""
    cfg = cfg or EvalConfig()
    params = table.params
    params.require_variance()
    if z < 0:
        raise DomainError("z must be >= 0")
    if z == 0.0:
        return SeriesResult(0.0, 0.0, 0, "series")
    n = params.n
    an = params.an
    r = math.sqrt(z)
    rho = r * math.sqrt(n)
    p = _outer_p(n)

    taus = []
    noises = []
    tails = []
    terms_used = 0
    batch = 48
    j0 = 0
    while j0 < cfg.max_j:
        j_arr = np.arange(j0, min(j0 + batch, cfg.max_j))
        rho_eff = rho * math.sqrt(1.0 + 2.0 * j_arr[-1] / an)
        k_cap = min(cfg.max_k,
                    int(rho_eff + 12.0 * math.sqrt(rho_eff + 1.0) + 40.0))
        need = 2 * int(j_arr[-1]) + k_cap + 1
        if need > _DD_BUDGET:
            # beyond the double-double window degraded inner sums would only
            # pollute the tail fit; close from the clean prefix instead
            break
        if table.K < need:
            table = get_table(params.alpha, params.n, int(1.3 * need) + 8)
        pref = np.array([_log_prefactor(table, r, int(j)) for j in j_arr])
        pref = np.exp(pref)
        stop_abs = cfg.tol * 1e-2 / np.maximum(pref, 1e-320) / 50.0
        inner = inner_power_sums(table, r, j_arr, k_cap, stop_abs)
        tau = pref * inner.value
        noise_abs = pref * inner.noise
        taus.extend(tau.tolist())
        noises.extend(noise_abs.tolist())
        tails.extend((pref * inner.tail).tolist())
        terms_used += int(np.sum(inner.terms))
        j0 += batch
        # enough to close? cheap preview on what we have
        if np.any(np.abs(tau) < 4.0 * noise_abs):
            break  # inner noise has caught up; the closer cuts and fits
        mtau = float(np.max(np.abs(tau)))
        if mtau * (j0 + 1) / max(p - 1.0, 0.25) < 0.3 * cfg.tol:
            break
    total, err, used = close_outer_sum(np.array(taus), np.array(noises), p,
                                       cfg.tol)
    err += float(np.sum(np.array(tails)[:max(used, 1)]))
    if err > max(10.0 * cfg.tol, 5e-9) and used < min(cfg.max_j, 4 * used + 64):
        # extend the clean window past the double-double noise floor with
        # exact mpmath inner sums, then re-close
        ext = _inner_mp_extend(table, r, used, min(cfg.max_j, 2 * used + 48),
                               rho)
        if ext is not None:
            taus = np.array(list(np.array(taus)[:used]) + list(ext))
            noises = np.array(list(np.array(noises)[:used])
                              + [1e-30 * max(abs(t), 1e-200) for t in ext])
            total, err, used = close_outer_sum(taus, noises, p, cfg.tol)
            err += float(np.sum(np.array(tails)[:max(used, 1)]))
    if err > max(1e3 * cfg.tol, 2e-3):
        raise BudgetExceeded(
            f"outer tail did not close (bound {err:.1e}); raise max_j "
            "(slow decay for small n)")
    value = total
    est = err + abs(value) * 1e-14
    return SeriesResult(_clamp(value), est, terms_used, "series",
                        {"j_used": used, "rho": rho})


# ---------------------------------------------------------------------------
# mixture route
# ---------------------------------------------------------------------------

def _inner_mp_extend(table: MomentTable, r: float, j0: int, j1: int,
                     rho: float):
    """Outer contributions for j in [j0, j1) by exact mpmath inner sums."""
    import mpmath as mp

    from .coeffs import _build_mp_gamma
    params = table.params
    an = params.an
    rho_eff = rho * math.sqrt(1.0 + 2.0 * j1 / an)
    k_cap = int(rho_eff + 12.0 * math.sqrt(rho_eff + 1.0) + 30.0)
    depth = 2 * j1 + k_cap + 2
    if depth > 4000:
        return None
    dps = 40 + int(math.ceil(rho_eff / math.log(10.0)))
    gam = _build_mp_gamma(params, depth, dps=dps)
    out = []
    with mp.workdps(dps):
        man = mp.mpf(params.alpha) * params.n
        mrho = mp.mpf(rho)
        for j in range(j0, j1):
            # C((an+k)/2+j-1, j) relative to k = 0, via the two stride-2
            # rational chains Gamma(x+j)/Gamma(x) at x = (an+k)/2
            rel = [mp.mpf(1),
                   (mp.gamma((man + 1) / 2 + j) * mp.gamma(man / 2))
                   / (mp.gamma((man + 1) / 2) * mp.gamma(man / 2 + j))]
            tot = mp.mpf(0)
            term = mp.mpf(1)
            prev = mp.inf
            for k in range(k_cap + 1):
                if k:
                    term *= -mrho / k
                t = rel[k % 2] * gam[2 * j + k] / (man + k) * term
                tot += t
                mag = abs(t)
                if mag < prev and mag < mp.mpf(1e-30) * max(abs(tot), mp.mpf(1e-280)):
                    break
                prev = mag
                rel[k % 2] *= ((man + k) / 2 + j) / ((man + k) / 2)
            pref = mrho ** man / mp.gamma(man) / mp.power(params.n, j) \
                * mp.gamma(man / 2 + j) / (mp.gamma(man / 2) * mp.factorial(j))
            out.append(float(pref * tot))
    return out


def _svar_mixture_rows(table: MomentTable, cfg: EvalConfig, lam: float,
                       k_need: int = 0
                       ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, dict]:
    """Per-outer-index mixture weight rows.

    Row j holds (lambda^2/n)^j delta_{j,k,lambda} C(an+k-1, k) for
    k = 0..K. The inner k-sum must run before the outer one: the column
    sums over j alone diverge for small k (they would rebuild cotangent
    moments that do not exist). Built in mpmath: the difference tables
    cancel ~2^K deep against binomially growing inputs. Cached on the table.

    Returns (rows, row_err, row_tail, diag): rows of shape (J, K+1), the
    noise bound per row, and the per-row k-truncation bound.
    """
    import mpmath as mp

    from .coeffs import _build_mp_gamma
    params = table.params
    n = params.n
    an = params.an
    p = _outer_p(n)
    K = max(24, int(3.0 * an) + 40, k_need)
    cache = getattr(table, "_svar_weight_cache", None)
    ckey = (round(math.log10(cfg.tol), 2), round(lam, 12))
    if cache is not None and ckey in cache and cache[ckey][0].shape[1] >= K + 1:
        return cache[ckey]
    j_budget = min(_j_budget(params, cfg), 240)
    logvmax = (log_gamma(0.5 * (an + K) + j_budget)
               - log_gamma(0.5 * (an + K)) - log_gamma(j_budget + 1.0)) \
        / math.log(10.0)
    dps = 44 + int(math.ceil(0.302 * K + max(logvmax, 0.0)))
    gam = _build_mp_gamma(params, 2 * j_budget + K, dps=dps)
    rows = []
    errs = []
    jlast = 0
    stopped = False
    with mp.workdps(dps):
        man = mp.mpf(params.alpha) * n
        mratio = mp.sqrt(n) / mp.mpf(lam)
        geo_f = mp.mpf(lam) ** 2 / n
        ulp = mp.mpf(10) ** (3 - dps)
        geo = mp.mpf(1)
        logC = np.cumsum(np.concatenate(
            ([0.0],
             np.log((an + np.arange(K, dtype=float)) / (np.arange(K) + 1.0)))))
        Cf = np.exp(logC)
        for j in range(j_budget):
            if j:
                cfac = [mp.gamma((man + l) / 2 + j)
                        / (mp.gamma((man + l) / 2) * mp.factorial(j))
                        for l in range(K + 1)]
            else:
                cfac = [mp.mpf(1)] * (K + 1)
            if lam != math.sqrt(n):
                v = [cfac[l] * gam[2 * j + l] * mratio ** (man + 2 * j + l)
                     for l in range(K + 1)]
            else:
                v = [cfac[l] * gam[2 * j + l] for l in range(K + 1)]
            vmax = max(v)
            delta = np.empty(K + 1)
            delta[0] = float(geo * v[0])
            cur = v
            for m in range(1, K + 1):
                cur = [cur[i] - cur[i + 1] for i in range(len(cur) - 1)]
                delta[m] = float(geo * cur[0])
            row = Cf * delta
            err = float(geo * vmax * ulp) * (2.0 ** np.arange(K + 1)) * Cf
            rows.append(row)
            errs.append(float(np.sum(err)))
            jlast = j
            geo *= geo_f
            # outer terms are bounded by the row l1 norms; stop when the
            # fitted tail of those norms is negligible
            if j >= 12 and (j + 1) % 8 == 0:
                norms = np.array([float(np.sum(np.abs(rr))) for rr in rows[-8:]])
                env = float(np.max(norms[-3:]))
                if env * (jlast + 1) / (p - 1.0) < 0.05 * cfg.tol:
                    stopped = True
                    break
    rows = np.array(rows)
    errs = np.array(errs)
    # k-window closure: the infinite rows sum to 1 (j = 0) and 0 (j >= 1),
    # so the magnitude of the truncated row sums measures the missing mass
    row_tail = np.abs(np.sum(rows, axis=1)
                      - np.concatenate(([1.0], np.zeros(rows.shape[0] - 1))))
    diag = {"j_used": jlast + 1, "K": K, "stopped": stopped, "dps": dps}
    out = (rows, errs, row_tail, diag)
    if cache is None:
        cache = {}
        table._svar_weight_cache = cache
    cache[ckey] = out
    return out


def _svar_mixture_eval(table: MomentTable, z: np.ndarray, cfg: EvalConfig,
                       lam: float) -> Tuple[np.ndarray, np.ndarray, dict]:
    """Evaluate the mixture at a vector of z values; inner k-sum per outer
    index, then the outer sum with a fitted power-law tail correction."""
    params = table.params
    n = params.n
    an = params.an
    p = _outer_p(n)
    r = np.sqrt(np.maximum(np.asarray(z, dtype=float), 0.0))
    # the k-window must reach past the largest requested lambda r, where
    # the remaining gamma factors have died off
    lr = float(np.max(lam * r))
    k_need = int(max(0.0, lr - an) + 12.0 * math.sqrt(lr + 1.0) + 16.0)
    k_need = 32 * ((k_need + 31) // 32)  # bucket for cache stability
    rows, errs, row_tail, diag = _svar_mixture_rows(table, cfg, lam, k_need)
    J, K1 = rows.shape
    glad = gamma_cdf_ladder(an, K1 - 1, lam * r)  # (K1, npts)
    tau = rows @ glad  # (J, npts)
    # the contraction against the gamma ladder cancels ever deeper with j,
    # and the fixed k-window stops closing as j grows (the weight mass
    # migrates to higher k, invisible from inside the window; the row-sum
    # identity measures it); both effects feed the noise channel so the
    # shared closer cuts there and fits the tail
    # the row-sum residual row_tail carries both the k-truncation miss and
    # the double-rounding floor of the stored rows; both pollute tau at the
    # same scale
    noise = np.abs(rows) @ glad * 1e-16 + errs[:, None] \
        + row_tail[:, None]
    # the weight mass of row j peaks near k ~ lambda r sqrt(1 + 2j/an);
    # once that passes the k-window the truncated row is unusable, with no
    # reliable local signal, so cap the usable outer index per point
    with np.errstate(divide="ignore"):
        jmax = 0.5 * an * np.where(r > 0, (float(K1 - 1) / (lam * np.maximum(r, 1e-300))) ** 2 - 1.0, np.inf)
    jmax = np.maximum(0.8 * jmax, 8.0)
    jj = np.arange(J, dtype=float)[:, None]
    noise = np.where(jj > jmax[None, :], noise + np.abs(tau) + 1e-290, noise)
    total = np.empty(r.size)
    est = np.empty(r.size)
    for i in range(r.size):
        tot, ee, _ = close_outer_sum(tau[:, i], noise[:, i], p, cfg.tol)
        total[i] = tot
        est[i] = ee
    diag = dict(diag)
    diag["lambda"] = lam
    return np.clip(total, 0.0, 1.0), est, diag


def svar_cdf_mixture(table: MomentTable, z: float,
                     cfg: Optional[EvalConfig] = None) -> SeriesResult:
    """Mixture route: per-outer-index weight rows against one gamma ladder."""
    cfg = cfg or EvalConfig()
    params = table.params
    params.require_variance()
    if z < 0:
        raise DomainError("z must be >= 0")
    if z == 0.0:
        return SeriesResult(0.0, 0.0, 0, "mixture")
    from .sumsq import resolve_lambda
    lam = resolve_lambda(table, cfg)
    vals, est, diag = _svar_mixture_eval(table, np.array([z]), cfg, lam)
    return SeriesResult(float(vals[0]), float(est[0]),
                        diag["j_used"] * diag["K"], "mixture", diag)


def svar_cdf_grid(params: ModelParams, z: np.ndarray,
                  cfg: Optional[EvalConfig] = None) -> np.ndarray:
    """Vectorized mixture evaluation over a grid of z values (one weight
    matrix sized for the largest point, one gamma ladder)."""
    cfg = cfg or EvalConfig()
    params.require_variance()
    table = get_table(params.alpha, params.n, 320)
    vals, _, _ = _svar_mixture_eval(table, np.asarray(z, dtype=float), cfg,
                                    math.sqrt(params.n))
    return vals


# ---------------------------------------------------------------------------
# integer-alpha route
# ---------------------------------------------------------------------------

def _boundary_terms(coeffs: AngleCoefficients, r: float) -> float:
    """W(phi_n end) G_an(r sqrt(n(n-1))) plus the tail integral, the latter
    reduced analytically to upper incomplete gammas."""
    params = coeffs.params
    alpha = int(round(params.alpha))
    n = params.n
    an = params.an
    c = r * math.sqrt(n * (n - 1.0))
    term1 = coeffs.W_at_phi_n * reg_gamma_cdf(an, c)
    # tail: P/Gamma(an) sum_j a_2j (r sqrt n)^(n-1+2j)
    #       Gamma_up((alpha-1)n - 2j + 1, c) / (n-1+2j)
    logP = (log_gamma(an) - n * log_gamma(float(alpha))
            - 0.5 * an * math.log(n)) - log_gamma(an)
    lrn = math.log(r * math.sqrt(n))
    tot = 0.0
    for j in range(coeffs.N + 1):
        s = (alpha - 1) * n - 2 * j + 1
        q = upper_gamma_ratio(float(s), c)
        aj = coeffs.a[j]
        if q == 0.0 or aj == 0.0:
            continue
        lt = logP + (n - 1 + 2 * j) * lrn + log_gamma(float(s)) \
            + math.log(q) + math.log(abs(aj)) - math.log(n - 1.0 + 2 * j)
        tot += math.copysign(math.exp(lt), aj)
    return term1 + tot


def _boundary_alpha1(params: ModelParams, r: float) -> float:
    """Closed form of both boundary terms for alpha = 1:
    (n-1)!/(sqrt n (n(n-1))^((n-1)/2)) b_{n-1} G_{n-1}(r sqrt(n(n-1)))."""
    n = params.n
    c = r * math.sqrt(n * (n - 1.0))
    logb = 0.5 * (n - 1) * math.log(math.pi) - log_gamma(0.5 * (n + 1))
    lt = (log_gamma(float(n)) - 0.5 * math.log(n)
          - 0.5 * (n - 1) * math.log(n * (n - 1.0)) + logb)
    return math.exp(lt) * reg_gamma_cdf(n - 1.0, c)


def svar_cdf_integer_alpha(coeffs: AngleCoefficients, table: MomentTable,
                           gbar: Optional[np.ndarray],
                           Mbar: Optional[np.ndarray], r: float,
                           cfg: Optional[EvalConfig] = None) -> SeriesResult:
    """Truncated-moment route: alternating series + boundary terms; the
    mixture form with certified-positive weights is reported in diagnostics.

    Takes r with Pr{sqrt(n-1) S <= r}.
    """
    cfg = cfg or EvalConfig()
    params = coeffs.params
    n = params.n
    an = params.an
    if r < 0:
        raise DomainError("r must be >= 0")
    if r == 0.0:
        return SeriesResult(0.0, 0.0, 0, "thm-int")
    rho = r * math.sqrt(n)
    if n == 2:
        series = 0.0
        sn = 0.0
        terms = 0
    else:
        # the truncated cotangent moments grow like (n-1)^(k/2), so the
        # series scale is rho sqrt(n-1) = r sqrt(n(n-1)); summed in mpmath
        # at a precision sized to that depth
        rho_eff = rho * math.sqrt(n - 1.0)
        k_cap = min(cfg.max_k,
                    int(rho_eff + 12.0 * math.sqrt(rho_eff + 1.0) + 40.0))
        series, sn, terms = _thm_int_series_mp(coeffs, rho, k_cap)
    boundary = _boundary_terms(coeffs, r)
    value = series + boundary
    est = sn + abs(value) * 1e-13 + 2e-15
    diag = {"series_part": series, "boundary_part": boundary,
            "terms": terms}
    if int(round(params.alpha)) == 1:
        b1 = _boundary_alpha1(params, r)
        diag["boundary_closed_form"] = b1
        if abs(b1 - boundary) > 1e-12 * max(abs(boundary), 1e-6):
            raise CancellationAlarm(
                "alpha=1 boundary closed form disagrees with the general path")
    # mixture form (certified-positive weights at lambda = sqrt(n(n-1)))
    if n > 2:
        diag["mixture_form"] = _thm_int_mixture(coeffs, r, cfg)
    return SeriesResult(_clamp(value), est, terms, "thm-int", diag)


def _mbar_cached(coeffs: AngleCoefficients, kmax: int):
    cache = getattr(coeffs, "_mbar_dd", None)
    if cache is None or cache[0] < kmax:
        hi, lo = mbar_dd(coeffs, kmax)
        cache = (kmax, hi, lo)
        coeffs._mbar_dd = cache
    return cache[1], cache[2]


def _thm_int_series_mp(coeffs: AngleCoefficients, rho: float, k_cap: int):
    """(rho^an / Gamma(an)) sum_k Mbar_k/(an+k) (-rho)^k / k! in mpmath."""
    import mpmath as mp

    from .angle import mbar_mp
    params = coeffs.params
    rho_eff = rho * math.sqrt(params.n - 1.0)
    depth_digits = int(math.ceil(rho_eff / math.log(10.0)))
    mbar, mbar_err = mbar_mp(coeffs, k_cap, extra_digits=depth_digits + 20)
    dps = 40 + depth_digits
    with mp.workdps(dps):
        man = mp.mpf(params.alpha) * params.n
        mrho = mp.mpf(rho)
        term = mp.mpf(1)
        fact = mp.mpf(1)
        tot = mbar[0] / man
        noise = mbar_err[0] / man
        maxt = abs(tot)
        prev = mp.inf
        terms = 1
        t = tot
        for k in range(1, k_cap + 1):
            term *= -mrho
            fact *= k
            w = term / fact / (man + k)
            t = mbar[k] * w
            tot += t
            noise += mbar_err[k] * abs(w)
            terms += 1
            mag = abs(t)
            if mag > maxt:
                maxt = mag
            if mag < prev and mag < mp.mpf(1e-30) * max(abs(tot), mp.mpf(1e-300)):
                break
            prev = mag
        tail = abs(t)
        pref = mrho ** man / mp.gamma(man)
        series = float(pref * tot)
        sn = float(pref * maxt) * 10.0 ** (-depth_digits - 14) \
            + float(pref * (tail + noise))
    return series, sn, terms


def _thm_int_mixture(coeffs: AngleCoefficients, r: float, cfg: EvalConfig
                     ) -> dict:
    """Mixture form of the truncated-moment series; weights from the k-th
    differences of Mbar_l (n-1)^(-(an+l)/2) are nonnegative."""
    params = coeffs.params
    n = params.n
    an = params.an
    lam = math.sqrt(n * (n - 1.0))
    K = max(24, int(2 * an) + 24)
    mh, ml = _mbar_cached(coeffs, K)
    ratio = 1.0 / math.sqrt(n - 1.0)
    vh = np.empty(K + 1)
    vl = np.empty(K + 1)
    ph, pl = dd.from_float(ratio ** an if an < 300 else 0.0)
    # (n-1)^(-an/2) can underflow for large an; fall back to logs then
    if ph == 0.0:
        lr = math.exp(an * math.log(ratio))
        ph, pl = dd.from_float(lr)
    for l in range(K + 1):
        vh[l], vl[l] = dd.mul(mh[l], ml[l], ph, pl)
        ph, pl = dd.mul_f(ph, pl, ratio)
    delta = np.empty(K + 1)
    derr = np.abs(vh) * 1e-28
    dh, dl = vh, vl
    delta[0] = dh[0] + dl[0]
    err0 = derr[0]
    errs = np.empty(K + 1)
    errs[0] = err0
    for m in range(1, K + 1):
        dh, dl = dd.vsub(dh[:-1], dl[:-1], dh[1:], dl[1:])
        derr = derr[:-1] + derr[1:] + np.abs(dh) * 1e-31
        delta[m] = dh[0] + dl[0]
        errs[m] = derr[0]
    k = np.arange(K, dtype=float)
    logC = np.cumsum(np.concatenate(([0.0], np.log((an + k) / (k + 1.0)))))
    w = np.exp(logC) * delta
    werr = np.exp(logC) * errs
    target = 1.0 - coeffs.W_at_phi_n
    glad = gamma_cdf_ladder(an, K, np.array([lam * r]))[:, 0]
    val = float(np.dot(w, glad))
    deficit = target - float(np.sum(w))
    return {"value": val, "weights_nonneg": bool(np.all(w >= -1e-12)),
            "deficit": float(deficit), "noise": float(np.sum(werr)),
            "lambda": lam}


def svar_cdf(params: ModelParams, s2: float,
             cfg: Optional[EvalConfig] = None,
             method: str = "auto") -> SeriesResult:
    """Public dispatcher; takes the S^2 threshold (z = (n-1) s2, r = sqrt z).

    method: auto | thm41 | thm42. auto runs the double series when its
    cancellation precheck passes, else the mixture; thm42 picks the
    integer-alpha truncated-moment route.
    """
    cfg = cfg or EvalConfig()
    params.require_variance()
    if s2 < 0:
        raise DomainError("the S^2 threshold must be >= 0")
    z = (params.n - 1.0) * s2
    r = math.sqrt(z)
    if method not in ("auto", "thm41", "thm42"):
        raise DomainError(f"unknown method {method!r}")
    if method == "thm42":
        coeffs = _angle_cached(params)
        table = get_table(params.alpha, params.n, 320)
        res = svar_cdf_integer_alpha(coeffs, table, None, None, r, cfg)
        res.diagnostics["method"] = "thm42"
        return res
    rho = r * math.sqrt(params.n)
    table = get_table(params.alpha, params.n,
                      max(min(_series_table_need(params, r, cfg), 10_000), 320))
    # cancellation precheck mirrors the sum-of-squares dispatcher
    if rho - 0.5 * math.log(max(rho, 1.0)) > math.log(1e12 / cfg.tol):
        res = svar_cdf_mixture(table, z, cfg)
        res.diagnostics["route"] = "mixture"
        return res
    try:
        res = svar_cdf_series(table, z, cfg)
        res.diagnostics["route"] = "series"
        return res
    except CancellationAlarm:
        res = svar_cdf_mixture(table, z, cfg)
        res.diagnostics["route"] = "mixture (series alarm)"
        return res


_angle_cache: dict = {}


def _angle_cached(params: ModelParams) -> AngleCoefficients:
    key = (int(round(params.alpha)), params.n)
    co = _angle_cache.get(key)
    if co is None:
        co = solve_angle_coeffs(params)
        _angle_cache[key] = co
    return co


def svar_cdf_grid_thm42(params: ModelParams, z: np.ndarray,
                        cfg: Optional[EvalConfig] = None) -> np.ndarray:
    """Vectorized integer-alpha route over a grid of z = (n-1) s^2 values."""
    cfg = cfg or EvalConfig()
    params.require_variance()
    z = np.asarray(z, dtype=float)
    n = params.n
    an = params.an
    alpha = int(round(params.alpha))
    coeffs = _angle_cached(params)
    r = np.sqrt(np.maximum(z, 0.0))
    rho = r * math.sqrt(n)
    out = np.zeros_like(r)
    if n > 2:
        from .angle import mbar_mp
        rho_eff = float(np.max(rho)) * math.sqrt(n - 1.0)
        if rho_eff > 28.0:
            raise DomainError(
                "grid route is float-limited to r sqrt(n(n-1)) <= 28; "
                "use svar_cdf pointwise instead")
        k_cap = min(cfg.max_k,
                    int(rho_eff + 12.0 * math.sqrt(rho_eff + 1.0) + 40.0))
        # the summation below is double precision, so ~22 digits of Mbar
        # headroom saturate what the floats can use
        vals, _ = mbar_mp(coeffs, k_cap, extra_digits=22)
        mbar = np.array([float(v) for v in vals])
        # compensated vectorized alternating sum
        term = np.ones_like(rho) / an
        tot = mbar[0] * term.copy()
        comp = np.zeros_like(rho)
        for k in range(1, k_cap + 1):
            term = term * (-rho) / k * (an + k - 1.0) / (an + k)
            y = mbar[k] * term - comp
            t = tot + y
            comp = (t - tot) - y
            tot = t
        with np.errstate(divide="ignore"):
            logpref = np.where(rho > 0, an * np.log(rho), -np.inf) - log_gamma(an)
        out += np.exp(logpref) * tot
    # boundary terms
    c = r * math.sqrt(n * (n - 1.0))
    g_an = np.array([reg_gamma_cdf(an, ci) if ci > 0 else 0.0 for ci in c])
    out += coeffs.W_at_phi_n * g_an
    logP = -n * log_gamma(float(alpha)) - 0.5 * an * math.log(n)
    with np.errstate(divide="ignore"):
        lrn = np.where(r > 0, np.log(r * math.sqrt(n)), -np.inf)
    smin = (alpha - 1) * n - 2 * coeffs.N + 1
    smax = (alpha - 1) * n + 1
    # upper gamma ratios by the stable forward ladder Q(s+1) = Q(s) + pdf term
    qs = {}
    qcur = np.array([upper_gamma_ratio(float(smin), ci) if ci > 0 else 1.0
                     for ci in c])
    qs[smin] = qcur.copy()
    with np.errstate(divide="ignore", invalid="ignore"):
        logc_arr = np.where(c > 0, np.log(c), -np.inf)
    for s in range(smin, smax):
        add = np.exp(s * logc_arr - c - log_gamma(s + 1.0))
        qcur = qcur + add
        qs[s + 1] = qcur.copy()
    for j in range(coeffs.N + 1):
        s = (alpha - 1) * n - 2 * j + 1
        aj = coeffs.a[j]
        if aj == 0.0:
            continue
        lt = logP + (n - 1 + 2 * j) * lrn + log_gamma(float(s)) \
            + math.log(abs(aj)) - math.log(n - 1.0 + 2 * j)
        out += math.copysign(1.0, aj) * np.exp(lt) * qs[s]
    return np.clip(out, 0.0, 1.0)
