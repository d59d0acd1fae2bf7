"""Shared double-double engine for the alternating power series.

Both the sum-of-squares cdf and the sample-variance double series reduce to
inner sums of the form

    S_j = sum_k  C((an+k)/2 + j - 1, j) mu_{2j+k} / (an+k) (-r)^k / k!

normalized by their k = 0 term. Terms are generated by a ratio recurrence
whose factors come from the table's double-double gamma ratio chains, so
each term carries ~1e-31 relative noise; the alternating cancellation
(depth ~ e^(r sqrt n)) is then harmless up to r sqrt(n) ~ 60.

The generalized binomial ratio collapses to a ratio of entries of the chain
g[k] = Gamma((an+k)/2) / Gamma((an+k+1)/2):

    C((an+k+1)/2+j-1, j) / C((an+k)/2+j-1, j) = g[k] / g[k+2j].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import dd
from .coeffs import MomentTable
from .specfun import log_gamma


@dataclass
class InnerSums:
    """Normalized inner sums over a batch of outer indices j."""

    value: np.ndarray      # S_j, sum of U_k with U_0 = 1
    max_abs: np.ndarray    # max_k |U_k|
    tail: np.ndarray       # |first omitted term|
    terms: np.ndarray      # number of terms used per j
    noise: np.ndarray      # accumulated rounding noise estimate (same units)


def inner_power_sums(table: MomentTable, r: float, j_arr: np.ndarray,
                     k_cap: int, stop_abs: np.ndarray) -> InnerSums:
    """Double-double inner sums for a batch of outer indices.

    stop_abs[j] is the absolute size (in normalized units) below which the
    alternating tail may be cut once term magnitudes decrease.
    """
    params = table.params
    an = params.an
    need = int(2 * j_arr.max() + k_cap + 1)
    ddm = table.dd_moments(need)
    rg_h, rg_l = ddm.rgamma_hi, ddm.rgamma_lo
    g_h, g_l = ddm.g_hi, ddm.g_lo

    J = j_arr.size
    uh = np.ones(J)
    ul = np.zeros(J)
    sh = np.ones(J)
    sl = np.zeros(J)
    maxu = np.ones(J)
    noise = np.zeros(J)
    tail = np.zeros(J)
    terms = np.ones(J, dtype=np.int64)
    active = np.ones(J, dtype=bool)
    prev_mag = np.ones(J)

    an_h, an_l = dd.from_float(an)
    mrsn = -r * math.sqrt(params.n)  # fine at double precision: scales all terms
    base_idx = 2 * j_arr

    for k in range(k_cap):
        idx = base_idx + k
        # scalar factor (-r sqrt n) (an+k) / ((k+1)(an+k+1)) in dd
        nk_h, nk_l = dd.add_f(an_h, an_l, float(k))
        dk_h, dk_l = dd.add_f(an_h, an_l, float(k + 1))
        dk_h, dk_l = dd.mul_f(dk_h, dk_l, float(k + 1))
        sc_h, sc_l = dd.div(nk_h, nk_l, dk_h, dk_l)
        sc_h, sc_l = dd.mul_f(sc_h, sc_l, mrsn)
        # vector factors rgamma[2j+k] * g[k] / g[2j+k]
        fh, fl = dd.vmul(rg_h[idx], rg_l[idx], np.full(J, sc_h), np.full(J, sc_l))
        qh, ql = dd.vdiv(np.full(J, g_h[k]), np.full(J, g_l[k]), g_h[idx], g_l[idx])
        fh, fl = dd.vmul(fh, fl, qh, ql)
        uh, ul = dd.vmul(uh, ul, fh, fl)
        uh[~active] = 0.0
        ul[~active] = 0.0
        sh, sl = dd.vadd(sh, sl, uh, ul)
        mag = np.abs(uh)
        np.maximum(maxu, mag, out=maxu)
        noise += mag * 1e-31
        terms += active
        done = active & (mag < stop_abs) & (mag <= prev_mag)
        if np.any(done):
            tail[done] = mag[done]
            active &= ~done
            uh[done] = 0.0
            ul[done] = 0.0
        if not np.any(active):
            break
        prev_mag = mag
    if np.any(active):
        tail[active] = np.abs(uh[active]) + np.abs(ul[active])
    return InnerSums(value=sh + sl, max_abs=maxu, tail=tail, terms=terms,
                     noise=noise + maxu * 1e-31)


def inner_power_sums_float(table: MomentTable, r: float, j_arr: np.ndarray,
                           k_cap: int, stop_abs: np.ndarray) -> InnerSums:
    """Log/float rung of the inner sums, for outer indices beyond the
    double-double window; per-term relative noise ~1e-15.

    j_arr must be contiguous ascending; the log binomial row is marched
    in j: ln C((an+k)/2+j, j+1) = ln C((an+k)/2+j-1, j)
                                  + ln((an+k)/2 + j) - ln(j+1).
    """
    params = table.params
    an = params.an
    logr = math.log(r) if r > 0 else -math.inf
    lmu = table.log_mu
    J = j_arr.size
    value = np.empty(J)
    max_abs = np.empty(J)
    tail = np.empty(J)
    terms = np.empty(J, dtype=np.int64)
    k = np.arange(k_cap + 1, dtype=float)
    lgk = np.cumsum(np.concatenate(([0.0], np.log(k[1:]))))
    signs = np.where(np.arange(k_cap + 1) % 2 == 0, 1.0, -1.0)
    lden = np.log(an + k)
    j0 = int(j_arr[0])
    half = (an + k) / 2.0
    if j0 == 0:
        lC = np.zeros(k.size)
    else:
        lg0 = log_gamma(j0 + 1.0)
        lC = np.array([log_gamma(hh + j0) - log_gamma(hh) for hh in half]) - lg0
    for i, j in enumerate(j_arr):
        if i:
            lC += np.log(half + (j - 1)) - math.log(j)
        lt = lC + lmu[2 * j: 2 * j + k_cap + 1] + k * logr - lgk - lden
        t = np.exp(lt - lt[0]) * signs
        mags = np.abs(t)
        dec = np.nonzero((mags[1:] <= mags[:-1]) & (mags[1:] < stop_abs[i]))[0]
        kend = int(dec[0] + 1) if dec.size else k_cap
        value[i] = float(np.sum(t[: kend + 1]))
        max_abs[i] = float(mags[: kend + 1].max())
        tail[i] = float(mags[min(kend, mags.size - 1)])
        terms[i] = kend + 1
    return InnerSums(value=value, max_abs=max_abs, tail=tail, terms=terms,
                     noise=max_abs * (k_cap ** 0.5) * 1e-15)


def hurwitz_tail(q: float, j0: int) -> float:
    """sum_{j > j0} j^(-q) by Euler-Maclaurin; j0 >= 10, q > 1."""
    a = float(j0 + 1)
    return (a ** (1.0 - q) / (q - 1.0) + 0.5 * a ** (-q)
            + q * a ** (-q - 1.0) / 12.0
            - q * (q + 1.0) * (q + 2.0) * a ** (-q - 3.0) / 720.0)


def fit_outer_tail(j_win: np.ndarray, contrib: np.ndarray, p: float,
                   j_last: int) -> Tuple[float, float]:
    """Fit contrib_j ~ (c1 + c2/j) j^(-p) on a window and return
    (tail correction for j > j_last, conservative residual bound)."""
    y = contrib * j_win.astype(float) ** p
    A = np.column_stack([np.ones(j_win.size), 1.0 / j_win])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.max(np.abs(y - A @ coef))) if j_win.size > 2 else float(np.max(np.abs(y)))
    t1 = hurwitz_tail(p, j_last)
    t2 = hurwitz_tail(p + 1.0, j_last)
    correction = float(coef[0] * t1 + coef[1] * t2)
    bound = resid * t1 + 0.1 * abs(correction)
    return correction, bound


def _wynn_epsilon(s: np.ndarray) -> Tuple[float, float]:
    """Wynn epsilon acceleration of a partial-sum sequence.

    Returns (accelerated limit, spread of the last even columns) - suited
    to tails that oscillate under a power-law envelope, where a signed
    power-law fit cannot close the sum.
    """
    n = s.size
    e_prev = np.zeros(n + 1)
    e_cur = s.astype(float).copy()
    best = [e_cur[-1]]
    for _ in range((n - 1) // 2):
        d = np.diff(e_cur)
        with np.errstate(divide="ignore", invalid="ignore"):
            e_next = e_prev[1: e_cur.size] + 1.0 / d
        e_prev, e_cur = e_cur, e_next
        d2 = np.diff(e_cur)
        with np.errstate(divide="ignore", invalid="ignore"):
            e_next = e_prev[1: e_cur.size] + 1.0 / d2
        e_prev, e_cur = e_cur, e_next
        if e_cur.size == 0 or not np.all(np.isfinite(e_cur)):
            break
        best.append(e_cur[-1])
    if len(best) >= 3:
        spread = abs(best[-1] - best[-2]) + abs(best[-2] - best[-3])
    elif len(best) == 2:
        spread = abs(best[-1] - best[-2])
    else:
        spread = abs(best[0])
    return float(best[-1]), float(spread)


def close_outer_sum(tau: np.ndarray, noise: np.ndarray, p: float,
                    tol: float) -> Tuple[float, float, int]:
    """Sum outer-index contributions with a noise-aware cut and a tail
    closure.

    The clean prefix ends at two consecutive noise-dominated entries; the
    fit windows draw only on strongly clean entries (|tau| >= 10 noise).
    A one-signed window closes by the fitted power-law model; a window
    with several sign changes by a damped complex-mode fit whose remainder
    is summed numerically. Returns (sum, error bound, terms used).
    """
    J = tau.size
    cut = J
    for j in range(J):
        if j >= 6 and abs(tau[j]) < 4.0 * noise[j] and \
                (j + 1 >= J or abs(tau[j + 1]) < 4.0 * noise[j + 1]):
            cut = j
            break
    total = float(np.sum(tau[:cut]))
    err = float(np.sum(noise[:cut]))
    if cut == 0:
        return total, err, 0
    # corrections may only be fitted on entries far above the noise
    strong = np.nonzero(np.abs(tau[:cut]) >= 50.0 * noise[:cut])[0]
    wend = int(strong[-1]) + 1 if strong.size else 0
    mtau = float(np.max(np.abs(tau[max(0, cut - 8): cut])))
    flat_bound = mtau * (cut + 1) / max(p - 1.0, 0.25)
    if flat_bound < 0.5 * tol or wend < 16:
        return total, err + flat_bound, cut
    # fit strictly on the trailing clean entries (transients excluded);
    # weak entries between wend and cut stay in the total with their noise
    lo = max(6, wend - 20)
    jw_t = np.arange(lo, wend, dtype=float) + 1.0
    cw_t = tau[lo: wend]
    if cw_t.size < 12:
        return total, err + flat_bound, cut
    sgn_t = np.sign(cw_t)
    flips_t = np.nonzero(sgn_t[1:] * sgn_t[:-1] < 0)[0]
    corr = bnd = None
    if flips_t.size == 0:
        corr, bnd = fit_outer_tail(jw_t, cw_t, p, cut)
        # a power-law model only earns its correction when it actually fits
        y = cw_t * jw_t ** p
        A = np.column_stack([np.ones(jw_t.size), 1.0 / jw_t])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        resid = float(np.max(np.abs(y - A @ coef)))
        if resid > 0.25 * float(np.max(np.abs(y))):
            corr = None
    else:
        # oscillatory: fit a damped complex mode over a wide window and sum
        # the fitted model's remainder numerically
        wide = min(wend - 4, 520)
        jw = np.arange(wend - wide, wend, dtype=float) + 1.0
        cw = tau[wend - wide: wend]
        sgn = np.sign(cw)
        flips = np.nonzero(sgn[1:] * sgn[:-1] < 0)[0]
        if flips.size >= 2:
            y = cw * jw ** p
            spacing = float(np.mean(np.diff(flips))) if flips.size >= 3 \
                else float(flips[-1] - flips[0])
            w0 = math.pi / max(spacing, 2.0)
            best = None
            for w in np.linspace(0.7 * w0, 1.4 * w0, 29):
                A = np.column_stack([np.ones(wide), np.cos(w * jw),
                                     np.sin(w * jw)])
                coef, *_ = np.linalg.lstsq(A, y, rcond=None)
                resid = float(np.max(np.abs(y - A @ coef)))
                if best is None or resid < best[0]:
                    best = (resid, w, coef)
            resid, w, coef = best
            jt = np.arange(cut + 1, cut + 40000, dtype=float)
            model = (coef[0] + coef[1] * np.cos(w * jt)
                     + coef[2] * np.sin(w * jt)) * jt ** (-p)
            corr = float(np.sum(model)) + coef[0] * hurwitz_tail(p, int(jt[-1]))
            bnd = resid * hurwitz_tail(p, cut) * (2.0 + 1.0 / max(w, 0.05)) \
                + 0.15 * abs(corr)
    if corr is not None and math.isfinite(corr) and abs(corr) <= flat_bound \
            and math.isfinite(bnd):
        return total + corr, err + min(bnd, flat_bound), cut
    return total, err + flat_bound, cut
