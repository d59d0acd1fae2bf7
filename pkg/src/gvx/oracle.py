"""Independent ground truth: seeded sampling, empirical cdfs, quadrature.

Nothing here reuses the series machinery: gamma variates come from a
squeeze/rejection sampler over numpy's PCG64 streams, the n = 2
sum-of-squares cdf from scipy adaptive quadrature of the product density,
and comparisons are plain Kolmogorov-Smirnov distances. Streams are
derived per statistic and per fixed-size block, so results do not depend
on how blocks are partitioned across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np
from scipy import integrate, special

from .coeffs import ModelParams
from .errors import DomainError

_BLOCK = 1 << 16

# stream ids keep the per-statistic substreams disjoint
STREAM_IDS = {"samples": 0, "aux": 1}


def _block_rng(seed: int, stream: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=seed, spawn_key=(stream, block))))


def _standard_gamma_block(alpha: float, count: int,
                          rng: np.random.Generator) -> np.ndarray:
    """Marsaglia-Tsang squeeze/rejection for alpha >= 1; for alpha < 1 the
    boost X = X_(alpha+1) V^(1/alpha) is applied."""
    boost = alpha < 1.0
    a = alpha + 1.0 if boost else alpha
    d = a - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    out = np.empty(count)
    have = 0
    while have < count:
        m = int((count - have) * 1.35) + 16
        x = rng.standard_normal(m)
        v = (1.0 + c * x) ** 3
        u = rng.random(m)
        ok = v > 0.0
        lv = np.where(ok, np.log(np.where(ok, v, 1.0)), 0.0)
        accept = ok & (np.log(u) < 0.5 * x * x + d - d * v + d * lv)
        got = np.nonzero(accept)[0]
        take = got[: count - have]
        out[have: have + take.size] = d * v[take]
        have += take.size
    if boost:
        out *= rng.random(count) ** (1.0 / alpha)
    return out


def sample_gamma(alpha: float, count: int, seed: int) -> np.ndarray:
    """count i.i.d. unit-scale gamma(alpha) variates, deterministic in seed.

    Generation is blockwise with per-block derived streams; any partition
    of the blocks reproduces the same concatenated sequence.
    """
    if not alpha > 0:
        raise DomainError("alpha must be > 0")
    if count < 1:
        raise DomainError("count must be >= 1")
    out = np.empty(count)
    nblocks = (count + _BLOCK - 1) // _BLOCK
    for b in range(nblocks):
        lo = b * _BLOCK
        hi = min(lo + _BLOCK, count)
        rng = _block_rng(seed, STREAM_IDS["samples"], b)
        # always draw the full block: the rejection sampler's consumption
        # pattern must not depend on the requested count
        out[lo:hi] = _standard_gamma_block(alpha, _BLOCK, rng)[: hi - lo]
    return out


@dataclass
class McStatistics:
    """Per-row sample statistics for rows of n gamma variates."""

    params: ModelParams
    z: np.ndarray        # sum of squares
    y: np.ndarray        # sum
    s2: np.ndarray       # sample variance (n >= 2)
    u: np.ndarray        # sqrt(z)/y
    tan_phi: np.ndarray
    cos_phi: np.ndarray


def mc_statistics(samples: np.ndarray, params: ModelParams) -> McStatistics:
    """Row statistics exactly as defined by the sample decomposition."""
    n = params.n
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2 or x.shape[1] != n:
        raise DomainError(f"samples must have shape (count, {n})")
    y = x.sum(axis=1)
    z = (x * x).sum(axis=1)
    if n >= 2:
        xbar = y / n
        s2 = ((x - xbar[:, None]) ** 2).sum(axis=1) / (n - 1)
    else:
        s2 = np.zeros_like(y)
    u = np.sqrt(z) / y
    cos_phi = y / np.sqrt(n * z)
    tan_phi = np.sqrt(np.maximum(n * z - y * y, 0.0)) / y
    return McStatistics(params=params, z=z, y=y, s2=s2, u=u,
                        tan_phi=tan_phi, cos_phi=cos_phi)


def cos_power_moment(stats: McStatistics, k: int) -> tuple:
    """(mean, standard error) of (cos Phi)^(alpha n + k)."""
    vals = stats.cos_phi ** (stats.params.an + k)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size))


def quad_cdf_n2(alpha: float, r: float) -> float:
    """Pr{X1^2 + X2^2 <= r^2} for two gamma(alpha) variates by adaptive
    quadrature (scipy); the x = u^2 substitution regularizes alpha < 1."""
    if not alpha > 0:
        raise DomainError("alpha must be > 0")
    if r < 0:
        raise DomainError("r must be >= 0")
    if r == 0.0:
        return 0.0
    lg = math.lgamma(alpha)

    def inner(u: float) -> float:
        x = u * u
        rem = r * r - x * x
        if rem <= 0.0:
            return 0.0
        dens = 2.0 * u * math.exp((alpha - 1.0) * math.log(x) - x - lg) \
            if x > 0 else 0.0
        return dens * special.gammainc(alpha, math.sqrt(rem))

    val, err = integrate.quad(inner, 0.0, math.sqrt(r), limit=400,
                              epsabs=1e-13, epsrel=1e-13)
    if err > 1e-9:
        raise ArithmeticError(f"quadrature error estimate {err:.1e} too large")
    return float(val)


def ks_distance(sorted_sample: np.ndarray, cdf_at_sample: np.ndarray) -> float:
    """sup_i max(i/N - F(x_i), F(x_i) - (i-1)/N) over the sorted sample."""
    n = sorted_sample.size
    i = np.arange(1, n + 1)
    return float(np.max(np.maximum(i / n - cdf_at_sample,
                                   cdf_at_sample - (i - 1) / n)))


def ks_critical(n: int, level: str = "1%") -> float:
    coef = {"1%": 1.63, "5%": 1.36}[level]
    return coef / math.sqrt(n)


@dataclass
class StatisticCheck:
    name: str
    ks: float
    critical: float
    passed: bool


@dataclass
class MomentCheck:
    k: int
    exact: float
    mc_mean: float
    mc_se: float
    z_score: float
    passed: bool


@dataclass
class VerificationReport:
    """Oracle-vs-exact comparison for one (alpha, n) model."""

    params: ModelParams
    sample_count: int
    seed: int
    statistics: Dict[str, StatisticCheck] = field(default_factory=dict)
    moments: list = field(default_factory=list)
    identity_max_rel: float = math.nan

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.statistics.values()) and \
            all(m.passed for m in self.moments) and \
            self.identity_max_rel < 1e-12

    def as_dict(self) -> dict:
        return {
            "alpha": self.params.alpha,
            "n": self.params.n,
            "samples": self.sample_count,
            "seed": self.seed,
            "identity_max_rel": self.identity_max_rel,
            "statistics": {k: vars(v) for k, v in self.statistics.items()},
            "moments": [vars(m) for m in self.moments],
            "passed": self.passed,
        }


def _grid_cdf_on_sample(sorted_x: np.ndarray, grid_eval: Callable,
                        npts: int = 3000) -> np.ndarray:
    """Evaluate a vectorized cdf on a grid spanning the sample and
    interpolate monotonically onto the sample points."""
    lo = sorted_x[0]
    hi = sorted_x[-1]
    grid = np.linspace(lo, hi, npts)
    vals = grid_eval(grid)
    return np.interp(sorted_x, grid, vals)


def verify_model(alpha: float, n: int, samples: int = 1_000_000,
                 seed: int = 20260808, kmax_moments: int = 12,
                 tol_cfg=None) -> VerificationReport:
    """Run the full Monte Carlo validation suite for one model.

    KS checks of Z, (n-1)S^2, tan Phi (restricted interval) and U against
    the exact cdfs; cosine-power moment checks against the moment table;
    the per-row algebraic identity (n-1)s^2 = (u^2 - 1/n) y^2.
    """
    from .angle import solve_angle_coeffs, tan_cdf
    from .coeffs import build_moments, get_table
    from .sumsq import EvalConfig, cdf_sumsq_grid, cdf_u
    from .variance import svar_cdf_grid, svar_cdf_grid_thm42

    params = ModelParams(alpha=float(alpha), n=int(n))
    cfg = tol_cfg or EvalConfig(tol=1e-9)
    x = sample_gamma(alpha, samples * n, seed).reshape(samples, n)
    stats = mc_statistics(x, params)
    rep = VerificationReport(params=params, sample_count=samples, seed=seed)

    # exact algebraic identity per row
    lhs = (n - 1) * stats.s2
    rhs = (stats.u ** 2 - 1.0 / n) * stats.y ** 2
    scale = np.maximum(np.abs(lhs), 1e-30)
    rep.identity_max_rel = float(np.max(np.abs(lhs - rhs) / scale))

    crit = ks_critical(samples)

    sz = np.sort(stats.z)
    fz = _grid_cdf_on_sample(np.sqrt(sz), lambda g: cdf_sumsq_grid(params, g, cfg))
    d = ks_distance(sz, fz)
    rep.statistics["Z"] = StatisticCheck("Z", d, crit, d < crit)

    if n >= 2:
        sv = np.sort((n - 1) * stats.s2)
        rho_eff_max = math.sqrt(float(sv[-1]) * n * (n - 1))
        if params.integer_alpha and params.an <= 9 and rho_eff_max <= 28.0:
            fv = _grid_cdf_on_sample(sv, lambda g: svar_cdf_grid_thm42(params, g, cfg))
        else:
            fv = _grid_cdf_on_sample(sv, lambda g: svar_cdf_grid(params, g, cfg))
        d = ks_distance(sv, fv)
        rep.statistics["svar"] = StatisticCheck("(n-1)S^2", d, crit, d < crit)

        if params.integer_alpha:
            co = solve_angle_coeffs(params)
            tmax = co.t_max
            st = np.sort(stats.tan_phi)
            inside = st[st <= tmax]
            wg = np.linspace(0.0, tmax, 2000)
            wv = np.array([tan_cdf(co, t) for t in wg])
            ft = np.interp(inside, wg, wv)
            d = ks_distance_restricted(st, inside, ft)
            rep.statistics["tanPhi"] = StatisticCheck(
                "tan Phi (restricted)", d, crit, d < crit)

        su = np.sort(stats.u)
        table = get_table(alpha, n, 320)
        ug = np.linspace(1.0 / math.sqrt(n), 1.0, 2000)
        uv = np.array([cdf_u(table, float(u), cfg).value for u in ug])
        fu = np.interp(su, ug, uv)
        d = ks_distance(su, fu)
        rep.statistics["U"] = StatisticCheck("U", d, crit, d < crit)

        table = get_table(alpha, n, 320)
        for k in range(kmax_moments + 1):
            mc, se = cos_power_moment(stats, k)
            exact = table.gamma_m(k)
            zsc = (mc - exact) / se if se > 0 else 0.0
            rep.moments.append(MomentCheck(k, exact, mc, se, zsc,
                                           abs(zsc) < 4.0))
    return rep


def ks_distance_restricted(full_sorted: np.ndarray, inside: np.ndarray,
                           cdf_inside: np.ndarray) -> float:
    """KS distance restricted to sample points within an interval; the
    empirical cdf still counts the full sample."""
    n = full_sorted.size
    idx = np.searchsorted(full_sorted, inside, side="right")
    lo = np.searchsorted(full_sorted, inside, side="left")
    return float(np.max(np.maximum(idx / n - cdf_inside,
                                   cdf_inside - lo / n)))