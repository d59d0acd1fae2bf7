"""FastAPI service around the distribution engine.

The handlers hold no state beyond the module-level table caches, which are
immutable after construction, so concurrent requests are safe. The CLI
calls the same `handle_*` functions in process.
"""

from __future__ import annotations

import math
import os
from typing import Optional

from fastapi import FastAPI, HTTPException

from ..angle import solve_angle_coeffs, tan_cdf, tan_pdf
from ..coeffs import (ModelParams, diff_weights, get_table, scaled_moments)
from ..errors import ConvergenceError, DomainError
from ..oracle import verify_model
from ..sumsq import (EvalConfig, SeriesResult, cdf_sumsq, cdf_sumsq_fourier,
                     cdf_sumsq_legendre, cdf_sumsq_mixture, cdf_sumsq_power,
                     cdf_u, resolve_lambda)
from ..variance import svar_cdf
from .schemas import (AngleRequest, AngleResponse, CdfRequest, CdfResponse,
                      CoeffsRequest, CoeffsResponse, CoeffsRow,
                      ConfigResponse, VerifyRequest)

_DEFAULTS = EvalConfig()


def _config_from(req: CdfRequest) -> EvalConfig:
    max_k = req.max_terms or _DEFAULTS.max_k
    env_cap = os.environ.get("GVX_MAX_TERMS")
    if env_cap:
        max_k = min(max_k, int(env_cap))
    return EvalConfig(
        tol=req.tol,
        max_k=max_k,
        max_j=req.max_j or _DEFAULTS.max_j,
        representation=req.representation,
        lambda_strategy=req.lambda_strategy,
        lambda_value=req.lambda_value,
    )


def handle_cdf(req: CdfRequest) -> CdfResponse:
    params = ModelParams(alpha=req.alpha, n=req.n)
    cfg = _config_from(req)
    x = req.at
    if req.dist == "ssq":
        # `at` is the radius r with Pr{Z <= r^2}
        if x < 0:
            raise DomainError("threshold must be >= 0 for the sum of squares")
        res = _dispatch_ssq(params, float(x), cfg)
        stat = "ssq"
    elif req.dist in ("svar", "s"):
        s2 = x * x if req.dist == "s" else x
        res = svar_cdf(params, float(s2), cfg, method=req.method)
        stat = "svar" if req.dist == "svar" else "s"
    else:  # u
        table = get_table(params.alpha, params.n, 320)
        res = cdf_u(table, float(x), cfg)
        stat = "u"
    return CdfResponse(alpha=req.alpha, n=req.n, statistic=stat, x=req.at,
                       cdf=res.value, representation=res.representation,
                       terms_used=res.terms_used, est_error=res.est_error,
                       diagnostics=_plain(res.diagnostics))


def _dispatch_ssq(params: ModelParams, r: float, cfg: EvalConfig) -> SeriesResult:
    if cfg.representation == "auto":
        return cdf_sumsq(params, r, cfg)
    table = get_table(params.alpha, params.n,
                      max(280, int(r * math.sqrt(params.n)) + 120))
    fn = {"power": cdf_sumsq_power, "mixture": cdf_sumsq_mixture,
          "legendre": cdf_sumsq_legendre, "fourier": cdf_sumsq_fourier}
    return fn[cfg.representation](table, r, cfg)


def _plain(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, dict):
            out[k] = _plain(v)
        elif isinstance(v, (bool, int, str)) or v is None:
            out[k] = v
        else:
            try:
                out[k] = float(v)
            except (TypeError, ValueError):
                out[k] = str(v)
    return out


def handle_coeffs(req: CoeffsRequest) -> CoeffsResponse:
    params = ModelParams(alpha=req.alpha, n=req.n)
    table = get_table(params.alpha, params.n, max(req.kmax, 64))
    cfg = EvalConfig(lambda_strategy=req.lambda_strategy,
                     lambda_value=req.lambda_value)
    lam = resolve_lambda(table, cfg)
    sm = scaled_moments(table, lam)
    ddm = table.dd_moments(min(req.kmax, table.K))
    lamsq = math.sqrt(params.n)
    dv = (ddm.gamma_hi, ddm.gamma_lo) if abs(lam - lamsq) < 1e-12 else None
    dw = diff_weights(sm, req.kmax, dd_values=dv)
    rows = []
    for k in range(req.kmax + 1):
        logmu = float(table.log_mu[k])
        mu = math.exp(logmu) if logmu < 700.0 else f"log:{logmu!r}"
        rows.append(CoeffsRow(
            k=k, beta_sign=1 if k % 2 == 0 else -1,
            log_abs_beta=float(table.log_beta_abs[k]), mu=mu,
            gamma=float(math.exp(table.log_gamma_m[k])),
            delta_lambda=float(dw.values[k])))
    return CoeffsResponse(alpha=req.alpha, n=req.n, lam=lam, rows=rows)


def handle_angle(req: AngleRequest) -> AngleResponse:
    params = ModelParams(alpha=req.alpha, n=req.n)
    co = solve_angle_coeffs(params)
    resp = AngleResponse(alpha=req.alpha, n=req.n,
                         w_at_interval_end=co.W_at_phi_n,
                         cond_estimate=co.cond_estimate)
    if req.t is None:
        resp.coefficients = [float(a) for a in co.a]
    else:
        resp.t = req.t
        resp.cdf = tan_cdf(co, req.t)
        resp.pdf = tan_pdf(co, req.t)
    return resp


def handle_verify(req: VerifyRequest) -> dict:
    rep = verify_model(req.alpha, req.n, samples=req.samples, seed=req.seed)
    return rep.as_dict()


def config_defaults() -> dict:
    return {
        "tol": _DEFAULTS.tol,
        "max_k": _DEFAULTS.max_k,
        "max_j": _DEFAULTS.max_j,
        "representation": _DEFAULTS.representation,
        "lambda_strategy": _DEFAULTS.lambda_strategy,
        "legendre_kmax": _DEFAULTS.legendre_kmax,
        "fourier_mmax": _DEFAULTS.fourier_mmax,
        "verify_samples": 1_000_000,
        "verify_seed": 20260808,
        "env": {"GVX_MAX_TERMS": os.environ.get("GVX_MAX_TERMS")},
    }


def create_app() -> FastAPI:
    app = FastAPI(title="gvx",
                  description="Exact distributions for i.i.d. gamma samples")

    @app.exception_handler(DomainError)
    async def _domain(_, exc):
        raise HTTPException(status_code=422, detail=str(exc))

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.get("/config", response_model=ConfigResponse)
    def config():
        return ConfigResponse(defaults=config_defaults())

    @app.post("/cdf", response_model=CdfResponse)
    def cdf(req: CdfRequest):
        try:
            return handle_cdf(req)
        except DomainError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        except ConvergenceError as exc:
            raise HTTPException(status_code=409, detail=str(exc))

    @app.post("/coeffs", response_model=CoeffsResponse)
    def coeffs(req: CoeffsRequest):
        try:
            return handle_coeffs(req)
        except DomainError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.post("/angle", response_model=AngleResponse)
    def angle(req: AngleRequest):
        try:
            return handle_angle(req)
        except DomainError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        except ConvergenceError as exc:
            raise HTTPException(status_code=409, detail=str(exc))

    @app.post("/verify")
    def verify(req: VerifyRequest):
        try:
            return handle_verify(req)
        except DomainError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    return app


app = create_app()
