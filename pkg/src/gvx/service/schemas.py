"""Pydantic request/response models for the HTTP service and the CLI."""

from __future__ import annotations

from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, Field, field_validator


class CdfRequest(BaseModel):
    alpha: float = Field(gt=0)
    n: int = Field(ge=1)
    dist: Literal["ssq", "svar", "s", "u"] = "ssq"
    at: float
    representation: Literal["power", "mixture", "legendre", "fourier",
                            "auto"] = "auto"
    method: Literal["auto", "thm41", "thm42"] = "auto"
    tol: float = Field(default=1e-10, gt=0)
    max_terms: Optional[int] = Field(default=None, ge=1)
    max_j: Optional[int] = Field(default=None, ge=1)
    lambda_strategy: Literal["sqrt_n", "moment", "fixed"] = "sqrt_n"
    lambda_value: Optional[float] = Field(default=None, gt=0)

    @field_validator("at")
    @classmethod
    def _finite(cls, v: float) -> float:
        if not (v == v and abs(v) != float("inf")):
            raise ValueError("at must be finite")
        return v


class CdfResponse(BaseModel):
    alpha: float
    n: int
    statistic: str
    x: float
    cdf: float
    representation: str
    terms_used: int
    est_error: float
    diagnostics: Dict = {}


class CoeffsRequest(BaseModel):
    alpha: float = Field(gt=0)
    n: int = Field(ge=1)
    kmax: int = Field(default=40, ge=0, le=2000)
    lambda_strategy: Literal["sqrt_n", "moment", "fixed"] = "sqrt_n"
    lambda_value: Optional[float] = Field(default=None, gt=0)


class CoeffsRow(BaseModel):
    k: int
    beta_sign: int
    log_abs_beta: float
    mu: Union[float, str]      # values beyond double range use "log:<value>"
    gamma: float
    delta_lambda: float


class CoeffsResponse(BaseModel):
    alpha: float
    n: int
    lam: float
    rows: List[CoeffsRow]


class AngleRequest(BaseModel):
    alpha: float = Field(gt=0)
    n: int = Field(ge=2)
    t: Optional[float] = None   # None: return the coefficients


class AngleResponse(BaseModel):
    alpha: float
    n: int
    coefficients: Optional[List[float]] = None
    t: Optional[float] = None
    cdf: Optional[float] = None
    pdf: Optional[float] = None
    w_at_interval_end: float
    cond_estimate: float


class VerifyRequest(BaseModel):
    alpha: float = Field(gt=0)
    n: int = Field(ge=1)
    samples: int = Field(default=1_000_000, ge=1000, le=20_000_000)
    seed: int = 20260808


class ConfigResponse(BaseModel):
    defaults: Dict
