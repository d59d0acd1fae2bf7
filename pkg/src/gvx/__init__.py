"""Exact distributions for i.i.d. gamma samples.

Cdfs of the sum of squares Z, the sample variance S^2, the ratio
U = sqrt(Z)/Y and the angle between the sample vector and the diagonal,
each in several series / mixture representations driven by one common
moment sequence, plus a seeded Monte Carlo / quadrature oracle.
"""

from .angle import (AngleCoefficients, solve_angle_coeffs, tan_cdf, tan_pdf,
                    truncated_cos_moments, truncated_cot_moments)
from .coeffs import (ModelParams, MomentTable, build_beta, build_moments,
                     diff_weights, get_table, lambda_star, scaled_moments,
                     u2_moments)
from .oracle import (VerificationReport, ks_distance, mc_statistics,
                     quad_cdf_n2, sample_gamma, verify_model)
from .sumsq import (EvalConfig, SeriesResult, cdf_sumsq, cdf_sumsq_fourier,
                    cdf_sumsq_legendre, cdf_sumsq_mixture, cdf_sumsq_power,
                    cdf_u, fourier_coeffs, legendre_coeffs)
from .variance import (svar_cdf, svar_cdf_integer_alpha, svar_cdf_mixture,
                       svar_cdf_series)

__version__ = "0.1.0"

__all__ = [
    "AngleCoefficients", "EvalConfig", "ModelParams", "MomentTable",
    "SeriesResult", "VerificationReport", "build_beta", "build_moments",
    "cdf_sumsq", "cdf_sumsq_fourier", "cdf_sumsq_legendre",
    "cdf_sumsq_mixture", "cdf_sumsq_power", "cdf_u", "diff_weights",
    "fourier_coeffs", "get_table", "ks_distance", "lambda_star",
    "legendre_coeffs", "mc_statistics", "quad_cdf_n2", "sample_gamma",
    "scaled_moments", "solve_angle_coeffs", "svar_cdf",
    "svar_cdf_integer_alpha", "svar_cdf_mixture", "svar_cdf_series",
    "tan_cdf", "tan_pdf", "truncated_cos_moments", "truncated_cot_moments",
    "u2_moments", "verify_model",
]
