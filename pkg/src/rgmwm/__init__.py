"""Robust generalized method of wavelet moments.

Wavelet-variance estimation (classical and Tukey M-estimation) for series
and lattice fields, minimum-distance fitting of latent time-series and
isotropic spatial models, inference, and a Monte Carlo study harness.
"""

from .bench import ContaminationSpec, StudyReport, contaminate, rmse_star, run_study
from .exceptions import (
    IdentifiabilityError,
    InvalidInputError,
    NoSolutionError,
    NumericalFailureError,
    RGMWMError,
    SizeLimitError,
    UnsupportedError,
)
from .gmwm import (
    GMWM,
    FitResult,
    JTestResult,
    WeightingMatrix,
    build_omega,
    fit,
    format_report,
    gmwm_objective,
    jtest_bootstrap,
    observation_weights,
    param_covariance,
    starting_values,
)
from .models import ModelSpec, simulate, theoretical_wv_1d, theoretical_wv_2d
from .wavelet import HaarMODWT, max_scale_pairs_2d, max_scales_1d, modwt2d_haar, modwt_haar
from .wv import (
    RobustScore,
    WaveletVariance,
    WvEstimate,
    consistency_constant,
    estimate_V,
    estimate_wv,
    tukey_weight,
    tuning_for_efficiency,
    wv_classical,
    wv_confidence_intervals,
    wv_robust,
)

__version__ = "0.1.0"

__all__ = [
    "ContaminationSpec", "StudyReport", "contaminate", "rmse_star", "run_study",
    "IdentifiabilityError", "InvalidInputError", "NoSolutionError",
    "NumericalFailureError", "RGMWMError", "SizeLimitError", "UnsupportedError",
    "GMWM", "FitResult", "JTestResult", "WeightingMatrix", "build_omega", "fit",
    "format_report", "gmwm_objective", "jtest_bootstrap", "observation_weights",
    "param_covariance", "starting_values",
    "ModelSpec", "simulate", "theoretical_wv_1d", "theoretical_wv_2d",
    "HaarMODWT", "max_scale_pairs_2d", "max_scales_1d", "modwt2d_haar", "modwt_haar",
    "RobustScore", "WaveletVariance", "WvEstimate", "consistency_constant",
    "estimate_V", "estimate_wv", "tukey_weight", "tuning_for_efficiency",
    "wv_classical", "wv_confidence_intervals", "wv_robust",
]
