"""Latent temporal and isotropic spatial models."""

from .components import (
    AR1,
    ARMA,
    Component,
    RandomWalk,
    SpatialExp,
    SpatialGauss,
    WhiteNoise,
    coeffs_to_pacf,
    pacf_to_coeffs,
    spectral_radius,
)
from .simulate import MAX_SPATIAL_CELLS, simulate
from .spec import ModelSpec
from .theory import (
    TheoreticalWv,
    haar_autocorr,
    model_wv,
    rw_wv,
    theoretical_acf,
    theoretical_wv_1d,
    theoretical_wv_2d,
    unit_wv,
    wv_jacobian,
)

__all__ = [
    "AR1", "ARMA", "Component", "RandomWalk", "SpatialExp", "SpatialGauss",
    "WhiteNoise", "ModelSpec", "TheoreticalWv", "MAX_SPATIAL_CELLS",
    "coeffs_to_pacf", "pacf_to_coeffs", "spectral_radius", "simulate",
    "haar_autocorr", "model_wv", "rw_wv", "theoretical_acf", "theoretical_wv_1d",
    "theoretical_wv_2d", "unit_wv", "wv_jacobian",
]
