import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import InvalidInputError


def check_series(x, min_length=4):
    """Return ``x`` as a finite 1D float array of at least ``min_length``."""
    try:
        arr = check_array(x, ensure_2d=False, dtype=np.float64,
                          ensure_all_finite=True, ensure_min_samples=1)
    except ValueError as exc:
        raise InvalidInputError(str(exc)) from None
    if arr.ndim == 2 and 1 in arr.shape:
        arr = arr.ravel()
    if arr.ndim != 1:
        raise InvalidInputError(f"expected a 1D series, got shape {arr.shape}")
    if arr.size < min_length:
        raise InvalidInputError(
            f"series needs at least {min_length} observations, got {arr.size}")
    return arr


def check_field(x, min_size=2):
    """Return ``x`` as a finite 2D float array with both sides >= ``min_size``."""
    try:
        arr = check_array(x, ensure_2d=True, dtype=np.float64,
                          ensure_all_finite=True, ensure_min_samples=1,
                          ensure_min_features=1)
    except ValueError as exc:
        raise InvalidInputError(str(exc)) from None
    if min(arr.shape) < min_size:
        raise InvalidInputError(
            f"lattice sides must be >= {min_size}, got {arr.shape}")
    return arr


def check_data(x):
    """Dispatch to :func:`check_series` or :func:`check_field` by rank."""
    arr = np.asarray(x)
    if arr.ndim == 2 and min(arr.shape) > 1:
        return check_field(arr)
    return check_series(arr)


def check_positive(value, name):
    if not np.isfinite(value) or value <= 0:
        raise InvalidInputError(f"{name} must be positive and finite, got {value}")
    return float(value)
