"""Haar maximal-overlap wavelet transform for series and lattice fields.

Only boundary-free coefficients are returned. At level ``j`` the Haar
filter has width ``L_j = 2**j`` and half-width ``tau_j = 2**(j-1)``; the
coefficient ending at time ``t`` is

    W[j, t] = (sum of the older tau_j values - sum of the newest tau_j values) / (2 tau_j)

for ``t = L_j - 1, ..., N - 1``. The ``1/(2 tau_j)`` normalisation makes
the wavelet variance of unit white noise equal to ``2**-j``.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_field, check_series
from .exceptions import InvalidInputError

__all__ = [
    "WaveletCoefficients1D",
    "WaveletCoefficients2D",
    "HaarMODWT",
    "haar_filter",
    "max_scales_1d",
    "max_scale_pairs_2d",
    "modwt_haar",
    "modwt2d_haar",
]


def max_scales_1d(n):
    """Number of usable dyadic scales for a series of length ``n``.

    The largest ``J`` with ``2**J < n``, so the coarsest scale keeps at
    least two boundary-free coefficients (``N=1000 -> 9``, ``N=16 -> 3``).
    """
    n = int(n)
    if n < 4:
        raise InvalidInputError(f"need N >= 4 for a decomposition, got {n}")
    return (n - 1).bit_length() - 1


def max_scale_pairs_2d(k, m):
    """Lower-triangular scale pairs ``(j1, j2)``, ``j1 <= j2``, for a K x M field."""
    k, m = int(k), int(m)
    if k < 2 or m < 2:
        raise InvalidInputError(f"lattice must be at least 2 x 2, got {k} x {m}")
    jmax = min(k, m).bit_length() - 1
    return [(j1, j2) for j1 in range(1, jmax + 1) for j2 in range(j1, jmax + 1)]


@lru_cache(maxsize=64)
def haar_filter(j):
    """Taps ``h[l]`` applied to ``x[t - l]``, ``l = 0 .. 2**j - 1``."""
    tau = 2 ** (j - 1)
    h = np.full(2 * tau, 1.0 / (2 * tau))
    h[:tau] = -h[:tau]
    h.flags.writeable = False
    return h


@dataclass(frozen=True)
class WaveletCoefficients1D:
    coefficients: tuple
    n: int

    @property
    def J(self):
        return len(self.coefficients)

    @property
    def scales(self):
        return list(range(1, self.J + 1))

    @property
    def taus(self):
        return [2 ** (j - 1) for j in self.scales]

    @property
    def counts(self):
        return [w.size for w in self.coefficients]

    @property
    def n_min(self):
        """Smallest per-scale coefficient count (``N_J``)."""
        return min(self.counts)

    def __getitem__(self, j):
        return self.coefficients[j - 1]


@dataclass(frozen=True)
class WaveletCoefficients2D:
    coefficients: dict
    shape: tuple

    @property
    def scales(self):
        return list(self.coefficients)

    @property
    def counts(self):
        return [w.size for w in self.coefficients.values()]

    @property
    def n_min(self):
        return min(self.counts)

    def __getitem__(self, pair):
        return self.coefficients[tuple(pair)]


def _cut(a, start, stop, axis):
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, stop)
    return a[tuple(idx)]


def _box_sums(x, levels, axis):
    # Dyadic running sums built by doubling: every window is produced by the
    # same sequence of additions regardless of its position, which keeps
    # interior coefficients bitwise shift-covariant.
    sums = [x]
    for j in range(1, levels):
        a = sums[-1]
        tau = 2 ** (j - 1)
        n = a.shape[axis]
        sums.append(_cut(a, tau, n, axis)
                    + _cut(a, 0, n - tau, axis))
    return sums


def _haar_along(x, levels, axis):
    """Boundary-free Haar coefficients for levels ``1..levels`` along ``axis``."""
    sums = _box_sums(x, levels, axis)
    out = []
    for j in range(1, levels + 1):
        tau = 2 ** (j - 1)
        a = sums[j - 1]
        n = a.shape[axis]
        older = _cut(a, 0, n - tau, axis)
        newer = _cut(a, tau, n, axis)
        out.append((older - newer) / (2 * tau))
    return out


def modwt_haar(series, J=None):
    """Haar MODWT of a 1D series, boundary coefficients excluded.

    Parameters
    ----------
    series : array-like, shape (N,)
    J : int, optional
        Number of levels; defaults to :func:`max_scales_1d`.

    Returns
    -------
    WaveletCoefficients1D
    """
    x = check_series(series)
    jmax = max_scales_1d(x.size)
    if J is None:
        J = jmax
    if not 1 <= J <= jmax:
        raise InvalidInputError(f"J must lie in 1..{jmax} for N={x.size}, got {J}")
    return WaveletCoefficients1D(tuple(_haar_along(x, J, 0)), x.size)


def modwt2d_haar(field, pairs=None):
    """Separable Haar wavelet x wavelet transform of a lattice field.

    Pair ``(j1, j2)`` filters along axis 0 (rows of the K dimension) at
    level ``j1`` and along axis 1 at level ``j2``, giving a
    ``(K - 2**j1 + 1) x (M - 2**j2 + 1)`` coefficient matrix.
    """
    x = check_field(field)
    k, m = x.shape
    allowed = max_scale_pairs_2d(k, m)
    if pairs is None:
        pairs = allowed
    pairs = [tuple(int(v) for v in p) for p in pairs]
    jmax = max(j for p in allowed for j in p)
    for p in pairs:
        if len(p) != 2 or not (1 <= p[0] <= jmax and 1 <= p[1] <= jmax):
            raise InvalidInputError(f"invalid scale pair {p} for a {k} x {m} field")
    need = max(max(p) for p in pairs)
    rows = _haar_along(x, need, 0)
    out = {}
    cols_cache = {}
    for j1, j2 in pairs:
        if j1 not in cols_cache:
            cols_cache[j1] = _haar_along(rows[j1 - 1], need, 1)
        out[(j1, j2)] = cols_cache[j1][j2 - 1]
    return WaveletCoefficients2D(out, (k, m))


class HaarMODWT(TransformerMixin, BaseEstimator):
    """Transformer wrapper: ``transform`` returns the coefficient container.

    Parameters
    ----------
    J : int or None
        Levels for 1D input; ``None`` uses every admissible level.
    pairs : list of tuple or None
        Scale pairs for 2D input; ``None`` uses the isotropic triangle.
    """

    def __init__(self, J=None, pairs=None):
        self.J = J
        self.pairs = pairs

    def fit(self, X, y=None):
        X = np.asarray(X)
        self.ndim_ = 2 if (X.ndim == 2 and min(X.shape) > 1) else 1
        if self.ndim_ == 1:
            n = X.size
            self.scales_ = list(range(1, (self.J or max_scales_1d(n)) + 1))
        else:
            self.scales_ = list(self.pairs or max_scale_pairs_2d(*X.shape))
        return self

    def transform(self, X):
        if self.ndim_ == 1:
            return modwt_haar(X, len(self.scales_))
        return modwt2d_haar(X, self.scales_)
