"""Classical and robust (Tukey biweight) wavelet variance.

The robust estimator at one scale solves

    (1/M) sum_t [ w_c(W_t / sqrt(nu))**2 * W_t**2 / nu - b_c ] = 0

in ``nu``, where ``w_c(u) = (1 - (u/c)**2)**2`` on ``|u| <= c`` and
``b_c = E[w_c(Z)**2 Z**2]`` makes the equation Fisher-consistent at the
Gaussian model. ``c = inf`` recovers the mean of squares.
"""

import math
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import fft as sp_fft
from scipy import integrate, optimize, stats
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import InvalidInputError, NoSolutionError, NumericalFailureError
from .wavelet import (
    WaveletCoefficients1D,
    WaveletCoefficients2D,
    modwt2d_haar,
    modwt_haar,
)

__all__ = [
    "RobustScore",
    "WvEstimate",
    "DegenerateScaleWarning",
    "CLASSICAL",
    "tukey_weight",
    "consistency_constant",
    "asymptotic_efficiency",
    "tuning_for_efficiency",
    "wv_classical",
    "wv_robust",
    "estimate_V",
    "wv_confidence_intervals",
    "estimate_wv",
    "WaveletVariance",
]

CALIBRATED_EFFICIENCIES = (0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99)
_ROOT_STEP = 2.0
_BRACKET_SPAN = 1e6
_MAXITER = 200
_CHI2_MEDIAN = float(stats.chi2.ppf(0.5, 1))


class DegenerateScaleWarning(UserWarning):
    """A scale has all-zero coefficients, so its wavelet variance is 0."""


def tukey_weight(x, c):
    """Tukey biweight ``(1 - (x/c)**2)**2`` on ``|x| <= c``, else 0."""
    x = np.asarray(x, dtype=float)
    if math.isinf(c):
        return np.ones_like(x)[()]
    r = (x / c) ** 2
    return np.where(r <= 1.0, (1.0 - r) ** 2, 0.0)[()]


def _gauss_expect(fn, c):
    # integrand vanishes outside [-c, c]; the Gaussian tail past 40 is below 1e-300
    lim = min(c, 40.0)
    val, _ = integrate.quad(lambda z: fn(z) * stats.norm.pdf(z), 0.0, lim,
                            epsabs=1e-14, epsrel=1e-11, limit=200)
    return 2.0 * val


@lru_cache(maxsize=256)
def consistency_constant(c):
    """``b_c = E[w_c(Z)**2 Z**2]`` for standard normal ``Z``."""
    if c <= 0:
        raise InvalidInputError(f"tuning constant must be positive, got {c}")
    if math.isinf(c):
        return 1.0
    return _gauss_expect(lambda z: z * z * (1.0 - (z / c) ** 2) ** 4, c)


def _chi_terms(c):
    """Return E[chi^2] - b^2 and E[Z chi'(Z)] for chi(z) = z^2 w_c(z)^2."""
    if math.isinf(c):
        return 2.0, 2.0
    b = consistency_constant(c)

    def chi(z):
        return z * z * (1.0 - (z / c) ** 2) ** 4

    def z_dchi(z):
        s = z * z
        q = 1.0 - s / (c * c)
        return 2.0 * s * (q ** 4 - 4.0 * (s / (c * c)) * q ** 3)

    var = _gauss_expect(lambda z: chi(z) ** 2, c) - b * b
    slope = _gauss_expect(z_dchi, c)
    return var, slope


@lru_cache(maxsize=256)
def asymptotic_efficiency(c):
    """Gaussian efficiency of the robust WV relative to the mean of squares."""
    var, slope = _chi_terms(c)
    return slope * slope / (2.0 * var)


@lru_cache(maxsize=1)
def _degenerate_c():
    # Below this c the estimating equation loses its slope and efficiency
    # stops being monotone; calibration only searches above it.
    return optimize.brentq(lambda c: _chi_terms(c)[1], 1.5, 3.0, xtol=1e-12)


@dataclass(frozen=True)
class RobustScore:
    """Tukey score parameters: tuning constant, consistency constant, efficiency."""

    c: float
    b_c: float
    efficiency: float

    @property
    def is_classical(self):
        return math.isinf(self.c)

    @classmethod
    def from_c(cls, c):
        c = float(c)
        if not c > 0:
            raise InvalidInputError(f"tuning constant must be positive, got {c}")
        return cls(c, consistency_constant(c), asymptotic_efficiency(c))


CLASSICAL = RobustScore(math.inf, 1.0, 1.0)


@lru_cache(maxsize=64)
def tuning_for_efficiency(efficiency):
    """Tukey constant reaching ``efficiency`` at the Gaussian model.

    ``efficiency=1`` returns the classical (``c = inf``) score. Values are
    cached; the usual grid is warmed lazily on first use.
    """
    efficiency = float(efficiency)
    if not 0.05 < efficiency <= 1.0:
        raise InvalidInputError(
            f"efficiency must lie in (0.05, 1], got {efficiency}")
    if efficiency == 1.0:
        return CLASSICAL
    lo = _degenerate_c() + 1e-6
    hi = 1e4
    c = optimize.brentq(lambda c: asymptotic_efficiency(c) - efficiency,
                        lo, hi, xtol=1e-12, rtol=1e-12, maxiter=_MAXITER)
    return RobustScore.from_c(c)


def _as_score(score):
    if score is None:
        return CLASSICAL
    if isinstance(score, RobustScore):
        return score
    return tuning_for_efficiency(score)


def _flat(coeffs):
    w = np.asarray(coeffs, dtype=float).ravel()
    if w.size == 0:
        raise InvalidInputError("empty coefficient vector")
    return w


def wv_classical(coeffs):
    """Mean of squared coefficients; 0 (with a warning) for all-zero input."""
    w = _flat(coeffs)
    nu = float(np.mean(w * w))
    if nu == 0.0:
        warnings.warn("all wavelet coefficients are zero at this scale",
                      DegenerateScaleWarning, stacklevel=2)
    return nu


def _estimating_fn(w2, score):
    c2 = score.c * score.c
    b = score.b_c
    m = w2.size

    def F(log_nu):
        s = w2 / math.exp(log_nu)
        q = 1.0 - s / c2
        inside = s < c2
        return float(np.sum(s[inside] * q[inside] ** 4)) / m - b

    return F


def _scan_bracket(F, x0, lo, hi, per_octave=32):
    """Sign-change interval nearest ``x0`` on a fine grid of ``log nu``.

    Fallback for equations whose positive region is narrower than one
    step of the expanding walk. Returns ``(None, None)`` if the grid shows
    no sign change on ``[lo, hi]``.
    """
    h = math.log(2.0) / per_octave
    grid = np.arange(math.floor((lo - x0) / h), math.ceil((hi - x0) / h) + 1) * h + x0
    vals = np.array([F(t) for t in grid])
    change = np.flatnonzero((vals[:-1] < 0) != (vals[1:] < 0))
    if change.size == 0:
        return None, None
    best = change[np.argmin(np.abs(0.5 * (grid[change] + grid[change + 1]) - x0))]
    return float(grid[best]), float(grid[best + 1])


def wv_robust(coeffs, score=0.6):
    """Robust WV at one scale: root of the Tukey estimating equation.

    The search starts from the classical estimate and walks on ``log nu``
    toward the first sign change, so the returned root is the one nearest
    the classical estimate.

    Parameters
    ----------
    coeffs : array-like
        Wavelet coefficients of one scale (any shape, flattened).
    score : RobustScore or float
        Score object or target efficiency.
    """
    score = _as_score(score)
    w = _flat(coeffs)
    if w.size < 2:
        raise InvalidInputError("robust WV needs at least two coefficients")
    peak = float(np.max(np.abs(w)))
    if peak == 0.0:
        raise InvalidInputError("all coefficients are zero; robust WV undefined")
    # work on coefficients rescaled by a power of two (exact) so that squares
    # of tiny or huge values neither underflow nor overflow
    shift = math.frexp(peak)[1]
    return math.ldexp(_robust_root(np.ldexp(w, -shift), score), 2 * shift)


def _robust_root(w, score):
    w2 = w * w
    nu_cl = float(np.mean(w2))
    if score.is_classical:
        return nu_cl
    F = _estimating_fn(w2, score)
    x0 = math.log(nu_cl)
    f0 = F(x0)
    if f0 == 0.0:
        return nu_cl
    # the window spans 1e-6 .. 1e6 around the classical estimate, widened
    # downward to the median-based pilot so that a few huge coefficients
    # cannot push the root out of reach
    span = math.log(_BRACKET_SPAN)
    nu_med = float(np.median(w2)) / _CHI2_MEDIAN
    lo_lim = math.log(min(nu_cl, nu_med) if nu_med > 0 else nu_cl) - span
    hi_lim = x0 + span
    step = math.log(_ROOT_STEP) * (-1.0 if f0 < 0 else 1.0)
    a, fa = x0, f0
    while True:
        b = a + step
        if b < lo_lim - 1e-12 or b > hi_lim + 1e-12:
            a, b = _scan_bracket(F, x0, lo_lim, hi_lim)
            if a is None:
                raise NoSolutionError(
                    "no sign change of the robust WV equation within "
                    f"[{math.exp(lo_lim):.3g}, {math.exp(hi_lim):.3g}]")
            break
        fb = F(b)
        if fb == 0.0:
            return math.exp(b)
        if (fa < 0) != (fb < 0):
            break
        a, fa = b, fb
    lo, hi = min(a, b), max(a, b)
    root = optimize.brentq(F, lo, hi, xtol=1e-12, rtol=1e-10, maxiter=_MAXITER)
    return math.exp(root)


def _score_and_slope(w, nu, score):
    """Per-coefficient score values and ``-d score / d nu`` at ``nu``."""
    s = (w * w) / nu
    if score.is_classical:
        return s - 1.0, s / nu
    c2 = score.c * score.c
    q = np.clip(1.0 - s / c2, 0.0, None)
    psi = s * q ** 4 - score.b_c
    dchi = q ** 4 - 4.0 * (s / c2) * q ** 3
    return psi, s * dchi / nu


def _bartlett_lrv_1d(psi, bandwidths):
    """Bartlett long-run covariance of the columns of ``psi`` (``n x J``).

    ``bandwidths[a, b]`` is the truncation lag of element ``(a, b)``; the
    cross-covariances come from one zero-padded FFT per column.
    """
    n, k = psi.shape
    size = sp_fft.next_fast_len(2 * n)
    F = sp_fft.rfft(psi, size, axis=0)
    S = np.empty((k, k))
    for a in range(k):
        for b in range(a, k):
            # cc[h] = sum_t psi_a(t + h) psi_b(t), negative lags wrap around
            cc = sp_fft.irfft(F[:, a] * np.conj(F[:, b]), size)
            bw = min(int(bandwidths[a, b]), n - 1)
            h = np.arange(1, bw + 1)
            kern = 1.0 - h / (bw + 1.0)
            S[a, b] = S[b, a] = (cc[0] + kern @ cc[h] + kern @ cc[size - h]) / n
    return S


def _bartlett_lrv_2d(psi, bw_rows, bw_cols):
    """Product-Bartlett long-run covariance of a ``rows x cols x J`` score field."""
    r, c, k = psi.shape
    n = r * c
    bw_rows = np.minimum(bw_rows, r - 1)
    bw_cols = np.minimum(bw_cols, c - 1)
    max_a, max_b = int(bw_rows.max()), int(bw_cols.max())
    S = np.zeros((k, k))
    for a in range(0, max_a + 1):
        ka = np.clip(1.0 - a / (bw_rows + 1.0), 0.0, None)
        for b in range(-max_b, max_b + 1):
            if a == 0 and b < 0:
                continue
            kb = np.clip(1.0 - abs(b) / (bw_cols + 1.0), 0.0, None)
            x = psi[a:, max(b, 0):c + min(b, 0)]
            y = psi[:r - a, max(-b, 0):c - max(b, 0)]
            g = np.einsum("ijk,ijl->kl", x, y) / n
            if a == 0 and b == 0:
                S += g
            else:
                S += ka * kb * (g + g.T)
    return S


def _bandwidths(scales, base):
    """Truncation lag per element: the larger of ``base`` and the filter width."""
    width = 2.0 ** np.asarray(scales, dtype=float)
    return np.maximum(base, np.maximum.outer(width, width))


def _aligned(coeffs):
    """Coefficient arrays cropped to the common support (aligned by end index)."""
    if isinstance(coeffs, WaveletCoefficients1D):
        top = 2 ** coeffs.J
        return [w[top - 2 ** j:] for j, w in zip(coeffs.scales, coeffs.coefficients)]
    rows = 2 ** max(p[0] for p in coeffs.scales)
    cols = 2 ** max(p[1] for p in coeffs.scales)
    return [coeffs[p][rows - 2 ** p[0]:, cols - 2 ** p[1]:] for p in coeffs.scales]


def _symmetrize_psd(V):
    V = 0.5 * (V + V.T)
    vals, vecs = np.linalg.eigh(V)
    if vals.min() < 0:
        V = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
        V = 0.5 * (V + V.T)
    return V


def _plugin_cov(coeffs, nu_hat, score):
    aligned = _aligned(coeffs)
    n_common = aligned[0].size
    bandwidth = int(math.floor(n_common ** (1.0 / 3.0) + 1e-12))
    slopes = []
    psis = []
    for w_full, w_al, nu in zip(coeffs_list(coeffs), aligned, nu_hat):
        _, slope = _score_and_slope(w_full.ravel(), nu, score)
        slopes.append(slope.mean())
        psi, _ = _score_and_slope(w_al, nu, score)
        psis.append(psi)
    m_diag = np.asarray(slopes)
    if np.any(~np.isfinite(m_diag)) or np.any(np.abs(m_diag) < 1e-300):
        raise NumericalFailureError("singular score derivative matrix M")
    psi = np.stack(psis, axis=-1)
    if psi.ndim == 2:
        S = _bartlett_lrv_1d(psi, _bandwidths(coeffs.scales, bandwidth))
    else:
        pairs = np.asarray(coeffs.scales)
        S = _bartlett_lrv_2d(psi, _bandwidths(pairs[:, 0], bandwidth),
                             _bandwidths(pairs[:, 1], bandwidth))
    V_asym = S / np.outer(m_diag, m_diag)
    counts = np.asarray([w.size for w in coeffs_list(coeffs)], dtype=float)
    overlap = np.minimum.outer(counts, counts) / np.outer(counts, counts)
    return _symmetrize_psd(V_asym * overlap)


def coeffs_list(coeffs):
    if isinstance(coeffs, WaveletCoefficients1D):
        return list(coeffs.coefficients)
    return [coeffs[p] for p in coeffs.scales]


def _nu_from_coeffs(coeffs, score):
    if score.is_classical:
        return np.array([wv_classical(w) for w in coeffs_list(coeffs)])
    return np.array([wv_robust(w, score) for w in coeffs_list(coeffs)])


def estimate_V(coeffs, nu_hat=None, score=None, method="plug-in", model=None,
               B=100, seed=None):
    """Covariance matrix of the wavelet-variance estimator.

    Parameters
    ----------
    coeffs : WaveletCoefficients1D or WaveletCoefficients2D
    nu_hat : array-like, optional
        Estimates at which the plug-in formula is evaluated; recomputed
        from ``coeffs`` when omitted.
    score : RobustScore, float or None
        ``None`` is the classical score.
    method : {"plug-in", "bootstrap"}
        ``plug-in`` uses ``M^-1 S M^-T`` with a Bartlett long-run
        covariance of the per-coefficient scores. The truncation lag of
        element ``(a, b)`` is ``max(floor(N_J**(1/3)), 2**max(a, b))`` (per
        direction on a lattice): coefficients at scale ``j`` are correlated
        over at least the filter width ``2**j``. ``bootstrap`` simulates
        ``B`` replicates of ``model`` and takes the sample covariance of
        their estimates.

    Returns
    -------
    ndarray
        Finite-sample covariance of the estimates (not scaled by ``N_J``).
    """
    score = _as_score(score)
    if nu_hat is None:
        nu_hat = _nu_from_coeffs(coeffs, score)
    nu_hat = np.asarray(nu_hat, dtype=float)
    if method == "plug-in":
        if np.any(nu_hat <= 0):
            raise NumericalFailureError("plug-in covariance needs positive WV")
        return _plugin_cov(coeffs, nu_hat, score)
    if method != "bootstrap":
        raise InvalidInputError(f"unknown covariance method {method!r}")
    if model is None:
        raise InvalidInputError("bootstrap covariance needs a fitted model")
    from .models import simulate

    size = coeffs.n if isinstance(coeffs, WaveletCoefficients1D) else coeffs.shape
    scales = coeffs.scales
    streams = np.random.SeedSequence(seed).spawn(int(B))
    draws = []
    for ss in streams:
        x = simulate(model, size, np.random.default_rng(ss))
        if isinstance(coeffs, WaveletCoefficients1D):
            c = modwt_haar(x, coeffs.J)
        else:
            c = modwt2d_haar(x, scales)
        try:
            draws.append(_nu_from_coeffs(c, score))
        except NoSolutionError:
            continue
    draws = np.asarray(draws)
    if draws.shape[0] < max(2, B // 2):
        raise NumericalFailureError(
            f"only {draws.shape[0]} of {B} bootstrap replicates gave a WV estimate")
    V = np.atleast_2d(np.cov(draws, rowvar=False))
    if np.linalg.matrix_rank(V) < V.shape[0]:
        raise NumericalFailureError(
            f"bootstrap covariance is rank deficient with B={B}")
    return _symmetrize_psd(V)


@dataclass
class WvEstimate:
    """Per-scale wavelet variances with optional covariance and intervals."""

    scales: list
    nu_hat: np.ndarray
    counts: list
    score: RobustScore = CLASSICAL
    V_hat: np.ndarray = None
    ci: np.ndarray = None
    ci_level: float = None
    degenerate: list = field(default_factory=list)

    @property
    def method(self):
        if self.score.is_classical:
            return "classical"
        return f"robust(c={self.score.c:.6g}, efficiency={self.score.efficiency:.3g})"

    @property
    def n_min(self):
        return min(self.counts)

    @property
    def asymptotic_cov(self):
        """``N_J`` times the covariance: the ``V`` of the asymptotic theory."""
        if self.V_hat is None:
            return None
        return self.n_min * self.V_hat


def wv_confidence_intervals(estimate, level=0.95):
    """Gaussian per-scale intervals, floored at ``nu * 1e-6``."""
    if estimate.V_hat is None:
        raise InvalidInputError("confidence intervals need a covariance estimate")
    if not 0.0 < level < 1.0:
        raise InvalidInputError(f"level must lie in (0, 1), got {level}")
    z = stats.norm.ppf(0.5 * (1.0 + level))
    nu = np.asarray(estimate.nu_hat, dtype=float)
    half = z * np.sqrt(np.clip(np.diag(estimate.V_hat), 0.0, None))
    lo = np.maximum(nu - half, nu * 1e-6)
    hi = nu + half
    return np.column_stack([lo, hi])


def estimate_wv(data=None, score=None, *, coeffs=None, J=None, pairs=None,
                covariance="plug-in", level=0.95, model=None, B=100, seed=None):
    """Decompose ``data`` (if needed) and estimate WV, covariance and CIs.

    ``covariance=None`` skips the covariance and interval computation.
    """
    score = _as_score(score)
    if coeffs is None:
        arr = np.asarray(data, dtype=float)
        if arr.ndim == 2 and min(arr.shape) > 1:
            coeffs = modwt2d_haar(arr, pairs)
        else:
            coeffs = modwt_haar(arr.ravel(), J)
    arrays = coeffs_list(coeffs)
    degenerate = [s for s, w in zip(coeffs.scales, arrays) if not np.any(w)]
    if degenerate:
        warnings.warn(f"all-zero coefficients at scales {degenerate}",
                      DegenerateScaleWarning, stacklevel=2)
    nu = np.array([0.0 if not np.any(w) else
                   (float(np.mean(w * w)) if score.is_classical else wv_robust(w, score))
                   for w in arrays])
    est = WvEstimate(list(coeffs.scales), nu, [w.size for w in arrays], score,
                     degenerate=degenerate)
    if covariance is not None and not degenerate:
        est.V_hat = estimate_V(coeffs, nu, score, covariance, model, B, seed)
        est.ci = wv_confidence_intervals(est, level)
        est.ci_level = level
    return est


class WaveletVariance(TransformerMixin, BaseEstimator):
    """Estimator front end for wavelet variance.

    Parameters
    ----------
    robust : bool
        Use the Tukey M-estimator instead of the mean of squares.
    efficiency : float
        Gaussian efficiency target of the robust estimator.
    J : int or None
        Scales for 1D data (default: all admissible).
    level : float
        Confidence level of the per-scale intervals.
    covariance : {"plug-in", None}
        Covariance estimator; ``None`` skips covariance and intervals.

    Attributes
    ----------
    estimate_ : WvEstimate
    nu_ : ndarray
    scales_ : list
    """

    def __init__(self, robust=True, efficiency=0.6, J=None, level=0.95,
                 covariance="plug-in"):
        self.robust = robust
        self.efficiency = efficiency
        self.J = J
        self.level = level
        self.covariance = covariance

    def _score(self):
        return tuning_for_efficiency(self.efficiency) if self.robust else CLASSICAL

    def fit(self, X, y=None):
        self.estimate_ = estimate_wv(X, self._score(), J=self.J,
                                     covariance=self.covariance, level=self.level)
        self.nu_ = self.estimate_.nu_hat
        self.scales_ = self.estimate_.scales
        return self

    def transform(self, X):
        """WV of ``X`` at the fitted scales, as a ``(1, n_scales)`` row."""
        arr = np.asarray(X, dtype=float)
        if arr.ndim == 2 and min(arr.shape) > 1:
            est = estimate_wv(arr, self._score(), pairs=self.scales_, covariance=None)
        else:
            est = estimate_wv(arr, self._score(), J=len(self.scales_), covariance=None)
        return est.nu_hat[None, :]


def with_ci(estimate, level):
    """Copy of ``estimate`` with intervals recomputed at ``level``."""
    return replace(estimate, ci=wv_confidence_intervals(estimate, level),
                   ci_level=level)
