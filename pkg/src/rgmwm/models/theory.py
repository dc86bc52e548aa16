"""Model-implied autocovariance and wavelet variance."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..exceptions import InvalidInputError, NumericalFailureError, UnsupportedError
from ..wavelet import haar_filter
from .components import RandomWalk, WhiteNoise


@dataclass
class TheoreticalWv:
    scales: list
    nu_theta: np.ndarray


@lru_cache(maxsize=32)
def haar_autocorr(j):
    """``a_j(k) = sum_l h_l h_{l+k}`` for ``k = 0 .. 2**j - 1``."""
    h = haar_filter(j)
    a = np.correlate(h, h, mode="full")[h.size - 1:]
    a.flags.writeable = False
    return a


@lru_cache(maxsize=32)
def _lag_matrix(scales):
    # nu_j = a_j(0) g(0) + 2 sum_{k>0} a_j(k) g(k)
    length = 2 ** max(scales)
    R = np.zeros((len(scales), length))
    for row, j in enumerate(scales):
        a = haar_autocorr(j)
        R[row, :a.size] = 2.0 * a
        R[row, 0] = a[0]
    R.flags.writeable = False
    return R


def theoretical_acf(model, max_lag, theta=None):
    """Autocovariance ``gamma(0..max_lag)`` of the summed stationary components."""
    theta = model.check_theta(theta)
    if model.spatial:
        raise InvalidInputError("theoretical_acf is for temporal models")
    g = np.zeros(int(max_lag) + 1)
    for comp, blk in zip(model.components, model.blocks):
        g += comp.acf(theta[blk], int(max_lag))
    return g


def rw_wv(g2, scales):
    """Random-walk WV ``g2 (2 tau**2 + 1) / (12 tau)`` per scale.

    The Haar filter turns the walk into a tent-weighted sum of innovations
    with weights ``1..tau..1`` over ``2 tau`` steps, divided by ``2 tau``.
    """
    tau = 2.0 ** (np.asarray(scales, dtype=float) - 1.0)
    return g2 * (2.0 * tau * tau + 1.0) / (12.0 * tau)


def component_wv_1d(comp, v, scales):
    scales = tuple(int(j) for j in scales)
    if isinstance(comp, WhiteNoise):
        return v[0] * 2.0 ** -np.asarray(scales, dtype=float)
    if isinstance(comp, RandomWalk):
        return rw_wv(v[0], scales)
    R = _lag_matrix(scales)
    return R @ comp.acf(v, R.shape[1] - 1)


def theoretical_wv_1d(model, J, theta=None, check=True):
    """WV implied by a temporal model at scales ``1..J`` (or an explicit list)."""
    scales = tuple(range(1, J + 1)) if np.isscalar(J) else tuple(J)
    if check:
        theta = model.check_theta(theta)
    elif theta is None:
        theta = model.theta
    if model.spatial:
        raise InvalidInputError("theoretical_wv_1d needs a temporal model")
    nu = np.zeros(len(scales))
    for comp, blk in zip(model.components, model.blocks):
        nu += component_wv_1d(comp, theta[blk], scales)
    return TheoreticalWv(list(scales), nu)


@lru_cache(maxsize=16)
def _pair_geometry(pairs):
    """Flattened lag weights and distances for every pair, plus segment starts."""
    weights, dists, starts = [], [], []
    pos = 0
    for pair in pairs:
        # isotropy: (j1, j2) and (j2, j1) share the same weights per distance,
        # so both are evaluated through the sorted pair (bitwise symmetric)
        j1, j2 = sorted(pair)
        a1 = haar_autocorr(j1)
        a2 = haar_autocorr(j2)
        f1 = np.concatenate([a1[:0:-1], a1])
        f2 = np.concatenate([a2[:0:-1], a2])
        k1 = np.arange(-(a1.size - 1), a1.size)
        k2 = np.arange(-(a2.size - 1), a2.size)
        w = np.outer(f1, f2).ravel()
        d = np.hypot(k1[:, None], k2[None, :]).ravel()
        starts.append(pos)
        pos += w.size
        weights.append(w)
        dists.append(d)
    out = (np.concatenate(weights), np.concatenate(dists), np.asarray(starts))
    for arr in out:
        arr.flags.writeable = False
    return out


def component_wv_2d(comp, v, pairs):
    w, d, starts = _pair_geometry(tuple(tuple(p) for p in pairs))
    return np.add.reduceat(w * comp.covariance(v, d), starts)


def theoretical_wv_2d(model, pairs, theta=None, check=True):
    """WV implied by an isotropic spatial model at the given scale pairs.

    Exact sum of ``h(u) h(u') C(|u - u'|)`` over the separable filter support,
    arranged as a sum over lag vectors.
    """
    if check:
        theta = model.check_theta(theta)
    elif theta is None:
        theta = model.theta
    if not model.spatial:
        raise InvalidInputError("theoretical_wv_2d needs spatial components only")
    pairs = [tuple(int(x) for x in p) for p in pairs]
    nu = np.zeros(len(pairs))
    for comp, blk in zip(model.components, model.blocks):
        nu += component_wv_2d(comp, theta[blk], pairs)
    return TheoreticalWv(pairs, nu)


def model_wv(model, scales, theta=None, check=True):
    """Dispatch to the 1D or 2D implied WV; returns the ``nu`` array."""
    if model.spatial:
        return theoretical_wv_2d(model, scales, theta, check).nu_theta
    return theoretical_wv_1d(model, list(scales), theta, check).nu_theta


def unit_wv(comp, v, scales, spatial):
    """WV of ``comp`` with its variance parameter set to 1."""
    v = np.array(v, dtype=float)
    v[comp.scale_index] = 1.0
    if spatial:
        return component_wv_2d(comp, v, [tuple(p) for p in scales])
    return component_wv_1d(comp, v, [int(j) for j in scales])


def wv_jacobian(model, scales, theta=None, free_only=True):
    """Central finite-difference Jacobian of the implied WV in natural space.

    Step ``h_i = max(1e-6, 1e-6 |theta_i|)``, halved (up to 30 times) while
    ``theta +/- h`` leaves the admissible region.
    """
    theta = model.check_theta(theta)
    cols = np.flatnonzero(model.free) if free_only else np.arange(model.n_params)
    D = np.empty((len(scales), cols.size))
    for out, i in enumerate(cols):
        h = max(1e-6, 1e-6 * abs(theta[i]))
        for _ in range(30):
            up = theta.copy()
            dn = theta.copy()
            up[i] += h
            dn[i] -= h
            if model.is_valid(up) and model.is_valid(dn):
                break
            h *= 0.5
        else:
            raise NumericalFailureError(
                f"cannot take a finite difference for parameter {i} at {theta[i]}")
        D[:, out] = (model_wv(model, scales, up, check=False)
                     - model_wv(model, scales, dn, check=False)) / (2.0 * h)
    return D


__all__ = [
    "TheoreticalWv",
    "UnsupportedError",
    "haar_autocorr",
    "theoretical_acf",
    "theoretical_wv_1d",
    "theoretical_wv_2d",
    "model_wv",
    "unit_wv",
    "rw_wv",
    "wv_jacobian",
]
