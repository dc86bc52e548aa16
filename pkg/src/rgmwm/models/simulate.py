"""Exact simulation of temporal and spatial models."""

from functools import lru_cache

import numpy as np
from scipy import linalg

from ..exceptions import InvalidInputError, SizeLimitError

MAX_SPATIAL_CELLS = 4096


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@lru_cache(maxsize=8)
def _field_factor(spec_text, shape):
    from .spec import ModelSpec

    model = ModelSpec.parse(spec_text)
    k, m = shape
    rr, cc = np.meshgrid(np.arange(k), np.arange(m), indexing="ij")
    pts = np.column_stack([rr.ravel(), cc.ravel()]).astype(float)
    d = np.hypot(pts[:, :1] - pts[:, 0], pts[:, 1:] - pts[:, 1])
    C = np.zeros_like(d)
    theta = model.theta
    for comp, blk in zip(model.components, model.blocks):
        C += comp.covariance(theta[blk], d)
    try:
        L = linalg.cholesky(C, lower=True)
    except linalg.LinAlgError:
        # smooth covariances are numerically singular: symmetric square root
        vals, vecs = linalg.eigh(C)
        L = vecs * np.sqrt(np.clip(vals, 0.0, None))
    L.flags.writeable = False
    return L


def simulate(model, size, seed=None, n_draws=None):
    """Draw one realisation (or ``n_draws`` stacked ones) of ``model``.

    Parameters
    ----------
    model : ModelSpec
        Fully specified model (no ``?`` parameters).
    size : int or (K, M)
        Series length, or lattice shape for spatial models.
    seed : int, Generator or None
    n_draws : int, optional
        Spatial only: return an array of shape ``(n_draws, K, M)``.
    """
    theta = model.check_theta()
    rng = _rng(seed)
    if model.spatial:
        k, m = (int(s) for s in np.broadcast_to(size, (2,)))
        if k * m > MAX_SPATIAL_CELLS:
            raise SizeLimitError(
                f"exact spatial simulation is limited to {MAX_SPATIAL_CELLS} cells, "
                f"got {k} x {m}")
        L = _field_factor(model.fixed().to_string(), (k, m))
        count = 1 if n_draws is None else int(n_draws)
        z = rng.standard_normal((k * m, count))
        x = (L @ z).T.reshape(count, k, m)
        return x[0] if n_draws is None else x
    n = int(size)
    if n < 1:
        raise InvalidInputError(f"series length must be positive, got {n}")
    x = np.zeros(n)
    for comp, blk in zip(model.components, model.blocks):
        x += comp.simulate(theta[blk], n, rng)
    return x
