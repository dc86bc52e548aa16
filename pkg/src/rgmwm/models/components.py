"""Latent model components.

Every component owns a block of the flattened parameter vector. Exactly one
parameter per component is a variance (``scale_index``); the component's
wavelet variance is linear in it, which the starting-value search exploits.
"""

import math

import numpy as np
from scipy.special import expit, logit

from ..exceptions import InvalidInputError, UnsupportedError

STATIONARITY_MARGIN = 1e-8


def pacf_to_coeffs(pacf):
    """Durbin-Levinson map from partial autocorrelations to AR coefficients."""
    pacf = np.asarray(pacf, dtype=float)
    phi = np.zeros(0)
    for k, r in enumerate(pacf):
        phi = np.concatenate([phi - r * phi[::-1], [r]]) if k else np.array([r])
    return phi


def coeffs_to_pacf(phi):
    """Inverse of :func:`pacf_to_coeffs`; requires a stationary polynomial."""
    phi = np.array(phi, dtype=float)
    p = phi.size
    pacf = np.zeros(p)
    for k in range(p - 1, -1, -1):
        r = phi[k]
        pacf[k] = r
        if k == 0:
            break
        if abs(r) >= 1:
            raise InvalidInputError("AR polynomial is not stationary")
        phi = (phi[:k] + r * phi[:k][::-1]) / (1.0 - r * r)
    return pacf


def spectral_radius(phi):
    phi = np.asarray(phi, dtype=float)
    if phi.size == 0:
        return 0.0
    comp = np.zeros((phi.size, phi.size))
    comp[0] = phi
    comp[1:, :-1] = np.eye(phi.size - 1)
    return float(np.max(np.abs(np.linalg.eigvals(comp))))


def _to_interval(z):
    # (-1, 1) via a scaled inverse logistic
    return 2.0 * expit(z) - 1.0


def _from_interval(x):
    return logit(0.5 * (np.asarray(x, dtype=float) + 1.0))


class Component:
    """Base class; subclasses set ``kind``, ``names`` and ``scale_index``."""

    kind = None
    spatial = False
    stationary = True
    names = ()
    scale_index = 0

    def __init__(self, values=None, free=None):
        n = len(self.names)
        if values is None:
            values = [math.nan] * n
        values = np.asarray(values, dtype=float)
        if values.shape != (n,):
            raise InvalidInputError(
                f"{self.kind} expects {n} parameters, got {values.size}")
        self.values = values
        self.free = (np.isnan(values) if free is None
                     else np.asarray(free, dtype=bool))

    @property
    def n_params(self):
        return len(self.names)

    def structure(self):
        """Hashable description of the component shape (excluding values)."""
        return (self.kind,)

    def copy(self, values=None, free=None):
        new = object.__new__(type(self))
        new.__dict__.update(self.__dict__)
        new.values = np.array(self.values if values is None else values, dtype=float)
        new.free = np.array(self.free if free is None else free, dtype=bool)
        return new

    # parameter space -------------------------------------------------
    def bounds(self):
        return [(0.0, math.inf)] * self.n_params

    def valid(self, v):
        lo_hi = self.bounds()
        return all(lo < x < hi for x, (lo, hi) in zip(v, lo_hi))

    def at_bound(self, v, tol=1e-6):
        for x, (lo, hi) in zip(v, self.bounds()):
            if lo == 0.0 and hi == math.inf:
                if x <= tol * 1e-4:
                    return True
            elif (x - lo) <= tol or (hi - x) <= tol:
                return True
        return False

    def to_unbounded(self, v):
        out = []
        for x, (lo, hi) in zip(v, self.bounds()):
            if lo == 0.0 and hi == math.inf:
                out.append(math.log(x))
            else:
                out.append(float(logit((x - lo) / (hi - lo))))
        return np.asarray(out)

    def from_unbounded(self, z):
        out = []
        for u, (lo, hi) in zip(z, self.bounds()):
            if lo == 0.0 and hi == math.inf:
                out.append(math.exp(u))
            else:
                out.append(lo + (hi - lo) * float(expit(u)))
        return np.asarray(out)

    # second-order structure -----------------------------------------
    def acf(self, v, max_lag):
        raise UnsupportedError(f"{self.kind} has no autocovariance function")

    def simulate(self, v, n, rng):
        raise NotImplementedError

    def shape_grid(self, nu_hat, scales):
        """Candidate non-variance parameter blocks for the seed search."""
        return [np.zeros(0)]

    def with_shape(self, shape, variance):
        v = np.empty(self.n_params)
        idx = [i for i in range(self.n_params) if i != self.scale_index]
        v[idx] = shape
        v[self.scale_index] = variance
        return v


class WhiteNoise(Component):
    kind = "wn"
    names = ("s2",)

    def acf(self, v, max_lag):
        g = np.zeros(max_lag + 1)
        g[0] = v[0]
        return g

    def simulate(self, v, n, rng):
        return rng.normal(0.0, math.sqrt(v[0]), n)


class RandomWalk(Component):
    kind = "rw"
    names = ("g2",)
    stationary = False

    def simulate(self, v, n, rng):
        return np.cumsum(rng.normal(0.0, math.sqrt(v[0]), n))


class AR1(Component):
    kind = "ar1"
    names = ("rho", "v2")
    scale_index = 1

    def bounds(self):
        return [(-1.0, 1.0), (0.0, math.inf)]

    def acf(self, v, max_lag):
        rho, v2 = v
        if not abs(rho) < 1:
            raise InvalidInputError(f"AR1 needs |rho| < 1, got {rho}")
        return v2 / (1.0 - rho * rho) * np.power(rho, np.arange(max_lag + 1))

    def simulate(self, v, n, rng):
        from scipy.signal import lfilter

        rho, v2 = v
        e = rng.normal(0.0, math.sqrt(v2), n)
        e[0] = rng.normal(0.0, math.sqrt(v2 / (1.0 - rho * rho)))
        return lfilter([1.0], [1.0, -rho], e)

    def shape_grid(self, nu_hat, scales):
        # decorrelation times spread over the available scales
        taus = [2.0 ** (j - 1) for j in scales]
        return [np.array([r]) for r in
                sorted({round(1.0 - 1.0 / (2.0 * t), 6) for t in taus} | {0.0, -0.5})]


class ARMA(Component):
    """ARMA(p, q): ``X_t - sum ar_i X_{t-i} = e_t + sum ma_k e_{t-k}``."""

    kind = "arma"

    def __init__(self, p, q, values=None, free=None):
        self.p, self.q = int(p), int(q)
        self.names = (tuple(f"ar{i + 1}" for i in range(self.p))
                      + tuple(f"ma{k + 1}" for k in range(self.q)) + ("s2",))
        self.scale_index = self.p + self.q
        super().__init__(values, free)
        for blk in (slice(0, self.p), slice(self.p, self.p + self.q)):
            f = self.free[blk]
            if f.size > 1 and f.any() and not f.all():
                raise InvalidInputError(
                    "ARMA coefficient blocks must be entirely free or entirely fixed")

    def structure(self):
        return (self.kind, self.p, self.q)

    def split(self, v):
        v = np.asarray(v, dtype=float)
        return v[:self.p], v[self.p:self.p + self.q], v[-1]

    def bounds(self):
        return [(-math.inf, math.inf)] * (self.p + self.q) + [(0.0, math.inf)]

    def valid(self, v):
        ar, ma, s2 = self.split(v)
        if not s2 > 0 or not np.all(np.isfinite(v)):
            return False
        if spectral_radius(ar) >= 1.0 - STATIONARITY_MARGIN:
            return False
        return spectral_radius(-ma) < 1.0

    def at_bound(self, v, tol=1e-6):
        ar, ma, s2 = self.split(v)
        return (s2 <= tol * 1e-4 or spectral_radius(ar) >= 1.0 - tol
                or spectral_radius(-ma) >= 1.0 - tol)

    def to_unbounded(self, v):
        ar, ma, s2 = self.split(v)
        return np.concatenate([_from_interval(coeffs_to_pacf(ar)),
                               _from_interval(coeffs_to_pacf(-ma)),
                               [math.log(s2)]])

    def from_unbounded(self, z):
        z = np.asarray(z, dtype=float)
        ar = pacf_to_coeffs(_to_interval(z[:self.p]))
        ma = -pacf_to_coeffs(_to_interval(z[self.p:self.p + self.q]))
        return np.concatenate([ar, ma, [math.exp(z[-1])]])

    def acf(self, v, max_lag):
        from scipy.signal import lfilter, lfiltic

        ar, ma, s2 = self.split(v)
        p, q = self.p, self.q
        if spectral_radius(ar) >= 1.0 - STATIONARITY_MARGIN:
            raise InvalidInputError("ARMA parameters are not stationary")
        theta = np.concatenate([[1.0], ma])
        psi = np.zeros(q + 1)
        psi[0] = 1.0
        for k in range(1, q + 1):
            psi[k] = theta[k] + sum(ar[i - 1] * psi[k - i]
                                    for i in range(1, min(k, p) + 1))
        # right-hand side c_h = s2 * sum_{k>=h} theta_k psi_{k-h}
        rhs = np.array([s2 * np.dot(theta[h:], psi[:q + 1 - h]) if h <= q else 0.0
                        for h in range(max(p, q) + 1)])
        A = np.zeros((p + 1, p + 1))
        for h in range(p + 1):
            A[h, h] += 1.0
            for i in range(1, p + 1):
                A[h, abs(h - i)] -= ar[i - 1]
        head = np.linalg.solve(A, rhs[:p + 1]) if p else rhs[:1].copy()
        m = max(p, q)
        g = np.zeros(max(max_lag, m) + 1)
        g[:p + 1] = head
        for h in range(p + 1, m + 1):
            g[h] = np.dot(ar, g[h - 1::-1][:p]) + rhs[h]
        if max_lag > m:
            if p:
                zi = lfiltic([1.0], np.concatenate([[1.0], -ar]), g[m::-1][:p])
                g[m + 1:], _ = lfilter([1.0], np.concatenate([[1.0], -ar]),
                                       np.zeros(max_lag - m), zi=zi)
        return g[:max_lag + 1]

    def simulate(self, v, n, rng):
        from scipy.signal import lfilter

        ar, ma, s2 = self.split(v)
        r = spectral_radius(ar)
        burn = max(50, 10 * int(math.ceil(1.0 / max(1.0 - r, 1e-3)))) + self.q
        e = rng.normal(0.0, math.sqrt(s2), n + burn)
        x = lfilter(np.concatenate([[1.0], ma]), np.concatenate([[1.0], -ar]), e)
        return x[burn:]

    def shape_grid(self, nu_hat, scales):
        grid = []
        ar_opts = [np.zeros(self.p)]
        ma_opts = [np.zeros(self.q)]
        if self.p:
            for r in (0.5, 0.8, -0.5, 0.2):
                ar_opts.append(pacf_to_coeffs(np.r_[r, np.full(self.p - 1, 0.1 * np.sign(r))]))
        if self.q:
            for r in (0.4, -0.4):
                ma_opts.append(-pacf_to_coeffs(np.r_[-r, np.zeros(self.q - 1)]))
        for a in ar_opts:
            for m in ma_opts:
                grid.append(np.concatenate([a, m]))
        return grid


class _Spatial(Component):
    spatial = True
    names = ("phi", "s2")
    scale_index = 1

    def correlation(self, d, phi):
        raise NotImplementedError

    def covariance(self, v, d):
        return v[1] * self.correlation(d, v[0])

    def shape_grid(self, nu_hat, scales):
        return [np.array([r]) for r in (0.5, 1.0, 2.0, 4.0, 8.0)]


class SpatialExp(_Spatial):
    kind = "exp"

    def correlation(self, d, phi):
        return np.exp(-d / phi)


class SpatialGauss(_Spatial):
    kind = "gauss"

    def correlation(self, d, phi):
        return np.exp(-(d / phi) ** 2)


REGISTRY = {
    "wn": WhiteNoise,
    "rw": RandomWalk,
    "ar1": AR1,
    "arma": ARMA,
    "exp": SpatialExp,
    "gauss": SpatialGauss,
}
