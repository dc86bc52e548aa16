"""Minimum-distance estimation on wavelet variances (GMWM and its robust form).

    theta_hat = argmin (nu_hat - nu(theta))' Omega (nu_hat - nu(theta))

``nu_hat`` is the classical or Tukey M-estimate of the WV and ``nu(theta)``
the model-implied WV. The robust flavour only differs in ``nu_hat`` and in
the covariance ``V`` of ``nu_hat`` used for ``Omega`` and for inference.
"""

import itertools
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize, stats
from sklearn.base import BaseEstimator

from .exceptions import (IdentifiabilityError, InvalidInputError, NoSolutionError,
                         NumericalFailureError)
from .models import ModelSpec, model_wv, simulate, unit_wv, wv_jacobian
from .models.components import AR1, _Spatial
from .wavelet import (WaveletCoefficients1D, WaveletCoefficients2D, max_scale_pairs_2d,
                      max_scales_1d, modwt2d_haar, modwt_haar)
from .wv import (CLASSICAL, WvEstimate, estimate_V, estimate_wv, tukey_weight,
                 tuning_for_efficiency, wv_robust)

__all__ = [
    "WeightingMatrix",
    "FitResult",
    "JTestResult",
    "GMWM",
    "build_omega",
    "gmwm_objective",
    "starting_values",
    "nelder_mead",
    "param_covariance",
    "fit",
    "jtest_bootstrap",
    "observation_weights",
    "format_report",
    "worker_count",
]

OMEGA_KINDS = ("identity", "diag", "full")
FLAG_THRESHOLD = 0.1


def worker_count():
    """Worker processes for replicate fan-out (``RGMWM_WORKERS``, default 1)."""
    try:
        return max(1, int(os.environ.get("RGMWM_WORKERS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class WeightingMatrix:
    kind: str
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidInputError("weighting matrix must be square")
        if not np.allclose(m, m.T, rtol=1e-12, atol=0.0):
            raise InvalidInputError("weighting matrix must be symmetric")
        if np.linalg.eigvalsh(m).min() <= 0:
            raise InvalidInputError("weighting matrix must be positive definite")

    def scaled(self, factor):
        return WeightingMatrix(self.kind, self.matrix * factor)


def build_omega(kind, V_asym):
    """Weighting matrix of the given kind from the asymptotic WV covariance."""
    V_asym = np.asarray(V_asym, dtype=float)
    n = V_asym.shape[0]
    if kind == "identity":
        return WeightingMatrix(kind, np.eye(n))
    if kind == "diag":
        d = np.diag(V_asym)
        if np.any(d <= 0) or not np.all(np.isfinite(d)):
            raise NumericalFailureError("WV covariance has a non-positive diagonal")
        return WeightingMatrix(kind, np.diag(1.0 / d))
    if kind == "full":
        V = V_asym
        if np.linalg.cond(V) > 1e12:
            V = V + 1e-8 * np.trace(V) / n * np.eye(n)
        W = linalg.inv(V)
        return WeightingMatrix(kind, 0.5 * (W + W.T))
    raise InvalidInputError(f"omega must be one of {OMEGA_KINDS}, got {kind!r}")


def gmwm_objective(theta, nu_hat, model, omega, scales=None):
    """Quadratic distance between estimated and implied WV."""
    nu_hat = np.asarray(nu_hat, dtype=float)
    W = omega.matrix if isinstance(omega, WeightingMatrix) else np.asarray(omega, float)
    if scales is None:
        scales = list(range(1, nu_hat.size + 1))
    if W.shape != (nu_hat.size, nu_hat.size) or len(scales) != nu_hat.size:
        raise InvalidInputError("dimension mismatch between nu_hat, scales and omega")
    r = nu_hat - model_wv(model, scales, theta)
    return float(r @ W @ r)


# ---------------------------------------------------------------- optimizer
def nelder_mead(f, x0, step=0.5, xatol=1e-6, frtol=1e-9, maxfev=None,
                deadline=None):
    """Nelder-Mead simplex minimisation.

    Termination requires both a simplex diameter below ``xatol`` and a
    spread of objective values below ``frtol * |f_best|`` (plus a floor
    relative to the initial simplex). All decisions compare objective
    values, so scaling ``f`` by a positive power of two leaves the path
    unchanged.

    Returns
    -------
    x, fx, nfev, converged
    """
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    if maxfev is None:
        maxfev = 600 * max(n, 1)
    sim = np.vstack([x0] + [x0 + step * e for e in np.eye(n)])
    fs = np.array([f(x) for x in sim])
    nfev = n + 1
    f_floor = 1e-13 * float(np.max(np.abs(fs)))
    converged = False
    while nfev < maxfev:
        order = np.argsort(fs, kind="stable")
        sim, fs = sim[order], fs[order]
        if (np.max(np.abs(sim[1:] - sim[0])) <= xatol
                and fs[-1] - fs[0] <= frtol * abs(fs[0]) + f_floor):
            converged = True
            break
        if deadline is not None and time.perf_counter() > deadline:
            break
        centroid = sim[:-1].mean(axis=0)
        xr = centroid + (centroid - sim[-1])
        fr = f(xr)
        nfev += 1
        if fr < fs[0]:
            xe = centroid + 2.0 * (centroid - sim[-1])
            fe = f(xe)
            nfev += 1
            if fe < fr:
                sim[-1], fs[-1] = xe, fe
            else:
                sim[-1], fs[-1] = xr, fr
        elif fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
        else:
            if fr < fs[-1]:
                xc = centroid + 0.5 * (xr - centroid)
            else:
                xc = centroid + 0.5 * (sim[-1] - centroid)
            fc = f(xc)
            nfev += 1
            if fc < min(fr, fs[-1]):
                sim[-1], fs[-1] = xc, fc
            else:
                sim[1:] = sim[0] + 0.5 * (sim[1:] - sim[0])
                fs[1:] = [f(x) for x in sim[1:]]
                nfev += n
    best = int(np.argmin(fs))
    return sim[best], float(fs[best]), nfev, converged


# ----------------------------------------------------------- starting values
def _omega_root(W):
    # W = R' R so that r' W r = |R r|^2
    if np.count_nonzero(W - np.diag(np.diag(W))) == 0:
        return np.diag(np.sqrt(np.diag(W)))
    return linalg.cholesky(W, lower=False)


def _shape_options(comp, nu_hat, scales):
    shape_idx = [i for i in range(comp.n_params) if i != comp.scale_index]
    fixed_shape = not np.any(comp.free[shape_idx]) if shape_idx else True
    if fixed_shape:
        return [comp.values[shape_idx]]
    return comp.shape_grid(nu_hat, scales)


def _exchangeable_ok(model, shapes):
    # latent copies of the same kind are interchangeable: keep one ordering
    for a, b in itertools.combinations(range(len(model.components)), 2):
        ca, cb = model.components[a], model.components[b]
        if (ca.structure() == cb.structure() and isinstance(ca, (AR1, _Spatial))
                and ca.free.all() and cb.free.all()):
            if not shapes[a][0] > shapes[b][0]:
                return False
    return True


def starting_values(nu_hat, model, scales=None, omega=None, n_seeds=18,
                    extra=()):
    """Multi-start seeds for the optimizer.

    Shape parameters (AR coefficients, spatial ranges) come from a grid
    tied to the available scales; the variance of every component then
    follows from a non-negative least-squares fit of the implied WV to
    ``nu_hat`` (the implied WV is linear in each component variance). The
    ``n_seeds`` best candidates are returned, best first.

    Returns
    -------
    list of (theta, objective)
    """
    nu_hat = np.asarray(nu_hat, dtype=float)
    if scales is None:
        scales = list(range(1, nu_hat.size + 1))
    W = np.eye(nu_hat.size) if omega is None else (
        omega.matrix if isinstance(omega, WeightingMatrix) else np.asarray(omega))
    R = _omega_root(W)
    comps = model.components
    options = [_shape_options(c, nu_hat, scales) for c in comps]
    theta_fixed = model.theta
    free = model.free
    candidates = []
    for shapes in itertools.product(*options):
        if not _exchangeable_ok(model, shapes):
            continue
        cols, fixed_part = [], np.zeros(nu_hat.size)
        solve_for = []
        trial = []
        ok = True
        for k, (comp, blk, shape) in enumerate(zip(comps, model.blocks, shapes)):
            v = comp.with_shape(shape, 1.0)
            if not comp.valid(v):
                ok = False
                break
            u = unit_wv(comp, v, scales, model.spatial)
            var_fixed = not free[blk][comp.scale_index]
            if var_fixed:
                fixed_part += u * theta_fixed[blk][comp.scale_index]
            else:
                cols.append(u)
                solve_for.append(k)
            trial.append(v)
        if not ok:
            continue
        if cols:
            A = R @ np.column_stack(cols)
            s, _ = optimize.nnls(A, R @ (nu_hat - fixed_part))
            total = float(np.sum(s))
            floor = 1e-3 * total if total > 0 else 1e-3 * float(np.mean(nu_hat))
            s = np.maximum(s, floor)
            for k, val in zip(solve_for, s):
                trial[k][comps[k].scale_index] = val
        theta = np.concatenate(trial)
        theta = np.where(free, theta, theta_fixed)
        if not model.is_valid(theta):
            continue
        r = nu_hat - model_wv(model, scales, theta, check=False)
        candidates.append((theta, float(r @ W @ r)))
    for theta in extra:
        theta = np.asarray(theta, dtype=float)
        if model.is_valid(theta):
            r = nu_hat - model_wv(model, scales, theta, check=False)
            candidates.append((theta, float(r @ W @ r)))
    if not candidates:
        raise NumericalFailureError("no admissible starting value found")
    candidates.sort(key=lambda c: c[1])
    return candidates[:n_seeds]


# ----------------------------------------------------------------- results
@dataclass
class FitResult:
    """Outcome of one GMWM / RGMWM fit.

    ``param_cov`` and ``ci`` refer to the free parameters, in the order of
    ``free_names``.
    """

    model: ModelSpec
    theta_hat: np.ndarray
    param_names: list
    free: np.ndarray
    objective: float
    omega: WeightingMatrix
    param_cov: np.ndarray
    ci: np.ndarray
    level: float
    converged: bool
    iterations: int
    wall_time: float
    wv: WvEstimate
    scales: list
    data_shape: tuple
    robust: bool
    efficiency: float
    omega_kind: str
    seeds: list = field(default_factory=list)
    weights: np.ndarray = None
    message: str = ""
    covariance: str = None

    @property
    def n_min(self):
        return self.wv.n_min

    @property
    def free_names(self):
        return [n for n, f in zip(self.param_names, self.free) if f]

    @property
    def theta_free(self):
        return self.theta_hat[self.free]

    @property
    def std_errors(self):
        return np.sqrt(np.clip(np.diag(self.param_cov), 0.0, None))

    @property
    def jstat(self):
        return self.n_min * self.objective

    @property
    def implied_wv(self):
        return model_wv(self.model, self.scales, self.theta_hat, check=False)

    @property
    def flagged(self):
        if self.weights is None:
            return np.zeros(0, dtype=int)
        return np.flatnonzero(np.ravel(self.weights) < FLAG_THRESHOLD)

    def options(self):
        omega = self.omega_kind if self.omega_kind in OMEGA_KINDS else self.omega
        opts = dict(robust=self.robust, efficiency=self.efficiency,
                    omega=omega, level=self.level)
        if len(self.data_shape) == 1:
            opts["J"] = max(self.scales)
        return opts


@dataclass
class JTestResult:
    statistic: float
    p_value: float
    replicates: int
    null_sample: np.ndarray
    failures: int = 0


# ------------------------------------------------------------------ fitting
def param_covariance(D, V_asym, omega, n_min):
    """Sandwich covariance ``B V B' / N_J`` with ``B = (D'WD)^-1 D'W``."""
    D = np.atleast_2d(np.asarray(D, dtype=float))
    W = omega.matrix if isinstance(omega, WeightingMatrix) else np.asarray(omega, float)
    if np.linalg.matrix_rank(D) < D.shape[1]:
        raise IdentifiabilityError("WV Jacobian is rank deficient")
    H = D.T @ W @ D
    B = linalg.solve(H, D.T @ W, assume_a="sym")
    C = B @ np.asarray(V_asym, dtype=float) @ B.T / float(n_min)
    return 0.5 * (C + C.T)


def _canonical_order(model, theta):
    # exchangeable latent copies are reported by decreasing first parameter
    theta = theta.copy()
    groups = {}
    for k, c in enumerate(model.components):
        if isinstance(c, (AR1, _Spatial)) and c.free.all():
            groups.setdefault(c.structure(), []).append(k)
    for members in groups.values():
        if len(members) < 2:
            continue
        blocks = [theta[model.blocks[k]].copy() for k in members]
        blocks.sort(key=lambda b: -b[0])
        for k, b in zip(members, blocks):
            theta[model.blocks[k]] = b
    return theta


def _decompose(x, J=None, pairs=None):
    if x.ndim == 2 and min(x.shape) > 1:
        return modwt2d_haar(x, pairs)
    return modwt_haar(x.ravel(), J)


def _estimate_usable(coeffs, score, level, n_free):
    """WV estimate on the scales whose robust estimating equation has a root.

    With strongly dependent coefficients at coarse scales the Tukey equation
    can lack a root. Such scales are removed: the coarsest ones by
    truncating ``J`` for a series, individual pairs for a lattice.
    """
    dropped = []
    if not score.is_classical:
        bad = []
        for s in coeffs.scales:
            try:
                wv_robust(coeffs[s], score)
            except NoSolutionError:
                bad.append(s)
        if bad:
            if isinstance(coeffs, WaveletCoefficients1D):
                keep = min(bad) - 1
                dropped = coeffs.scales[keep:]
                coeffs = WaveletCoefficients1D(coeffs.coefficients[:keep], coeffs.n)
            else:
                dropped = bad
                coeffs = WaveletCoefficients2D(
                    {p: w for p, w in coeffs.coefficients.items() if p not in bad},
                    coeffs.shape)
    if len(coeffs.scales) < n_free:
        if dropped:
            raise NoSolutionError(
                f"robust WV has no solution at scales {dropped}; "
                f"{len(coeffs.scales)} scales remain for {n_free} parameters")
        raise IdentifiabilityError(
            f"{len(coeffs.scales)} scales cannot identify {n_free} parameters")
    return estimate_wv(coeffs=coeffs, score=score, level=level), coeffs, dropped


def _prepare(data, model):
    if isinstance(model, str):
        model = ModelSpec.parse(model)
    x = np.asarray(data, dtype=float)
    spatial_data = x.ndim == 2 and min(x.shape) > 1
    if spatial_data != model.spatial:
        raise InvalidInputError(
            "spatial models need lattice data and temporal models need a series")
    if not spatial_data:
        x = x.ravel()
    return x, model


COVARIANCE_METHODS = ("bootstrap", "plug-in")


def fit(data, model, robust=True, efficiency=0.6, omega="diag", level=0.95,
        J=None, n_seeds=18, restarts=2, extra_seeds=(), time_budget=None,
        weights=True, covariance="bootstrap", B=100, seed=0):
    """Estimate the free parameters of ``model`` from ``data``.

    Parameters
    ----------
    data : array-like
        Series (1D) or lattice field (2D).
    model : ModelSpec or str
    robust : bool
        Use the Tukey M-estimator of the WV.
    efficiency : float
        Gaussian efficiency of the robust WV estimator; 1 is classical.
    omega : {"identity", "diag", "full"} or WeightingMatrix
        Kind of weighting matrix built from the WV covariance, or a fixed
        matrix matching the number of scales.
    level : float
        Confidence level of the Wald intervals.
    time_budget : float, optional
        Seconds after which the optimizer stops; the fit is then flagged
        as not converged.
    weights : bool
        Compute per-observation weights for robust fits.
    covariance : {"bootstrap", "plug-in"} or None
        Source of the WV covariance in the parameter covariance
        ``B V Bt / N_J``. ``bootstrap`` simulates ``B`` replicates from the
        fitted model (seeded by ``seed``); ``plug-in`` reuses the HAC
        estimate that defines ``omega``; ``None`` skips inference.

    Returns
    -------
    FitResult
    """
    t0 = time.perf_counter()
    if covariance is not None and covariance not in COVARIANCE_METHODS:
        raise InvalidInputError(f"covariance must be one of {COVARIANCE_METHODS} or None")
    x, model = _prepare(data, model)
    score = tuning_for_efficiency(efficiency) if robust else CLASSICAL
    coeffs = _decompose(x, J)
    est, coeffs, dropped = _estimate_usable(coeffs, score, level, model.n_free)
    scales = coeffs.scales
    if est.degenerate:
        raise NumericalFailureError(f"degenerate WV at scales {est.degenerate}")
    V_asym = est.asymptotic_cov
    if isinstance(omega, WeightingMatrix):
        if omega.matrix.shape != (len(scales), len(scales)):
            raise InvalidInputError(
                f"omega must be {len(scales)} x {len(scales)}, got {omega.matrix.shape}")
        W = omega
    else:
        W = build_omega(omega, V_asym)
    nu_hat = est.nu_hat
    seeds = starting_values(nu_hat, model, scales, W, n_seeds, extra_seeds)

    free = model.free
    base_theta = seeds[0][0]
    base_z = model.to_unbounded(base_theta)
    Wm = W.matrix
    fixed_vals = model.theta

    def to_theta(zf):
        z = base_z.copy()
        z[free] = zf
        theta = model.from_unbounded(z)
        return np.where(free, theta, fixed_vals)

    def objective(zf):
        theta = to_theta(zf)
        if not np.all(np.isfinite(theta)) or not model.is_valid(theta):
            return math.inf
        r = nu_hat - model_wv(model, scales, theta, check=False)
        val = float(r @ Wm @ r)
        return val if math.isfinite(val) else math.inf

    deadline = None if time_budget is None else t0 + float(time_budget)
    zf = base_z[free]
    fval = objective(zf)
    nfev_total = 0
    converged = False
    step = 0.5
    for attempt in range(1 + restarts):
        zf_new, f_new, nfev, conv = nelder_mead(objective, zf, step=step,
                                                deadline=deadline)
        nfev_total += nfev
        if f_new <= fval:
            zf, fval = zf_new, f_new
        converged = conv
        step = 0.1
        if deadline is not None and time.perf_counter() > deadline:
            converged = False
            break
    theta_hat = to_theta(zf)
    message = "ok" if converged else "optimizer did not meet its tolerance"
    if dropped:
        message += f"; scales {dropped} dropped (robust WV equation has no root)"
    if not np.isfinite(fval):
        converged, message = False, "non-finite objective"
    elif model.at_bound(theta_hat):
        converged, message = False, "estimate on the boundary of the parameter space"
    theta_hat = _canonical_order(model, theta_hat)
    fitted = model.with_theta(theta_hat)

    n_min = est.n_min
    cov = np.full((model.n_free, model.n_free), np.nan)
    if covariance is not None:
        try:
            D = wv_jacobian(fitted, scales)
            V_cov = V_asym
            if covariance == "bootstrap":
                V_cov = n_min * estimate_V(coeffs, nu_hat, score, "bootstrap",
                                           model=fitted.fixed(), B=B, seed=seed)
            cov = param_covariance(D, V_cov, W, n_min)
        except (IdentifiabilityError, NumericalFailureError, InvalidInputError) as exc:
            converged, message = False, str(exc)
    z = stats.norm.ppf(0.5 * (1.0 + level))
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    ci = np.column_stack([theta_hat[free] - z * se, theta_hat[free] + z * se])

    result = FitResult(
        model=fitted, theta_hat=theta_hat, param_names=model.param_names,
        free=free, objective=fval, omega=W, param_cov=cov, ci=ci, level=level,
        converged=bool(converged), iterations=nfev_total, wall_time=0.0, wv=est,
        scales=list(scales), data_shape=x.shape, robust=bool(robust and not score.is_classical),
        efficiency=float(efficiency) if robust else 1.0, omega_kind=W.kind,
        seeds=seeds, message=message, covariance=covariance)
    if result.robust and weights:
        result.weights = observation_weights(x, result)
    result.wall_time = time.perf_counter() - t0
    return result


# ------------------------------------------------------------------ J-test
def _jtest_replicate(payload):
    model_text, sim_text, size, opts, seed, extra = payload
    x = simulate(ModelSpec.parse(sim_text), size, np.random.default_rng(seed))
    try:
        res = fit(x, ModelSpec.parse(model_text), extra_seeds=[extra],
                  weights=False, covariance=None, **opts)
    except Exception:  # noqa: BLE001 - any refit failure counts against the test
        return None
    return res.jstat if res.converged else None


def jtest_bootstrap(result, B=99, seed=None, n_workers=None):
    """Parametric-bootstrap J-test of model adequacy.

    ``B`` datasets are simulated from the fitted model and refitted with
    the same options; the p-value is ``(1 + #{J_b >= J_obs}) / (B + 1)``
    over the successful replicates.
    """
    B = int(B)
    if B < 1:
        raise InvalidInputError("B must be positive")
    if not result.converged:
        raise InvalidInputError("J-test needs a converged fit")
    # refits estimate the same free parameters as the original fit
    model_text = result.model.template()
    sim_text = result.model.to_string()
    opts = result.options()
    size = result.data_shape if len(result.data_shape) == 2 else result.data_shape[0]
    streams = np.random.SeedSequence(seed).spawn(B)
    jobs = [(model_text, sim_text, size, opts, ss, result.theta_hat) for ss in streams]
    n_workers = worker_count() if n_workers is None else n_workers
    if n_workers > 1:
        with ProcessPoolExecutor(n_workers) as pool:
            stats_ = list(pool.map(_jtest_replicate, jobs))
    else:
        stats_ = [_jtest_replicate(j) for j in jobs]
    ok = np.array([s for s in stats_ if s is not None])
    failures = B - ok.size
    if failures > 0.2 * B:
        raise NumericalFailureError(
            f"{failures} of {B} bootstrap refits failed")
    obs = result.jstat
    p = (1.0 + np.count_nonzero(ok >= obs)) / (ok.size + 1.0)
    return JTestResult(obs, float(p), int(ok.size), ok, failures)


# ------------------------------------------------------ observation weights
def _cover_max(w, length, axis):
    # max over the coefficients (window ``length`` along ``axis``) covering each point
    pad = [(0, 0)] * w.ndim
    pad[axis] = (length - 1, length - 1)
    padded = np.pad(w, pad, constant_values=-np.inf)
    win = np.lib.stride_tricks.sliding_window_view(padded, length, axis=axis)
    return win.max(axis=-1)


def observation_weights(data, result):
    """Per-observation robustness weights in ``[0, 1]`` from a robust fit.

    Each scale-1 and scale-2 coefficient gets the weight
    ``w_c(W / sqrt(nu_hat))**2``. An observation takes, at each of these
    scales, the largest weight among the coefficients covering it, and its
    final weight is the smallest of those per-scale values. A single
    outlying observation therefore zeroes its own weight without dragging
    down its clean neighbours.
    """
    if not result.robust:
        raise InvalidInputError("observation weights need a robust fit")
    score = tuning_for_efficiency(result.efficiency)
    x = np.asarray(data, dtype=float)
    nu = dict(zip([tuple(s) if isinstance(s, tuple) else s for s in result.scales],
                  result.wv.nu_hat))
    if x.ndim == 2 and min(x.shape) > 1:
        pairs = [p for p in nu if max(p) <= 2]
        coeffs = modwt2d_haar(x, pairs)
        out = np.ones_like(x)
        for p in pairs:
            w = tukey_weight(coeffs[p] / math.sqrt(nu[p]), score.c) ** 2
            w = _cover_max(_cover_max(w, 2 ** p[0], 0), 2 ** p[1], 1)
            out = np.minimum(out, w)
        return out
    x = x.ravel()
    levels = [j for j in (1, 2) if j in nu and j <= max_scales_1d(x.size)]
    coeffs = modwt_haar(x, max(levels))
    out = np.ones(x.size)
    for j in levels:
        w = tukey_weight(coeffs[j] / math.sqrt(nu[j]), score.c) ** 2
        out = np.minimum(out, _cover_max(w, 2 ** j, 0))
    return out


# ------------------------------------------------------------------ report
def format_report(result, jtest=None, title=None):
    """Plain-text report: header fields, then estimate and CI per parameter."""
    lines = []
    flavor = "RGMWM" if result.robust else "GMWM"
    lines.append(f"# {title or flavor + ' fit'}")
    lines.append(f"model: {result.model.to_string()}")
    lines.append(f"estimator: {flavor}")
    if result.robust:
        lines.append(f"efficiency: {result.efficiency:g}")
    lines.append(f"omega: {result.omega_kind}")
    lines.append(f"scales: {len(result.scales)}")
    lines.append(f"objective: {result.objective:.10g}")
    lines.append(f"converged: {'yes' if result.converged else 'no'}")
    if result.message and result.message != "ok":
        lines.append(f"message: {result.message}")
    if result.covariance:
        lines.append(f"covariance: {result.covariance}")
    lines.append(f"iterations: {result.iterations}")
    lines.append(f"wall_time_s: {result.wall_time:.4g}")
    if jtest is not None:
        lines.append(f"jtest_statistic: {jtest.statistic:.10g}")
        lines.append(f"jtest_p_value: {jtest.p_value:.6g}")
        lines.append(f"jtest_replicates: {jtest.replicates}")
    lines.append("")
    pct = f"{100 * result.level:g}%"
    header = f"{'parameter':<12} {'estimate':>16} {'ci_lo ' + pct:>16} {'ci_hi ' + pct:>16}"
    lines.append(header)
    for name, est, (lo, hi) in zip(result.free_names, result.theta_free, result.ci):
        lines.append(f"{name:<12} {est:>16.8g} {lo:>16.8g} {hi:>16.8g}")
    if result.weights is not None:
        idx = result.flagged
        lines.append("")
        lines.append(f"flagged_observations: {idx.size}")
        w = np.ravel(result.weights)
        for i in idx:
            lines.append(f"{int(i):>8d} {w[i]:.6g}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- estimator
class GMWM(BaseEstimator):
    """Scikit-learn style front end to :func:`fit`.

    Parameters
    ----------
    model : str or ModelSpec
        Model in the spec mini-language, e.g. ``"ar1(rho=?, v2=?)"``.
    robust : bool
        ``True`` gives the RGMWM, ``False`` the classical GMWM.
    efficiency : float
        Gaussian efficiency of the robust WV estimator.
    omega : {"identity", "diag", "full"}
    level : float
        Confidence level of the reported intervals.
    n_seeds : int
        Candidate starting values kept by the seed search.

    Attributes
    ----------
    result_ : FitResult
    theta_ : ndarray
        Estimates of the free parameters.
    model_ : ModelSpec
        Model with the fitted values filled in.
    """

    def __init__(self, model="ar1(rho=?, v2=?)", robust=True, efficiency=0.6,
                 omega="diag", level=0.95, n_seeds=18):
        self.model = model
        self.robust = robust
        self.efficiency = efficiency
        self.omega = omega
        self.level = level
        self.n_seeds = n_seeds

    def fit(self, X, y=None):
        self.result_ = fit(X, self.model, robust=self.robust,
                           efficiency=self.efficiency, omega=self.omega,
                           level=self.level, n_seeds=self.n_seeds)
        self.theta_ = self.result_.theta_free
        self.model_ = self.result_.model
        self.converged_ = self.result_.converged
        return self

    def implied_wv(self):
        return self.result_.implied_wv

    def score(self, X, y=None):
        """Negative GMWM objective of ``X`` at the fitted parameters."""
        x, _ = _prepare(X, self.model_)
        score = tuning_for_efficiency(self.efficiency) if self.robust else CLASSICAL
        est = estimate_wv(x, score, covariance=None,
                          J=len(self.result_.scales) if x.ndim == 1 else None,
                          pairs=self.result_.scales if x.ndim == 2 else None)
        return -gmwm_objective(self.model_.theta, est.nu_hat, self.model_,
                               self.result_.omega, self.result_.scales)
