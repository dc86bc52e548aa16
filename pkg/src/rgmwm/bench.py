"""Contamination generators, the RMSE* metric and a Monte Carlo study engine."""

import csv
import io
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgWarning

from .exceptions import InvalidInputError, RGMWMError
from .gmwm import fit, worker_count
from .models import ModelSpec, simulate
from .wavelet import haar_filter

MAD_CONSTANT = 1.4826
CONTAMINATION_KINDS = ("isolated", "patchy", "level_shift", "scale")
FIT_BUDGET = 60.0


# ------------------------------------------------------------ contamination
@dataclass(frozen=True)
class ContaminationSpec:
    """Description of an outlier regime.

    Parameters
    ----------
    kind : {"isolated", "patchy", "level_shift", "scale"}
    epsilon : float
        Fraction of contaminated observations, ``0 <= epsilon < 0.5``.
    sigma2_eps : float, optional
        Variance of the added noise (all kinds except ``level_shift``).
    shifts : tuple of float
        Level shifts ``mu_1, mu_2, ...`` for ``level_shift``.
    j : int, optional
        Wavelet scale of the band-limited noise for ``scale``.
    patch_len : int
        Block length for ``patchy`` (cells per patch on a lattice).
    replace : bool
        For ``isolated``: replace the observation by the noise instead of
        adding it.
    seed : int, optional
        Default seed used when :func:`contaminate` gets none.
    """

    kind: str
    epsilon: float
    sigma2_eps: float = None
    shifts: tuple = ()
    j: int = None
    patch_len: int = 10
    replace: bool = False
    seed: int = None

    def __post_init__(self):
        if self.kind not in CONTAMINATION_KINDS:
            raise InvalidInputError(f"unknown contamination kind {self.kind!r}; "
                                    f"expected one of {CONTAMINATION_KINDS}")
        if not 0.0 <= self.epsilon < 0.5:
            raise InvalidInputError(f"epsilon must lie in [0, 0.5), got {self.epsilon}")
        object.__setattr__(self, "shifts", tuple(float(s) for s in self.shifts))
        if self.kind == "level_shift":
            if not self.shifts:
                raise InvalidInputError("level_shift needs at least one shift value")
        elif self.sigma2_eps is None or not self.sigma2_eps > 0:
            raise InvalidInputError(f"{self.kind} needs sigma2_eps > 0")
        if self.kind == "scale" and (self.j is None or int(self.j) < 1):
            raise InvalidInputError("scale contamination needs a scale j >= 1")
        if int(self.patch_len) < 1:
            raise InvalidInputError("patch_len must be positive")

    def describe(self):
        if self.kind == "level_shift":
            return f"level_shift(eps={self.epsilon}, mu={list(self.shifts)})"
        extra = f"j={self.j}, " if self.kind == "scale" else ""
        if self.kind == "patchy":
            extra = f"len={self.patch_len}, "
        return f"{self.kind}({extra}eps={self.epsilon}, s2={self.sigma2_eps})"


def _split(total, parts):
    """Split ``total`` into ``parts`` near-equal positive integers."""
    base, rem = divmod(total, parts)
    return [base + (i < rem) for i in range(parts)]


def _place_runs(rng, n, lengths):
    """Disjoint runs with the given lengths at uniformly random places in ``0..n-1``."""
    free = n - sum(lengths)
    gaps = np.sort(rng.integers(0, free + 1, size=len(lengths)))
    order = rng.permutation(len(lengths))
    starts, used = [], 0
    for g, k in zip(gaps, order):
        starts.append((int(g) + used, lengths[k], k))
        used += lengths[k]
    return sorted(starts, key=lambda s: s[2])


def _block_cells(start, count, width, shape):
    r0, c0 = start
    return [(r0 + i // width, c0 + i % width) for i in range(count)]


def _place_patches(rng, shape, counts):
    """Disjoint near-square patches of ``counts`` cells on a ``shape`` lattice."""
    k, m = shape
    taken = np.zeros(shape, dtype=bool)
    patches = []
    for count in counts:
        width = min(m, int(math.ceil(math.sqrt(count))))
        height = int(math.ceil(count / width))
        if height > k:
            raise InvalidInputError("contaminated patch does not fit on the lattice")
        for _ in range(1000):
            start = (int(rng.integers(0, k - height + 1)), int(rng.integers(0, m - width + 1)))
            cells = _block_cells(start, count, width, shape)
            rows, cols = zip(*cells)
            if not taken[rows, cols].any():
                taken[rows, cols] = True
                patches.append(np.ravel_multi_index((rows, cols), shape))
                break
        else:
            raise InvalidInputError("cannot place disjoint contamination patches")
    return patches


def _detail_filter(j):
    """Impulse response of the scale-``j`` Haar detail reconstruction."""
    h = haar_filter(j)
    g = np.convolve(h, h[::-1])
    return g / math.sqrt(float(g @ g))


def _band_noise(rng, shape, j, sigma2):
    """Gaussian noise with variance ``sigma2`` confined to wavelet scale ``j``."""
    g = _detail_filter(j)
    pad = g.size - 1
    if len(shape) == 1:
        e = rng.standard_normal(shape[0] + pad)
        out = np.convolve(e, g, mode="valid")
    else:
        e = rng.standard_normal((shape[0] + pad, shape[1] + pad))
        out = np.apply_along_axis(np.convolve, 0, e, g, mode="valid")
        out = np.apply_along_axis(np.convolve, 1, out, g, mode="valid")
    return math.sqrt(sigma2) * out


def contaminate(data, spec, seed=None):
    """Apply the contamination regime ``spec`` to a series or lattice field.

    Parameters
    ----------
    data : array-like
        1D series or 2D field; never modified in place.
    spec : ContaminationSpec
    seed : int, Generator or None
        Overrides ``spec.seed``.

    Returns
    -------
    out : ndarray
        Contaminated copy of ``data``.
    indices : ndarray of int
        Sorted affected positions (row-major flat indices for a field).

    Notes
    -----
    ``n_c = round(epsilon * N)`` observations are affected. Level shifts
    split ``n_c`` over ``len(shifts)`` disjoint segments (patches on a
    lattice), segment ``i`` being moved by ``shifts[i]``. Scale
    contamination adds a single window of noise passed through the
    scale-``j`` Haar detail reconstruction and rescaled to ``sigma2_eps``.
    """
    x = np.array(data, dtype=float)
    if x.ndim not in (1, 2) or x.size == 0:
        raise InvalidInputError("contaminate expects a non-empty 1D or 2D array")
    n = x.size
    n_c = int(round(spec.epsilon * n))
    if n_c == 0:
        return x, np.zeros(0, dtype=np.intp)
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    flat = x.reshape(-1)
    sd = math.sqrt(spec.sigma2_eps) if spec.sigma2_eps else 0.0

    if spec.kind == "isolated":
        idx = np.sort(rng.choice(n, size=n_c, replace=False))
        noise = rng.normal(0.0, sd, n_c)
        flat[idx] = noise if spec.replace else flat[idx] + noise
        return x, idx.astype(np.intp)

    if spec.kind == "patchy":
        n_blocks = int(math.ceil(n_c / spec.patch_len))
        sizes = _split(n_c, n_blocks)
    elif spec.kind == "level_shift":
        sizes = _split(n_c, len(spec.shifts))
        if min(sizes) < 1:
            raise InvalidInputError("too few contaminated observations for the shifts")
    else:
        sizes = [n_c]

    if x.ndim == 1:
        groups = [np.arange(s, s + k) for s, k, _ in _place_runs(rng, n, sizes)]
    else:
        groups = _place_patches(rng, x.shape, sizes)

    if spec.kind == "patchy":
        for g in groups:
            flat[g] += rng.normal(0.0, sd, g.size)
    elif spec.kind == "level_shift":
        for g, mu in zip(groups, spec.shifts):
            flat[g] += mu
    else:
        g = groups[0]
        if x.ndim == 1:
            flat[g] += _band_noise(rng, (g.size,), int(spec.j), spec.sigma2_eps)
        else:
            rows, cols = np.unravel_index(g, x.shape)
            r0, c0 = rows.min(), cols.min()
            box = _band_noise(rng, (rows.max() - r0 + 1, cols.max() - c0 + 1),
                              int(spec.j), spec.sigma2_eps)
            flat[g] += box[rows - r0, cols - c0]
    idx = np.sort(np.concatenate(groups))
    return x, idx.astype(np.intp)


# ------------------------------------------------------------------ metric
def rmse_star(estimates, theta0):
    """Robust relative error ``sqrt(med(e)**2 + mad(theta_hat / theta0)**2)``.

    ``e = (theta_hat - theta0) / theta0`` and ``mad`` carries the 1.4826
    normal-consistency factor. Non-finite estimates are ignored.
    """
    theta0 = float(theta0)
    if theta0 == 0 or not math.isfinite(theta0):
        raise InvalidInputError("rmse_star needs a finite, non-zero true value")
    est = np.asarray(estimates, dtype=float).ravel()
    est = est[np.isfinite(est)]
    if est.size < 3:
        raise InvalidInputError(f"rmse_star needs at least 3 estimates, got {est.size}")
    rel = est / theta0
    bias = np.median(rel - 1.0)
    mad = MAD_CONSTANT * np.median(np.abs(rel - np.median(rel)))
    return float(math.sqrt(bias * bias + mad * mad))


# ------------------------------------------------------------------ designs
@dataclass(frozen=True)
class Estimator:
    """A named GMWM configuration used in a study."""

    name: str
    robust: bool
    efficiency: float = 0.6
    omega: str = "diag"

    def options(self):
        return dict(robust=self.robust, efficiency=self.efficiency, omega=self.omega)


GMWM_CLASSICAL = Estimator("GMWM", robust=False, efficiency=1.0)
RGMWM = Estimator("RGMWM", robust=True, efficiency=0.6)
DEFAULT_ESTIMATORS = (RGMWM, GMWM_CLASSICAL)


@dataclass(frozen=True)
class Design:
    """Data-generating model, fitted template, sample size and outlier regime."""

    name: str
    truth: str
    size: object
    contamination: ContaminationSpec
    template: str = None

    @property
    def model(self):
        return ModelSpec.parse(self.truth)

    @property
    def fit_model(self):
        if self.template is not None:
            return ModelSpec.parse(self.template)
        m = self.model
        return m.with_theta(np.full(m.n_params, math.nan), np.ones(m.n_params, dtype=bool))

    def with_size(self, size):
        return Design(self.name, self.truth, size, self.contamination, self.template)


DESIGNS = {
    "ar1": Design("AR(1)", "ar1(rho=0.9, v2=1)", 1000,
                  ContaminationSpec("scale", 0.01, 100.0, j=3)),
    "ar2": Design("AR(2)", "arma(ar=[0.5, -0.3], ma=[], s2=1)", 1000,
                  ContaminationSpec("isolated", 0.05, 9.0)),
    "arma12": Design("ARMA(1,2)", "arma(ar=[0.5], ma=[-0.1, 0.5], s2=1)", 1000,
                     ContaminationSpec("level_shift", 0.05, shifts=(5.0, -3.0))),
    "arma31": Design("ARMA(3,1)", "arma(ar=[0.7, 0.3, -0.2], ma=[0.5], s2=2)", 1000,
                     ContaminationSpec("patchy", 0.01, 100.0)),
    "ssm": Design("SSM", "sum(ar1(rho=0.99, v2=0.1), ar1(rho=0.6, v2=2), wn(s2=3))", 1000,
                  ContaminationSpec("isolated", 0.05, 9.0)),
    "exp1": Design("Exp(1)", "exp(phi=2, s2=1)", (30, 30),
                   ContaminationSpec("level_shift", 0.05, shifts=(5.0, -3.0))),
    "exp2": Design("Exp(2)", "sum(exp(phi=2, s2=1), exp(phi=1.5, s2=1))", (30, 30),
                   ContaminationSpec("isolated", 0.01, 100.0)),
    "gauss1": Design("Gauss(1)", "gauss(phi=2, s2=1)", (30, 30),
                     ContaminationSpec("patchy", 0.01, 100.0)),
    "gauss2": Design("Gauss(2)", "sum(gauss(phi=2, s2=1), gauss(phi=1.5, s2=1))", (30, 30),
                     ContaminationSpec("isolated", 0.05, 9.0)),
}


def get_design(name):
    try:
        return DESIGNS[name]
    except KeyError:
        raise InvalidInputError(
            f"unknown design {name!r}; expected one of {sorted(DESIGNS)}") from None


# ------------------------------------------------------------------ engine
@dataclass
class StudyReport:
    """Per-replicate estimates plus the summary statistics derived from them.

    ``estimates[name]`` has shape ``(R, n_free)`` with ``nan`` rows for
    failed fits; ``converged[name]`` and ``times[name]`` have length ``R``.
    Equality ignores wall times, which are not reproducible.
    """

    design: str
    size: object
    replicates: int
    contaminated: bool
    contamination: str
    param_names: list
    truth: np.ndarray
    estimates: dict
    converged: dict
    times: dict
    seed: object = None
    metadata: dict = field(default_factory=dict)

    @property
    def estimator_names(self):
        return list(self.estimates)

    def convergence_rate(self, name):
        return 100.0 * float(np.mean(self.converged[name]))

    def median_time(self, name):
        return float(np.median(self.times[name]))

    def rmse(self, name, param):
        """RMSE* of one parameter over converged replicates, ``nan`` if unavailable."""
        k = self.param_names.index(param) if isinstance(param, str) else int(param)
        ok = self.converged[name]
        if ok.sum() < 3:
            return math.nan
        return rmse_star(self.estimates[name][ok, k], self.truth[k])

    def table(self):
        """Rows ``(estimator, parameter, truth, rmse_star, conv_rate, median_time)``."""
        rows = []
        for name in self.estimator_names:
            for k, p in enumerate(self.param_names):
                rows.append((name, p, float(self.truth[k]), self.rmse(name, k),
                             self.convergence_rate(name), self.median_time(name)))
        return rows

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["design", "sample_size", "contaminated", "estimator", "parameter",
                    "truth", "rmse_star", "conv_rate", "median_time", "replicates"])
        size = "x".join(map(str, np.atleast_1d(self.size)))
        for name, p, t, r, c, mt in self.table():
            w.writerow([self.design, size, int(self.contaminated), name, p, repr(t),
                        "" if math.isnan(r) else f"{r:.17g}", f"{c:.17g}",
                        f"{mt:.17g}", self.replicates])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    def summary(self):
        """Text table with the model, sample size, median time and convergence rate."""
        size = "x".join(map(str, np.atleast_1d(self.size)))
        head = f"{'Estimator':<10} {'Model':<10} {'Sample size':>11} {'Median':>10} {'Conv. rate (%)':>15}"
        lines = [head, "-" * len(head)]
        for name in self.estimator_names:
            lines.append(f"{name:<10} {self.design:<10} {size:>11} "
                         f"{self.median_time(name):>10.3g} {self.convergence_rate(name):>15.1f}")
        lines.append("")
        lines.append(f"{'Estimator':<10} {'Parameter':<10} {'Truth':>10} {'RMSE*':>10}")
        for name, p, t, r, _, _ in self.table():
            rs = "-" if math.isnan(r) else f"{r:.4g}"
            lines.append(f"{name:<10} {p:<10} {t:>10.4g} {rs:>10}")
        return "\n".join(lines)

    def __eq__(self, other):
        if not isinstance(other, StudyReport):
            return NotImplemented
        same = (self.design == other.design and self.replicates == other.replicates
                and self.contaminated == other.contaminated
                and self.param_names == other.param_names
                and np.array_equal(self.truth, other.truth)
                and sorted(self.estimates) == sorted(other.estimates))
        if not same:
            return False
        return all(np.array_equal(self.estimates[k], other.estimates[k], equal_nan=True)
                   and np.array_equal(self.converged[k], other.converged[k])
                   for k in self.estimates)


def _run_replicate(payload):
    truth, template, size, spec, estimators, seed, budget = payload
    rng = np.random.default_rng(seed)
    x = simulate(ModelSpec.parse(truth), size, rng)
    if spec is not None:
        x, _ = contaminate(x, spec, rng)
    out = []
    model = ModelSpec.parse(template)
    for est in estimators:
        t0 = time.perf_counter()
        try:
            # near-singular sandwich matrices are common on weakly identified
            # designs; only the point estimates enter the study
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", LinAlgWarning)
                res = fit(x, model, time_budget=budget, weights=False,
                          covariance="plug-in", **est.options())
            theta, ok = res.theta_free, res.converged
        except RGMWMError:
            theta, ok = np.full(model.n_free, math.nan), False
        elapsed = time.perf_counter() - t0
        out.append((theta, bool(ok and elapsed <= budget), elapsed))
    return out


def run_study(design, estimators=DEFAULT_ESTIMATORS, R=100, seed=None,
              contaminated=True, n_workers=None, budget=FIT_BUDGET):
    """Monte Carlo replication of ``design`` for each estimator.

    Parameters
    ----------
    design : Design or str
        A :class:`Design` or a key of :data:`DESIGNS`.
    estimators : sequence of Estimator
    R : int
        Number of replicates.
    seed : int or None
        Master seed; replicate ``r`` draws from the ``r``-th spawned stream,
        so results do not depend on worker scheduling or estimator order.
    contaminated : bool
        Apply the design's contamination after simulation.
    n_workers : int, optional
        Process count (default from ``RGMWM_WORKERS``).
    budget : float
        Per-fit wall-time budget in seconds.

    Returns
    -------
    StudyReport
    """
    if isinstance(design, str):
        design = get_design(design)
    estimators = tuple(estimators)
    if not estimators:
        raise InvalidInputError("run_study needs at least one estimator")
    if len({e.name for e in estimators}) != len(estimators):
        raise InvalidInputError("estimator names must be unique")
    R = int(R)
    if R < 1:
        raise InvalidInputError("R must be positive")
    fit_model = design.fit_model
    template = fit_model.to_string()
    truth_model = design.model
    truth = truth_model.theta[fit_model.free]
    children = np.random.SeedSequence(seed).spawn(R)
    spec = design.contamination if contaminated else None
    payloads = [(design.truth, template, design.size, spec, estimators, c, budget)
                for c in children]
    n_workers = worker_count() if n_workers is None else int(n_workers)
    if n_workers > 1 and R > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_run_replicate, payloads))
    else:
        results = [_run_replicate(p) for p in payloads]
    estimates, converged, times = {}, {}, {}
    for i, est in enumerate(estimators):
        estimates[est.name] = np.array([r[i][0] for r in results], dtype=float)
        converged[est.name] = np.array([r[i][1] for r in results], dtype=bool)
        times[est.name] = np.array([r[i][2] for r in results], dtype=float)
    names = [n for n, f in zip(fit_model.param_names, fit_model.free) if f]
    return StudyReport(
        design=design.name, size=design.size, replicates=R, contaminated=contaminated,
        contamination=design.contamination.describe() if contaminated else "none",
        param_names=names, truth=truth, estimates=estimates, converged=converged,
        times=times, seed=seed,
        metadata={"truth_model": design.truth, "fit_model": template,
                  "estimators": [e.name for e in estimators]})


__all__ = [
    "ContaminationSpec",
    "contaminate",
    "rmse_star",
    "Estimator",
    "GMWM_CLASSICAL",
    "RGMWM",
    "DEFAULT_ESTIMATORS",
    "Design",
    "DESIGNS",
    "get_design",
    "StudyReport",
    "run_study",
]
