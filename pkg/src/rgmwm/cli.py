"""Command-line front end.

Exit codes: 0 success, 1 input/parse error, 2 fit did not converge,
3 identifiability error, 4 numerical failure.
"""

import argparse
import csv
import io
import math
import os
import shutil
import sys

import numpy as np

from .bench import ContaminationSpec, Estimator, contaminate, get_design, run_study
from .exceptions import InvalidInputError, RGMWMError
from .gmwm import (OMEGA_KINDS, _decompose, _estimate_usable, fit, format_report,
                   jtest_bootstrap)
from .models import ModelSpec, model_wv, simulate
from .wv import estimate_wv, tuning_for_efficiency

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NOT_CONVERGED = 2


# ------------------------------------------------------------------ file I/O
def _fmt(x):
    return f"{float(x):.17g}"


def read_data(path):
    """Read a series (one value per line) or a lattice (comma-separated rows).

    A non-numeric first line is treated as a header. Errors name the
    offending line.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc.strerror or exc}") from None
    rows = []
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text:
            continue
        fields = [f.strip() for f in text.split(",")]
        try:
            rows.append([float(f) for f in fields])
        except ValueError:
            if not rows and lineno == 1:
                continue
            bad = next(f for f in fields if not _is_number(f))
            raise InvalidInputError(
                f"{path}:{lineno}: cannot parse {bad!r} as a number") from None
        if not all(math.isfinite(v) for v in rows[-1]):
            raise InvalidInputError(f"{path}:{lineno}: non-finite value")
    if not rows:
        raise InvalidInputError(f"{path}: no data")
    width = len(rows[0])
    for lineno, r in enumerate(rows, start=1):
        if len(r) != width:
            raise InvalidInputError(
                f"{path}: data row {lineno} has {len(r)} values, expected {width}")
    arr = np.asarray(rows, dtype=float)
    return arr[:, 0] if width == 1 else arr


def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def format_data(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return "".join(_fmt(v) + "\n" for v in x)
    return "".join(",".join(_fmt(v) for v in row) + "\n" for row in x)


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _read_model(text):
    if text is None:
        raise InvalidInputError("--model is required")
    if os.path.isfile(text):
        with open(text, encoding="utf-8") as fh:
            text = fh.read()
    return ModelSpec.parse(text)


def _require_seed(args):
    if args.seed is None:
        raise InvalidInputError(f"{args.command} is stochastic and needs --seed")
    return args.seed


def _parse_size(text):
    parts = text.lower().replace("*", "x").split("x")
    try:
        dims = tuple(int(p) for p in parts)
    except ValueError:
        raise InvalidInputError(f"cannot parse size {text!r}") from None
    if len(dims) not in (1, 2) or min(dims) < 1:
        raise InvalidInputError(f"invalid size {text!r}")
    return dims[0] if len(dims) == 1 else dims


def _sidecar(path, explicit):
    if explicit:
        return explicit
    if path in (None, "-"):
        raise InvalidInputError("--index-output is required when writing to stdout")
    return path + ".idx"


# ------------------------------------------------------------------ commands
def cmd_simulate(args):
    model = _read_model(args.model)
    size = _parse_size(args.size)
    x = simulate(model, size, _require_seed(args))
    _write(args.output, format_data(x))
    return EXIT_OK


def cmd_contaminate(args):
    x = read_data(args.input)
    spec = ContaminationSpec(
        kind=args.kind, epsilon=args.epsilon, sigma2_eps=args.sigma2,
        shifts=tuple(args.shifts or ()), j=args.scale, patch_len=args.patch_len,
        replace=args.replace)
    y, idx = contaminate(x, spec, _require_seed(args))
    if idx.size == 0 and args.output not in (None, "-"):
        shutil.copyfile(args.input, args.output)
    else:
        _write(args.output, format_data(y))
    if x.ndim == 1:
        side = "".join(f"{i}\n" for i in idx)
    else:
        rows, cols = np.unravel_index(idx, x.shape)
        side = "".join(f"{r},{c}\n" for r, c in zip(rows, cols))
    _write(_sidecar(args.output, args.index_output), side)
    return EXIT_OK


def _fit_from_args(args, x, model, robust):
    return fit(x, model, robust=robust, efficiency=args.efficiency, omega=args.omega,
               level=args.level, B=args.cov_boot,
               seed=0 if args.seed is None else args.seed)


def cmd_fit(args):
    x = read_data(args.input)
    model = _read_model(args.model)
    result = _fit_from_args(args, x, model, args.robust)
    jt = None
    if args.boot:
        jt = jtest_bootstrap(result, B=args.boot, seed=_require_seed(args)) \
            if result.converged else None
    _write(args.output, format_report(result, jtest=jt))
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_jtest(args):
    x = read_data(args.input)
    model = _read_model(args.model)
    result = _fit_from_args(args, x, model, args.robust)
    if not result.converged:
        _write(args.output, format_report(result))
        return EXIT_NOT_CONVERGED
    jt = jtest_bootstrap(result, B=args.boot or 99, seed=_require_seed(args))
    _write(args.output, format_report(result, jtest=jt))
    return EXIT_OK


def cmd_wv(args):
    x = read_data(args.input)
    classical = estimate_wv(x, None, level=args.level)
    coeffs = _decompose(x)
    robust, _, _ = _estimate_usable(coeffs, tuning_for_efficiency(args.efficiency),
                                    args.level, 1)
    # scales without a robust solution are reported as nan
    pad = len(classical.scales) - len(robust.scales)
    keep = [classical.scales.index(s) for s in robust.scales]
    rob = np.full((len(classical.scales), 3), np.nan)
    rob[keep] = np.column_stack([robust.nu_hat, robust.ci])
    if pad:
        sys.stderr.write(f"rgmwm wv: robust WV undefined at {pad} scale(s)\n")
    header = ["scale", "nu_classical", "ci_lo", "ci_hi", "nu_robust", "ci_lo", "ci_hi"]
    columns = [classical.nu_hat, classical.ci[:, 0], classical.ci[:, 1],
               rob[:, 0], rob[:, 1], rob[:, 2]]
    status = EXIT_OK
    if args.model:
        model = _read_model(args.model)
        implied = []
        for flag in (False, True):
            if model.n_free:
                res = fit(x, model, robust=flag, efficiency=args.efficiency,
                          omega=args.omega, weights=False, covariance=None)
                status = status if res.converged else EXIT_NOT_CONVERGED
                mdl = res.model
            else:
                mdl = model
            implied.append(model_wv(mdl, classical.scales))
        header += ["nu_implied_classical", "nu_implied_robust"]
        columns += implied
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for i, s in enumerate(classical.scales):
        label = s if np.isscalar(s) else "-".join(map(str, s))
        w.writerow([label] + [_fmt(c[i]) for c in columns])
    _write(args.output, buf.getvalue())
    return status


def cmd_benchmark(args):
    design = get_design(args.design)
    estimators = (Estimator("RGMWM", True, args.efficiency, args.omega),
                  Estimator("GMWM", False, 1.0, args.omega))
    report = run_study(design, estimators, R=args.replicates, seed=_require_seed(args),
                       contaminated=not args.clean)
    _write(args.output, report.to_csv())
    if args.summary:
        _write(args.summary, report.summary() + "\n")
    else:
        sys.stderr.write(report.summary() + "\n")
    return EXIT_OK


# ------------------------------------------------------------------ parser
class _Parser(argparse.ArgumentParser):
    # usage errors share exit code 1 with other input errors; 2 means
    # non-convergence in this tool
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _common(p, data=True):
    if data:
        p.add_argument("--input", required=True, help="input CSV")
    p.add_argument("--output", default="-", help="output file (default stdout)")
    p.add_argument("--seed", type=int, default=None)


def _fit_options(p):
    p.add_argument("--model", required=True, help="model spec or a file containing one")
    p.add_argument("--robust", action=argparse.BooleanOptionalAction, default=True,
                   help="robust (Tukey) WV; --no-robust for the classical estimator")
    p.add_argument("--efficiency", type=float, default=0.6)
    p.add_argument("--omega", choices=OMEGA_KINDS, default="diag")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--cov-boot", type=int, default=100,
                   help="bootstrap replicates for the parameter covariance")


def build_parser():
    parser = _Parser(
        prog="rgmwm", description="Robust generalized method of wavelet moments.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="estimate model parameters from a CSV")
    _common(p)
    _fit_options(p)
    p.add_argument("--boot", type=int, default=0,
                   help="also run a bootstrap J-test with this many replicates")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("jtest", help="bootstrap J-test of model adequacy")
    _common(p)
    _fit_options(p)
    p.add_argument("--boot", type=int, default=99)
    p.set_defaults(func=cmd_jtest)

    p = sub.add_parser("simulate", help="simulate a fully specified model")
    _common(p, data=False)
    p.add_argument("--model", required=True)
    p.add_argument("--size", required=True, help="series length N or lattice KxM")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("contaminate", help="inject outliers into a CSV")
    _common(p)
    p.add_argument("--kind", required=True,
                   choices=("isolated", "patchy", "level_shift", "scale"))
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--sigma2", type=float, default=None)
    p.add_argument("--shifts", type=float, nargs="+", default=None)
    p.add_argument("--scale", type=int, default=None, help="wavelet scale j for kind=scale")
    p.add_argument("--patch-len", type=int, default=10)
    p.add_argument("--replace", action="store_true")
    p.add_argument("--index-output", default=None,
                   help="index sidecar (default: OUTPUT.idx)")
    p.set_defaults(func=cmd_contaminate)

    p = sub.add_parser("wv", help="classical and robust WV with intervals")
    _common(p)
    p.add_argument("--model", default=None,
                   help="optional model; adds implied-WV columns")
    p.add_argument("--efficiency", type=float, default=0.6)
    p.add_argument("--omega", choices=OMEGA_KINDS, default="diag")
    p.add_argument("--level", type=float, default=0.95)
    p.set_defaults(func=cmd_wv)

    p = sub.add_parser("benchmark", help="Monte Carlo study of a built-in design")
    _common(p, data=False)
    p.add_argument("--design", required=True,
                   help="ar1, ar2, arma12, arma31, ssm, exp1, exp2, gauss1 or gauss2")
    p.add_argument("--replicates", type=int, default=100)
    p.add_argument("--efficiency", type=float, default=0.6)
    p.add_argument("--omega", choices=OMEGA_KINDS, default="diag")
    p.add_argument("--clean", action="store_true", help="skip the contamination")
    p.add_argument("--summary", default=None, help="file for the summary table")
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RGMWMError as exc:
        sys.stderr.write(f"rgmwm {args.command}: {exc}\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(f"rgmwm {args.command}: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
