import csv
import io
import re

import numpy as np
import pytest

from rgmwm.cli import format_data, main, read_data
from rgmwm.models import ModelSpec, simulate

AR1_FREE = "ar1(rho=?, v2=?)"


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def report_params(text):
    """Parameter rows of a fit report as ``{name: (estimate, lo, hi)}``."""
    rows = {}
    lines = text.splitlines()
    start = next(i for i, line in enumerate(lines) if line.startswith("parameter"))
    for line in lines[start + 1:]:
        if not line.strip():
            break
        name, *vals = line.split()
        rows[name] = tuple(float(v) for v in vals)
    return rows


def report_flagged(text):
    lines = text.splitlines()
    start = next(i for i, line in enumerate(lines) if line.startswith("flagged_observations"))
    count = int(lines[start].split(":")[1])
    idx = [int(line.split()[0]) for line in lines[start + 1:start + 1 + count]]
    return count, idx


def read_wv_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    return rows[0], [[float(v) for v in r] for r in rows[1:]]


# ---------------------------------------------------------------------- fit
def test_fit_fixture_recovers_rho(fixtures_dir, capsys):
    code, out, _ = run(["fit", "--input", fixtures_dir / "ar1_rho09_seed1.csv",
                        "--model", AR1_FREE], capsys)
    assert code == 0
    rho = report_params(out)["rho"]
    assert 0.85 <= rho[0] <= 0.95
    assert rho[1] < rho[0] < rho[2]


def test_fit_flags_injected_spikes(fixtures_dir, capsys):
    truth = {int(v) for v in (fixtures_dir / "ar1_spiked.csv.idx").read_text().split()}
    code, out, _ = run(["fit", "--input", fixtures_dir / "ar1_spiked.csv",
                        "--model", AR1_FREE], capsys)
    assert code == 0
    count, flagged = report_flagged(out)
    assert count == len(flagged)
    assert len(truth & set(flagged)) >= 8
    false_flags = set(flagged) - truth
    assert len(false_flags) <= 0.02 * (1000 - len(truth))


def test_fit_report_layout(fixtures_dir, capsys):
    code, out, _ = run(["fit", "--input", fixtures_dir / "ar1_rho09_seed1.csv",
                        "--model", AR1_FREE, "--no-robust", "--level", "0.9"], capsys)
    assert code == 0
    assert "GMWM" in out.splitlines()[0]
    assert "ci_lo 90%" in out
    assert set(report_params(out)) == {"rho", "v2"}


def test_fit_model_from_file(fixtures_dir, tmp_path, capsys):
    spec = tmp_path / "model.txt"
    spec.write_text(AR1_FREE + "\n")
    _, inline, _ = run(["fit", "--input", fixtures_dir / "ar1_rho09_seed1.csv",
                        "--model", AR1_FREE], capsys)
    _, from_file, _ = run(["fit", "--input", fixtures_dir / "ar1_rho09_seed1.csv",
                           "--model", spec], capsys)
    assert report_params(inline) == report_params(from_file)


def test_fit_with_jtest(fixtures_dir, capsys):
    code, out, _ = run(["fit", "--input", fixtures_dir / "ar1_rho09_seed1.csv",
                        "--model", AR1_FREE, "--boot", 19, "--seed", 5], capsys)
    assert code == 0
    p = float(re.search(r"p_value:\s*(\S+)", out).group(1))
    assert 0.0 < p <= 1.0


def test_fit_output_file(fixtures_dir, tmp_path, capsys):
    target = tmp_path / "report.txt"
    code, out, _ = run(["fit", "--input", fixtures_dir / "ar1_rho09_seed1.csv",
                        "--model", AR1_FREE, "--output", target], capsys)
    assert code == 0 and out == ""
    assert "rho" in report_params(target.read_text())


# --------------------------------------------------------------- exit codes
def test_missing_file_exit_1_and_no_output(tmp_path, capsys):
    target = tmp_path / "out.txt"
    code, out, err = run(["fit", "--input", tmp_path / "absent.csv",
                          "--model", "wn(s2=?)", "--output", target], capsys)
    assert code == 1
    assert out == ""
    assert "absent.csv" in err
    assert not target.exists()


def test_parse_error_names_line(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("value\n1.0\n2.0\nabc\n4.0\n")
    code, _, err = run(["wv", "--input", bad], capsys)
    assert code == 1
    assert ":4:" in err and "abc" in err


def test_bad_model_exit_1(fixtures_dir, capsys):
    code, _, err = run(["fit", "--input", fixtures_dir / "wn_seed3.csv",
                        "--model", "sum(ar1(rho=?), "], capsys)
    assert code == 1
    assert err


def test_usage_error_exit_1(capsys):
    with pytest.raises(SystemExit) as info:
        main(["fit", "--nonsense"])
    assert info.value.code == 1


def test_non_convergence_exit_2(fixtures_dir, capsys):
    # an AR(1) latent on white noise drives its variance to the boundary
    code, out, _ = run(["fit", "--input", fixtures_dir / "wn_seed3.csv",
                        "--model", "sum(ar1(rho=?, v2=?), wn(s2=?))"], capsys)
    assert code == 2
    assert "converged: no" in out


def test_identifiability_exit_3(tmp_path, capsys):
    short = tmp_path / "short.csv"
    short.write_text(format_data(np.random.default_rng(0).standard_normal(8)))
    code, _, err = run(["fit", "--input", short,
                        "--model", "sum(ar1(rho=?, v2=?), wn(s2=?))"], capsys)
    assert code == 3
    assert "identify" in err


def test_numerical_failure_exit_4(tmp_path, capsys):
    zeros = tmp_path / "zeros.csv"
    zeros.write_text("0\n" * 64)
    with pytest.warns(Warning):
        code, _, err = run(["fit", "--input", zeros, "--model", "wn(s2=?)",
                            "--no-robust"], capsys)
    assert code == 4
    assert "degenerate" in err


def test_stochastic_commands_need_seed(tmp_path, capsys):
    code, _, err = run(["simulate", "--model", "wn(s2=1)", "--size", 10], capsys)
    assert code == 1
    assert "--seed" in err


# ---------------------------------------------------------------------- wv
def test_wv_columns_without_and_with_model(fixtures_dir, capsys):
    code, out, _ = run(["wv", "--input", fixtures_dir / "wn_seed3.csv"], capsys)
    assert code == 0
    header, rows = read_wv_csv(out)
    assert header == ["scale", "nu_classical", "ci_lo", "ci_hi",
                      "nu_robust", "ci_lo", "ci_hi"]
    assert [r[0] for r in rows] == list(range(1, 12))
    code, out, _ = run(["wv", "--input", fixtures_dir / "wn_seed3.csv",
                        "--model", "wn(s2=?)"], capsys)
    assert code == 0
    header, rows = read_wv_csv(out)
    assert len(header) == 9
    assert header[-2:] == ["nu_implied_classical", "nu_implied_robust"]
    # implied white-noise WV halves at each scale
    implied = np.array([r[7] for r in rows])
    assert np.allclose(implied[1:] / implied[:-1], 0.5, rtol=1e-12)


def test_wv_fixed_model_implied_columns(fixtures_dir, capsys):
    code, out, _ = run(["wv", "--input", fixtures_dir / "wn_seed3.csv",
                        "--model", "wn(s2=1)"], capsys)
    assert code == 0
    _, rows = read_wv_csv(out)
    for r in rows:
        assert r[7] == r[8] == pytest.approx(2.0 ** -r[0], rel=1e-12)


def _wn_fixture_rows(fixtures_dir, capsys):
    _, out, _ = run(["wv", "--input", fixtures_dir / "wn_seed3.csv"], capsys)
    _, rows = read_wv_csv(out)
    x = read_data(fixtures_dir / "wn_seed3.csv")
    return rows, np.var(x, ddof=1)


def test_wv_robust_and_classical_intervals_overlap(fixtures_dir, capsys):
    rows, _ = _wn_fixture_rows(fixtures_dir, capsys)
    for r in rows:
        assert max(r[2], r[5]) <= min(r[3], r[6])


def test_wv_white_noise_fine_scales_in_band(fixtures_dir, capsys):
    rows, s2 = _wn_fixture_rows(fixtures_dir, capsys)
    for r in rows[:9]:
        assert r[2] <= 2.0 ** -r[0] * s2 <= r[3]


@pytest.mark.xfail(strict=True, reason=(
    "Wald bands from the HAC variance are too narrow at scales 10 and 11 of "
    "N=4096, where fewer than three independent coefficients exist"))
def test_wv_white_noise_every_scale_in_band(fixtures_dir, capsys):
    rows, s2 = _wn_fixture_rows(fixtures_dir, capsys)
    for r in rows:
        assert r[2] <= 2.0 ** -r[0] * s2 <= r[3]


def test_wv_lattice_scale_labels(tmp_path, capsys):
    field = tmp_path / "field.csv"
    field.write_text(format_data(np.random.default_rng(1).standard_normal((20, 20))))
    code, out, _ = run(["wv", "--input", field], capsys)
    assert code == 0
    labels = [r[0] for r in csv.reader(io.StringIO(out))][1:]
    pairs = [tuple(int(v) for v in label.split("-")) for label in labels]
    # 20 x 20 lattice: four scales per direction, each unordered pair once
    assert sorted(pairs) == [(a, b) for a in range(1, 5) for b in range(a, 5)]


# ---------------------------------------------------------------- simulate
@pytest.mark.property
def test_simulate_is_byte_identical(tmp_path, capsys):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        code, _, _ = run(["simulate", "--model", "ar1(rho=0.9, v2=1)", "--size", 1000,
                          "--seed", 7, "--output", p], capsys)
        assert code == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert len(paths[0].read_text().splitlines()) == 1000


@pytest.mark.property
def test_csv_round_trip(tmp_path, capsys):
    target = tmp_path / "x.csv"
    run(["simulate", "--model", "sum(ar1(rho=0.6, v2=2), wn(s2=3))", "--size", 500,
         "--seed", 9, "--output", target], capsys)
    expected = simulate(ModelSpec.parse("sum(ar1(rho=0.6, v2=2), wn(s2=3))"), 500, 9)
    got = read_data(target)
    assert np.max(np.abs(got - expected) / np.maximum(np.abs(expected), 1e-300)) <= 1e-15


def test_simulate_lattice(tmp_path, capsys):
    target = tmp_path / "f.csv"
    code, _, _ = run(["simulate", "--model", "exp(phi=2, s2=1)", "--size", "12x10",
                      "--seed", 1, "--output", target], capsys)
    assert code == 0
    assert read_data(target).shape == (12, 10)


def test_read_data_header_and_blank_lines(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("value\n1.5\n\n-2\n")
    assert np.array_equal(read_data(p), [1.5, -2.0])


# ------------------------------------------------------------- contaminate
def test_contaminate_zero_epsilon_copies_input(fixtures_dir, tmp_path, capsys):
    src = fixtures_dir / "ar1_rho09_seed1.csv"
    out = tmp_path / "c.csv"
    code, _, _ = run(["contaminate", "--input", src, "--output", out, "--kind", "isolated",
                      "--epsilon", 0, "--sigma2", 9, "--seed", 1], capsys)
    assert code == 0
    assert out.read_bytes() == src.read_bytes()
    assert (tmp_path / "c.csv.idx").read_text() == ""


def test_contaminate_sidecar_lists_changed_indices(fixtures_dir, tmp_path, capsys):
    src = fixtures_dir / "ar1_rho09_seed1.csv"
    out = tmp_path / "c.csv"
    code, _, _ = run(["contaminate", "--input", src, "--output", out, "--kind", "isolated",
                      "--epsilon", 0.05, "--sigma2", 9, "--seed", 1], capsys)
    assert code == 0
    idx = [int(v) for v in (tmp_path / "c.csv.idx").read_text().split()]
    assert len(idx) == 50
    changed = np.flatnonzero(read_data(out) != read_data(src))
    assert set(changed) <= set(idx)


@pytest.mark.property
def test_contaminate_reproducible(fixtures_dir, tmp_path, capsys):
    src = fixtures_dir / "ar1_rho09_seed1.csv"
    outs = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for o in outs:
        run(["contaminate", "--input", src, "--output", o, "--kind", "patchy",
             "--epsilon", 0.02, "--sigma2", 100, "--seed", 4], capsys)
    assert outs[0].read_bytes() == outs[1].read_bytes()
    assert (tmp_path / "a.csv.idx").read_bytes() == (tmp_path / "b.csv.idx").read_bytes()


# ------------------------------------------------------------------- jtest
def test_jtest_command(fixtures_dir, capsys):
    args = ["jtest", "--input", fixtures_dir / "ar1_rho09_seed1.csv", "--model", AR1_FREE,
            "--boot", 19, "--seed", 3]
    code, out, _ = run(args, capsys)
    assert code == 0
    p = float(re.search(r"p_value:\s*(\S+)", out).group(1))
    assert 0.0 < p <= 1.0
    _, again, _ = run(args, capsys)

    def strip(text):
        return re.sub(r"wall_time_s: \S+\n", "", text)

    assert strip(out) == strip(again)


# --------------------------------------------------------------- benchmark
@pytest.mark.slow
def test_benchmark_ar1_orders_robust_first(tmp_path, capsys):
    table, summary = tmp_path / "t.csv", tmp_path / "s.txt"
    code, _, _ = run(["benchmark", "--design", "ar1", "--replicates", 50, "--seed", 2024,
                      "--output", table, "--summary", summary], capsys)
    assert code == 0
    rows = list(csv.DictReader(table.open()))
    rmse = {(r["estimator"], r["parameter"]): float(r["rmse_star"]) for r in rows}
    assert rmse[("RGMWM", "rho")] < rmse[("GMWM", "rho")]
    text = summary.read_text()
    assert "RGMWM" in text and "GMWM" in text
