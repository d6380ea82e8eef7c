import json

import numpy as np
import pytest

from codedsketch.cli import (
    EXIT_ASSERT,
    EXIT_CONFIG,
    EXIT_NUMERIC,
    EXIT_OK,
    SCHEMA_VERSION,
    ExperimentConfig,
    Report,
    block_sparse_operands,
    emit_report,
    load_report,
    main,
    run,
)
from codedsketch.errors import ParameterError
from codedsketch.matrix_io import read_matrix, write_matrix


def strip_volatile(text):
    data = json.loads(text)
    data.pop("volatile")
    return data


# ---------------------------------------------------------------- modes


def test_golden_mode(tmp_path):
    out = tmp_path / "golden.json"
    assert main(["--mode", "example-golden", "--out", str(out)]) == EXIT_OK
    data = load_report(out)
    assert data["schema_version"] == SCHEMA_VERSION
    assert data["summary"]["responded"] == 75
    assert data["summary"]["max_rel_error"] <= 1e-8
    assert len(data["rows"]) == 9
    assert data["thresholds"][0]["operational"] == 75


def test_approx_with_zero_matrix_file(tmp_path):
    rng = np.random.default_rng(0)
    a, b = tmp_path / "a.bin", tmp_path / "b.csv"
    write_matrix(a, rng.standard_normal((4, 6)))
    write_matrix(b, np.zeros((6, 4)))
    out = tmp_path / "r.json"
    code = main(["--mode", "approx", "--p", "2", "--m", "2", "--n", "2", "--bprime", "2", "--d", "3",
                 "--matrix-a", str(a), "--matrix-b", str(b), "--trials", "3", "--out", str(out)])
    assert code == EXIT_OK
    rows = load_report(out)["rows"]
    assert len(rows) == 3
    assert all(r["max_abs_error"] == 0.0 for r in rows)


def test_approx_pad(tmp_path):
    out = tmp_path / "r.json"
    args = ["--mode", "approx", "--p", "2", "--m", "2", "--n", "2", "--bprime", "3", "--d", "1",
            "--random", "5,3,7", "--out", str(out)]
    assert main(args) == EXIT_CONFIG
    assert not out.exists()
    assert main(args + ["--pad"]) == EXIT_OK
    assert load_report(out)["rows"][0]["max_abs_error"] >= 0


def test_eps_delta_derivation_recorded():
    rep = run(ExperimentConfig(mode="approx", p=[1], m=[2], n=[2], epsilon=0.5, delta=0.125, trials=2))
    th = rep.thresholds[0]
    assert (th["bprime"], th["d"]) == (12, 3)
    assert th["stated_bound"] == th["operational"] - 1
    assert 0.0 <= rep.summary["exceedance_rate_max"] <= 1.0


def test_sparse_mode_small():
    rep = run(ExperimentConfig(mode="sparse-exact", p=[1], m=[2], n=[2], bprime=[8], d=[3],
                               block_sparse=1, trials=5, seed=1))
    assert len(rep.rows) == 5
    assert 0.0 <= rep.summary["exact_recovery_rate"] <= 1.0
    assert rep.assertions[0]["name"] == "exact_recovery_rate"


def test_block_sparse_operands_exact_product():
    rng = np.random.default_rng(2)
    A, B = block_sparse_operands(8, 10, 8, 4, 4, 3, rng)
    C = A @ B
    nonzero = sum(bool(C[2 * i:2 * i + 2, 2 * j:2 * j + 2].any()) for i in range(4) for j in range(4))
    assert nonzero == 3
    np.testing.assert_array_equal(C, A[:, :8])
    with pytest.raises(ParameterError):
        block_sparse_operands(8, 4, 8, 4, 4, 1, rng)


def test_sweep_mode_csv(tmp_path):
    out = tmp_path / "s.csv"
    code = main(["--mode", "sweep", "--p", "1,2", "--m", "2", "--n", "2", "--bprime", "2,3", "--d", "1,2",
                 "--trials", "2", "--format", "csv", "--out", str(out)])
    assert code == EXIT_OK
    rows = load_report(out)
    assert len(rows) == 8
    assert {r["success_rate"] for r in rows} == {1.0}


# ---------------------------------------------------------------- reports


def test_empty_report_csv_is_header_only():
    text = emit_report(Report("sweep", {}), "csv")
    assert text.count("\n") == 1 and text.startswith("bprime,")


def test_single_trial_row_fully_populated():
    rep = run(ExperimentConfig(mode="approx", p=[1], m=[2], n=[2], bprime=[2], d=[1], trials=1))
    text = emit_report(rep, "csv")
    header, row = text.strip().split("\n")
    assert len(header.split(",")) == len(row.split(","))
    assert all(cell != "" for cell in row.split(","))


@pytest.mark.parametrize("fmt", ["json", "csv"])
def test_round_trip_bit_exact(tmp_path, fmt):
    rep = run(ExperimentConfig(mode="approx", p=[2], m=[2], n=[2], bprime=[2], d=[3], trials=4, seed=9))
    path = tmp_path / f"r.{fmt}"
    emit_report(rep, fmt, path)
    loaded = load_report(path)
    rows = loaded["rows"] if fmt == "json" else loaded
    for orig, back in zip(rep.rows, rows):
        for key, value in orig.items():
            assert back[key] == value and type(back[key]) is type(value)


def test_non_finite_values_rejected():
    rep = Report("approx", {}, summary={"x": float("nan")})
    with pytest.raises(Exception):
        emit_report(rep)


def test_determinism_modulo_volatile(tmp_path):
    args = ["--mode", "approx", "--p", "2", "--m", "2", "--n", "2", "--epsilon", "0.7", "--delta", "0.3",
            "--trials", "5", "--seed", "4"]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(args + ["--out", str(a)]) == EXIT_OK
    assert main(args + ["--out", str(b)]) == EXIT_OK
    assert strip_volatile(a.read_text()) == strip_volatile(b.read_text())
    # sorted keys and fixed layout make the non-volatile text identical too
    cut = lambda t: t[: t.index('"volatile"')]
    assert cut(a.read_text()) == cut(b.read_text())


def test_env_seed_fallback(tmp_path, monkeypatch):
    args = ["--mode", "approx", "--p", "1", "--m", "2", "--n", "2", "--bprime", "2", "--d", "2"]
    monkeypatch.setenv("CODEDSKETCH_SEED", "17")
    main(args + ["--out", str(tmp_path / "env.json")])
    main(args + ["--seed", "17", "--out", str(tmp_path / "flag.json")])
    env = strip_volatile((tmp_path / "env.json").read_text())
    flag = strip_volatile((tmp_path / "flag.json").read_text())
    assert env["rows"] == flag["rows"]
    monkeypatch.setenv("CODEDSKETCH_SEED", "abc")
    assert main(args) == EXIT_CONFIG


# ---------------------------------------------------------------- validation and exit codes


@pytest.mark.parametrize("args", [
    ["--mode", "approx", "--p", "2", "--m", "2", "--n", "2", "--bprime", "2", "--d", "2", "--workers", "3"],
    ["--mode", "approx", "--p", "2", "--m", "3", "--n", "2", "--bprime", "2", "--d", "2", "--random", "4,4,4"],
    ["--mode", "approx", "--p", "2"],
    ["--mode", "sparse-exact", "--m", "2", "--n", "2", "--bprime", "2", "--d", "1"],
    ["--mode", "approx", "--bprime", "2", "--d", "1", "--matrix-a", "/nonexistent/a.bin",
     "--matrix-b", "/nonexistent/b.bin"],
    ["--mode", "bogus"],
    ["--p", "x"],
])
def test_config_errors_exit_2_without_output(tmp_path, args):
    out = tmp_path / "never.json"
    with_out = args + ["--out", str(out)]
    try:
        code = main(with_out)
    except SystemExit as exc:  # argparse rejections
        code = exc.code
    assert code == EXIT_CONFIG
    assert not out.exists()


def test_numerical_failure_exit_3(tmp_path):
    # real Chebyshev points make the 75-point Vandermonde hopeless
    out = tmp_path / "x.json"
    assert main(["--mode", "example-golden", "--grid", "chebyshev", "--out", str(out)]) == EXIT_NUMERIC
    assert not out.exists()


def test_assertion_failure_exit_1(tmp_path):
    # one sketch bucket for four blocks cannot be exact
    code = main(["--mode", "sparse-exact", "--p", "1", "--m", "2", "--n", "2", "--bprime", "1", "--d", "1",
                 "--block-sparse", "4", "--trials", "3", "--out", str(tmp_path / "s.json")])
    assert code == EXIT_ASSERT


# ---------------------------------------------------------------- matrix files


@pytest.mark.parametrize("suffix", [".bin", ".csv"])
def test_matrix_file_round_trip(tmp_path, suffix):
    M = np.random.default_rng(3).standard_normal((3, 5)) * 1e-7
    path = tmp_path / f"m{suffix}"
    write_matrix(path, M)
    assert read_matrix(path).tobytes() == M.tobytes()


def test_matrix_file_errors(tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOTMAGIC" + bytes(16))
    with pytest.raises(ParameterError):
        read_matrix(bad)
    short = tmp_path / "short.bin"
    short.write_bytes(b"CSK")
    with pytest.raises(ParameterError):
        read_matrix(short)
    with pytest.raises(ParameterError):
        write_matrix(tmp_path / "v.bin", np.zeros(3))
