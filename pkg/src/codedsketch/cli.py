"""Command-line experiment runner.

Modes:

``approx``         fixed A, B; fresh sketch family per trial; reports the
                   per-entry exceedance rate of ``eps * ||C||_F`` and
                   unbiasedness statistics.
``sparse-exact``   fresh block-sparse product per trial; counts exact recoveries.
``example-golden`` the built-in 8x8 worked example decoded from the fastest
                   75 of 80 workers, checked against the reference sketch table.
``sweep``          cartesian product of comma-separated ``--p/--m/--n/--bprime/--d``.

Exit codes: 0 all assertions pass, 1 an assertion failed, 2 configuration or
I/O error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import golden
from .engine import (
    SchemeParams,
    SketchFamily,
    decode,
    default_grid,
    encode,
    median_recover,
    threshold_report,
)
from .errors import CodedSketchError, NumericalFailureError, ParameterError
from .matrix_io import read_matrix
from .straggler_sim import DelayModel, SweepConfig, run_round, sweep, trial_seeds

SCHEMA_VERSION = 1
MODES = ("approx", "sparse-exact", "example-golden", "sweep")
EXIT_OK, EXIT_ASSERT, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

GOLDEN_RTOL = 1e-8
SPARSE_ATOL = 1e-9
SPARSE_MIN_RATE = 0.9
EXCEEDANCE_SLACK = 0.05
UNBIASED_SIGMAS = 4.0
UNBIASED_MIN_FRACTION = 0.99
UNBIASED_MIN_TRIALS = 100


@dataclass
class ExperimentConfig:
    mode: str = "approx"
    p: list[int] = field(default_factory=lambda: [1])
    m: list[int] = field(default_factory=lambda: [1])
    n: list[int] = field(default_factory=lambda: [1])
    bprime: list[int] | None = None
    d: list[int] | None = None
    workers: int | None = None
    epsilon: float | None = None
    delta: float | None = None
    log_base: float = 2.0
    grid: str = "roots-of-unity"
    grid_radius: float | None = None
    matrix_a: str | None = None
    matrix_b: str | None = None
    random: tuple[int, int, int] | None = None
    block_sparse: int | None = None
    pad: bool = False
    delay_model: str = "shifted-exponential"
    trials: int = 1
    seed: int = 0
    out: str | None = None
    format: str = "json"

    def scheme_grid(self) -> list[SchemeParams]:
        """Every parameter combination, validated; (b', d) derived from (eps, delta) if absent."""
        if self.trials < 0:
            raise ParameterError("--trials must be >= 0")
        if (self.bprime is None or self.d is None) and (self.epsilon is None or self.delta is None):
            raise ParameterError("give --bprime and --d, or --epsilon and --delta")
        combos = []
        for p, m, n in itertools.product(self.p, self.m, self.n):
            if self.bprime is None or self.d is None:
                base = SchemeParams.from_accuracy(self.epsilon, self.delta, p, m, n, None, self.log_base)
                widths = self.bprime or [base.bprime]
                depths = self.d or [base.d]
            else:
                widths, depths = self.bprime, self.d
            for b, d in itertools.product(widths, depths):
                combos.append(SchemeParams(p, m, n, b, d, self.workers, self.epsilon,
                                           self.delta, self.log_base))
        if not combos:
            raise ParameterError("empty parameter grid")
        return combos

    def echo(self) -> dict:
        # where the report goes is not part of the experiment
        rec = asdict(self)
        rec.pop("out")
        return rec


@dataclass
class Report:
    mode: str
    config: dict
    thresholds: list[dict] = field(default_factory=list)
    rows: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    assertions: list[dict] = field(default_factory=list)
    timing: dict = field(default_factory=dict)
    timestamp: str = ""

    @property
    def passed(self) -> bool:
        return all(a["passed"] for a in self.assertions)

    def check(self, name: str, value: float, limit: float, op: str) -> None:
        ok = {"<=": value <= limit, ">=": value >= limit, "==": value == limit}[op]
        self.assertions.append(dict(name=name, value=value, limit=limit, op=op, passed=bool(ok)))

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "mode": self.mode,
            "config": self.config,
            "thresholds": self.thresholds,
            "rows": self.rows,
            "summary": self.summary,
            "assertions": self.assertions,
            "passed": self.passed,
            # run-dependent fields, excluded from determinism comparisons
            "volatile": {"timestamp": self.timestamp, "timing": self.timing},
        }


def _finite(obj: Any) -> Any:
    if isinstance(obj, float) and not math.isfinite(obj):
        raise CodedSketchError(f"non-finite value {obj!r} in report")
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, np.generic):
        return _finite(obj.item())
    return obj


def emit_report(report: Report, format: str = "json", path=None) -> str:
    """Serialise deterministically; writes to ``path`` when given and returns the text.

    JSON carries the whole report. CSV carries the ``rows`` table only, one
    column per key (header only when there are no rows).
    """
    data = _finite(report.to_dict())
    if format == "json":
        text = json.dumps(data, sort_keys=True, indent=2) + "\n"
    elif format == "csv":
        buf = io.StringIO()
        cols = sorted({k for row in data["rows"] for k in row}) or _empty_columns(report.mode)
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for row in data["rows"]:
            writer.writerow([_csv_cell(row.get(c)) for c in cols])
        text = buf.getvalue()
    else:
        raise ParameterError(f"unknown format {format!r}")
    if path is not None:
        Path(path).write_text(text)
    return text


def _empty_columns(mode: str) -> list[str]:
    if mode == "sweep":
        return ["bprime", "d", "kth_delay_mean", "m", "n", "p", "rel_error_max", "rel_error_median",
                "rel_error_p90", "success_rate", "threshold", "trials", "workers"]
    return ["trial"]


def _csv_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return "" if v is None else str(v)


def load_report(path) -> dict | list[dict]:
    """Inverse of :func:`emit_report`: a dict for JSON, a list of rows for CSV."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json" or text.lstrip().startswith("{"):
        return json.loads(text)
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        rows.append({k: _parse_cell(v) for k, v in rec.items()})
    return rows


def _parse_cell(v: str):
    if v == "":
        return None
    if v in ("true", "false"):
        return v == "true"
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


# ---------------------------------------------------------------- matrices


def block_sparse_operands(r: int, s: int, t: int, m: int, n: int, k: int, rng):
    """``(A, B)`` with ``A @ B`` holding exactly ``k`` random nonzero blocks of the ``m x n`` grid.

    ``A = [S | Z]`` with ``S`` block-sparse and ``Z`` dense, ``B = [I; 0]``,
    so ``A @ B = S`` without rounding. Needs ``s >= t``.
    """
    if s < t:
        raise ParameterError(f"block-sparse source needs s >= t, got s={s}, t={t}")
    if r % m or t % n:
        raise ParameterError(f"{r}x{t} product does not split into a {m}x{n} grid")
    if not 0 <= k <= m * n:
        raise ParameterError(f"k={k} outside [0, {m * n}]")
    br, bc = r // m, t // n
    S = np.zeros((r, t))
    for cell in rng.choice(m * n, size=k, replace=False):
        i, j = divmod(int(cell), n)
        S[i * br:(i + 1) * br, j * bc:(j + 1) * bc] = rng.standard_normal((br, bc))
    A = np.hstack([S, rng.standard_normal((r, s - t))])
    B = np.vstack([np.eye(t), np.zeros((s - t, t))])
    return A, B


def _pad_to(M: np.ndarray, rows: int, cols: int) -> np.ndarray:
    out = np.zeros((rows, cols))
    out[: M.shape[0], : M.shape[1]] = M
    return out


def _ceil_to(x: int, q: int) -> int:
    return -(-x // q) * q


def _prepare(A, B, params: SchemeParams, pad: bool):
    if A.shape[1] != B.shape[0]:
        raise ParameterError(f"cannot multiply {A.shape} by {B.shape}")
    r, s = A.shape
    t = B.shape[1]
    need = (_ceil_to(r, params.m), _ceil_to(s, params.p), _ceil_to(t, params.n))
    if need != (r, s, t):
        if not pad:
            raise ParameterError(
                f"dimensions {r}x{s}x{t} not divisible by (m, p, n) = "
                f"({params.m}, {params.p}, {params.n}); pass --pad to zero-pad"
            )
        A = _pad_to(A, need[0], need[1])
        B = _pad_to(B, need[1], need[2])
    return A, B


def _dense_source(cfg: ExperimentConfig, params: SchemeParams):
    if cfg.matrix_a or cfg.matrix_b:
        if not (cfg.matrix_a and cfg.matrix_b):
            raise ParameterError("--matrix-a and --matrix-b go together")
        try:
            return read_matrix(cfg.matrix_a), read_matrix(cfg.matrix_b)
        except OSError as exc:
            raise ParameterError(f"cannot read matrix: {exc}") from exc
    r, s, t = cfg.random or (4 * params.m, 4 * params.p, 4 * params.n)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xA11CE]))
    return rng.standard_normal((r, s)), rng.standard_normal((s, t))


def _delay_model(cfg: ExperimentConfig) -> DelayModel:
    return DelayModel(kind=cfg.delay_model)


def _grid(cfg: ExperimentConfig, params: SchemeParams):
    return default_grid(params, cfg.grid, cfg.grid_radius)


def _one_round(A, B, params, family, grid, model):
    shares = encode(A, B, params, family, grid)
    outcome = run_round(shares, model, params.threshold)
    sketches = decode(outcome.arrivals, params, family)
    return median_recover(sketches, params), sketches, outcome


# ---------------------------------------------------------------- modes


def _thresholds(params: SchemeParams) -> dict:
    tr = threshold_report(params)
    return dict(p=params.p, m=params.m, n=params.n, bprime=params.bprime, d=params.d,
                operational=tr.operational, stated_bound=tr.stated_bound,
                exact=tr.exact, stated_min=tr.stated_min)


def run_approx(cfg: ExperimentConfig, params: SchemeParams, report: Report) -> None:
    A0, B0 = _dense_source(cfg, params)
    A, B = _prepare(A0, B0, params, cfg.pad)
    grid = _grid(cfg, params)
    C = A0 @ B0
    norm = float(np.linalg.norm(C))
    model = _delay_model(cfg)
    estimates = []
    for trial in range(cfg.trials):
        _, fseed, dseed = trial_seeds(cfg.seed, 0, trial)
        family = SketchFamily.from_seed(fseed, params)
        est, sketches, outcome = _one_round(A, B, params, family, grid, model.with_seed(dseed))
        Ct = est.estimate[: C.shape[0], : C.shape[1]]
        estimates.append(Ct)
        err = float(np.max(np.abs(Ct - C))) if C.size else 0.0
        report.rows.append(dict(trial=trial, max_abs_error=err,
                                rel_max_error=err / norm if norm > 0 else 0.0,
                                kth_delay=outcome.kth_delay, imag_residue=sketches.residue))
    if not estimates:
        return
    E = np.stack(estimates)
    summary = {"frobenius_norm": norm, "trials": cfg.trials}
    if params.epsilon is not None:
        exceed = (np.abs(E - C) >= params.epsilon * norm).mean(axis=0) if norm > 0 else np.zeros(C.shape)
        summary.update(epsilon=params.epsilon, delta=params.delta,
                       exceedance_rate_max=float(exceed.max()),
                       exceedance_rate_mean=float(exceed.mean()))
        report.check("exceedance_rate_max", float(exceed.max()),
                     params.delta + EXCEEDANCE_SLACK, "<=")
    if cfg.trials >= 2:
        frac = unbiased_fraction(E, C)
        summary["unbiased_fraction"] = frac
        if cfg.trials >= UNBIASED_MIN_TRIALS:
            report.check("unbiased_fraction", frac, UNBIASED_MIN_FRACTION, ">=")
    report.summary.update(summary)


def unbiased_fraction(E: np.ndarray, C: np.ndarray, sigmas: float = UNBIASED_SIGMAS) -> float:
    """Fraction of entries whose sample mean over axis 0 lies within ``sigmas`` standard errors."""
    T = E.shape[0]
    mean = E.mean(axis=0)
    se = E.std(axis=0, ddof=1) / math.sqrt(T)
    # entries estimated identically every trial have se == 0; allow rounding slack
    slack = 1e-9 * max(1.0, float(np.max(np.abs(C)))) if C.size else 0.0
    return float(np.mean(np.abs(mean - C) <= sigmas * se + slack)) if C.size else 1.0


def run_sparse(cfg: ExperimentConfig, params: SchemeParams, report: Report) -> None:
    if cfg.block_sparse is None:
        raise ParameterError("sparse-exact mode needs --block-sparse K")
    r, s, t = cfg.random or (4 * params.m, 4 * params.p * params.n, 4 * params.n)
    if s < t:
        raise ParameterError("sparse-exact needs s >= t")
    grid = _grid(cfg, params)
    model = _delay_model(cfg)
    exact = 0
    for trial in range(cfg.trials):
        mseed, fseed, dseed = trial_seeds(cfg.seed, 1, trial)
        A, B = block_sparse_operands(r, s, t, params.m, params.n, cfg.block_sparse,
                                     np.random.default_rng(mseed))
        A, B = _prepare(A, B, params, False)
        C = A @ B
        family = SketchFamily.from_seed(fseed, params)
        est, sketches, _ = _one_round(A, B, params, family, grid, model.with_seed(dseed))
        err = float(np.max(np.abs(est.estimate - C)))
        hit = err <= SPARSE_ATOL
        exact += hit
        report.rows.append(dict(trial=trial, max_abs_error=err, exact=bool(hit),
                                imag_residue=sketches.residue))
    rate = exact / cfg.trials if cfg.trials else 0.0
    report.summary.update(exact_recovery_rate=rate, k=cfg.block_sparse, tolerance=SPARSE_ATOL)
    report.check("exact_recovery_rate", rate, SPARSE_MIN_RATE, ">=")


def run_golden(cfg: ExperimentConfig, report: Report) -> dict:
    params = golden.params(cfg.workers or golden.WORKERS)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x601D]))
    A = rng.standard_normal((golden.SIZE, golden.SIZE))
    B = rng.standard_normal((golden.SIZE, golden.SIZE))
    C = A @ B
    family = golden.family()
    grid = _grid(cfg, params)
    model = _delay_model(cfg).with_seed(trial_seeds(cfg.seed, 2, 0)[2])
    est, sketches, outcome = _one_round(A, B, params, family, grid, model)
    expected = golden.table_combinations(C)
    worst = 0.0
    for eta in range(1, golden.D + 1):
        for k in range(2 * golden.BPRIME - 1):
            ref = expected[eta - 1, k]
            got = sketches[eta, k]
            rel = float(np.linalg.norm(got - ref) / max(np.linalg.norm(ref), np.finfo(float).tiny))
            worst = max(worst, rel)
            report.rows.append(dict(eta=eta, k=k, rel_error=rel))
    report.summary.update(workers=params.workers, responded=len(outcome.arrivals),
                          threshold=params.threshold, imag_residue=sketches.residue,
                          max_rel_error=worst)
    report.check("table_max_rel_error", worst, GOLDEN_RTOL, "<=")
    report.check("responded", len(outcome.arrivals), params.threshold, "==")
    return {"params": params}


def run_sweep(cfg: ExperimentConfig, combos: Sequence[SchemeParams], report: Report) -> None:
    block = (2, 2, 2)
    if cfg.random:
        block = cfg.random
    rows = sweep([SweepConfig(c, block) for c in combos], _delay_model(cfg), cfg.trials,
                 root_seed=cfg.seed, grid_mode=cfg.grid)
    for row in rows:
        rec = row.as_record()
        report.rows.append({k: v for k, v in rec.items() if not (isinstance(v, float) and math.isnan(v))})
        if row.trials:
            report.check(f"success_rate[p={row.params.p},b'={row.params.bprime},d={row.params.d}]",
                         row.success_rate, 1.0, "==")


def run(cfg: ExperimentConfig) -> Report:
    """Validate everything, execute the mode, return the report (nothing is written here)."""
    if cfg.mode not in MODES:
        raise ParameterError(f"unknown mode {cfg.mode!r}")
    if cfg.format not in ("json", "csv"):
        raise ParameterError(f"unknown format {cfg.format!r}")
    report = Report(cfg.mode, cfg.echo(),
                    timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"))
    start = time.perf_counter()
    if cfg.mode == "example-golden":
        info = run_golden(cfg, report)
        report.thresholds.append(_thresholds(info["params"]))
    else:
        combos = cfg.scheme_grid()
        report.thresholds.extend(_thresholds(c) for c in combos)
        if cfg.mode == "sweep":
            run_sweep(cfg, combos, report)
        else:
            if len(combos) != 1:
                raise ParameterError(f"mode {cfg.mode} takes a single parameter set")
            params = combos[0]
            if cfg.random is not None and cfg.mode == "approx":
                _prepare(np.empty((cfg.random[0], cfg.random[1])),
                         np.empty((cfg.random[1], cfg.random[2])), params, cfg.pad)
            (run_approx if cfg.mode == "approx" else run_sparse)(cfg, params, report)
            if params.epsilon is None and cfg.mode == "approx":
                report.summary.setdefault("note", "no epsilon given; exceedance not asserted")
    report.timing["seconds"] = time.perf_counter() - start
    return report


# ---------------------------------------------------------------- argv


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _dims(text: str) -> tuple[int, int, int]:
    parts = text.replace("x", ",").split(",")
    try:
        dims = tuple(int(v) for v in parts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad DIMS {text!r}") from exc
    if len(dims) != 3 or min(dims) < 1:
        raise argparse.ArgumentTypeError("DIMS is r,s,t with positive entries")
    return dims


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="codedsketch", description="Coded count-sketch matrix multiplication experiments.")
    ap.add_argument("--mode", choices=MODES, default="approx")
    ap.add_argument("--p", type=_int_list, default=[1])
    ap.add_argument("--m", type=_int_list, default=[1])
    ap.add_argument("--n", type=_int_list, default=[1])
    ap.add_argument("--bprime", type=_int_list)
    ap.add_argument("--d", type=_int_list)
    ap.add_argument("--workers", type=int)
    ap.add_argument("--epsilon", type=float)
    ap.add_argument("--delta", type=float)
    ap.add_argument("--log-base", type=float, default=2.0)
    ap.add_argument("--grid", choices=("roots-of-unity", "chebyshev"), default="roots-of-unity")
    ap.add_argument("--grid-radius", type=float,
                    help="circle radius for roots-of-unity (default: balanced for the scheme)")
    ap.add_argument("--matrix-a", metavar="PATH")
    ap.add_argument("--matrix-b", metavar="PATH")
    ap.add_argument("--random", type=_dims, metavar="DIMS", help="r,s,t of random operands")
    ap.add_argument("--block-sparse", type=int, metavar="K")
    ap.add_argument("--pad", action="store_true", help="zero-pad operands to divisible sizes")
    ap.add_argument("--delay-model", choices=("shifted-exponential", "fixed-permutation"),
                    default="shifted-exponential")
    ap.add_argument("--trials", type=int, default=1)
    ap.add_argument("--seed", type=int, help="root seed (fallback: $CODEDSKETCH_SEED, then 0)")
    ap.add_argument("--out", metavar="PATH")
    ap.add_argument("--format", choices=("json", "csv"), default="json")
    return ap


def config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    seed = ns.seed
    if seed is None:
        env = os.environ.get("CODEDSKETCH_SEED")
        try:
            seed = int(env) if env else 0
        except ValueError as exc:
            raise ParameterError(f"CODEDSKETCH_SEED is not an integer: {env!r}") from exc
    return ExperimentConfig(
        mode=ns.mode, p=ns.p, m=ns.m, n=ns.n, bprime=ns.bprime, d=ns.d, workers=ns.workers,
        epsilon=ns.epsilon, delta=ns.delta, log_base=ns.log_base, grid=ns.grid,
        grid_radius=ns.grid_radius, matrix_a=ns.matrix_a, matrix_b=ns.matrix_b,
        random=ns.random, block_sparse=ns.block_sparse, pad=ns.pad, delay_model=ns.delay_model,
        trials=ns.trials, seed=seed, out=ns.out, format=ns.format,
    )


def main(argv: Sequence[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(ns)
        report = run(cfg)
        text = emit_report(report, cfg.format, cfg.out)
    except NumericalFailureError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ParameterError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CodedSketchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.out is None:
        sys.stdout.write(text)
    for a in report.assertions:
        status = "PASS" if a["passed"] else "FAIL"
        print(f"[{status}] {a['name']}: {a['value']} {a['op']} {a['limit']}", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_ASSERT


if __name__ == "__main__":
    sys.exit(main())
