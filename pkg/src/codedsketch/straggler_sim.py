"""Seeded master/worker rounds with simulated completion times.

Delays are plain numbers drawn from a :class:`DelayModel`, so results never
depend on the machine running the tests. A round delivers the ``K`` fastest
surviving workers, ordered by ``(delay, index)``.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .engine import (
    EncodedShare,
    SchemeParams,
    SketchFamily,
    WorkerResult,
    decode,
    default_grid,
    encode,
    median_recover,
    worker_compute,
)
from .errors import CodedSketchError, ParameterError, StarvationError

KINDS = ("shifted-exponential", "fixed-permutation", "adversarial-set")


@dataclass(frozen=True)
class DelayModel:
    """How long each worker takes.

    ``shifted-exponential``: ``shift + Exp(rate)``.
    ``fixed-permutation``: worker ``j`` takes ``order[j]`` (default ``j + 1``).
    ``adversarial-set``: ``shift + Exp(rate)`` scaled by ``slow_factor`` on
    ``slow``; an infinite factor drops those workers.
    ``drop`` removes workers under any model.
    """

    kind: str = "shifted-exponential"
    shift: float = 1.0
    rate: float = 1.0
    order: tuple[float, ...] | None = None
    slow: frozenset[int] = frozenset()
    slow_factor: float = math.inf
    drop: frozenset[int] = frozenset()
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown delay model {self.kind!r}; choose from {KINDS}")
        if self.rate <= 0 or self.shift < 0:
            raise ParameterError("need rate > 0 and shift >= 0")
        if self.slow_factor < 1:
            raise ParameterError("slow_factor must be >= 1")

    def with_seed(self, seed: int) -> "DelayModel":
        return DelayModel(self.kind, self.shift, self.rate, self.order, self.slow,
                          self.slow_factor, self.drop, int(seed))

    def sample(self, count: int) -> np.ndarray:
        """Delays for workers ``0..count-1``; ``inf`` marks a dropped worker."""
        if self.kind == "fixed-permutation":
            delays = (np.arange(1, count + 1, dtype=float) if self.order is None
                      else np.asarray(self.order, dtype=float))
            if delays.shape != (count,):
                raise ParameterError(f"order has {delays.size} entries for {count} workers")
            if np.any(delays <= 0):
                raise ParameterError("fixed delays must be positive")
            delays = delays.copy()
        else:
            rng = np.random.default_rng(self.seed)
            delays = self.shift + rng.exponential(1.0 / self.rate, size=count)
            # exponential draws can be exactly zero only with shift 0
            delays = np.maximum(delays, np.nextafter(0.0, 1.0))
        if self.kind == "adversarial-set":
            slow = [j for j in self.slow if j < count]
            delays[slow] = delays[slow] * self.slow_factor
        delays[[j for j in self.drop if j < count]] = np.inf
        return delays


@dataclass
class SimulationOutcome:
    arrivals: list[WorkerResult]
    kth_delay: float
    dropped: frozenset[int]
    delays: np.ndarray = field(repr=False)

    @property
    def delivered(self) -> list[int]:
        return [r.index for r in self.arrivals]


def run_round(shares: Sequence[EncodedShare], model: DelayModel, K: int,
              max_workers: int | None = None,
              compute: Callable[[EncodedShare], WorkerResult] = worker_compute) -> SimulationOutcome:
    """Deliver the ``K`` fastest surviving workers' products.

    Only delivered workers are computed; ``max_workers > 1`` runs them on a
    thread pool. Arrival order is by ``(delay, index)`` either way.
    """
    N = len(shares)
    if K < 1:
        raise ParameterError("K must be >= 1")
    delays = model.sample(N)
    dropped = frozenset(int(j) for j in np.flatnonzero(~np.isfinite(delays)))
    alive = N - len(dropped)
    if K > alive:
        raise StarvationError(K, alive)
    order = sorted((float(delays[j]), j) for j in range(N) if j not in dropped)[:K]
    chosen = [shares[j] for _, j in order]
    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            products = list(pool.map(compute, chosen))
    else:
        products = [compute(s) for s in chosen]
    arrivals = [WorkerResult(r.index, r.theta, r.product, t) for r, (t, _) in zip(products, order)]
    return SimulationOutcome(arrivals, order[-1][0], dropped, delays)


@dataclass(frozen=True)
class SweepConfig:
    params: SchemeParams
    block: tuple[int, int, int] = (2, 2, 2)  # (r/m, s/p, t/n)

    @property
    def dims(self) -> tuple[int, int, int]:
        p = self.params
        return self.block[0] * p.m, self.block[1] * p.p, self.block[2] * p.n


@dataclass
class SweepRow:
    params: SchemeParams
    trials: int
    successes: int
    error_quantiles: dict[str, float]
    kth_delay_mean: float
    wall_seconds: float = 0.0

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials if self.trials else 0.0

    def as_record(self) -> dict:
        p = self.params
        rec = dict(p=p.p, m=p.m, n=p.n, bprime=p.bprime, d=p.d, workers=p.workers,
                   threshold=p.threshold, trials=self.trials, success_rate=self.success_rate,
                   kth_delay_mean=self.kth_delay_mean)
        rec.update({f"rel_error_{k}": v for k, v in self.error_quantiles.items()})
        return rec


def trial_seeds(root_seed: int, config_index: int, trial: int) -> tuple[int, int, int]:
    """(matrix seed, family seed, delay seed) for one trial, fixed by the root seed."""
    ss = np.random.SeedSequence([int(root_seed), config_index, trial])
    a, b, c = ss.generate_state(3, dtype=np.uint64)
    return int(a), int(b), int(c)


def _quantiles(errors: list[float]) -> dict[str, float]:
    if not errors:
        return {"median": math.nan, "p90": math.nan, "max": math.nan}
    e = np.asarray(errors)
    return {"median": float(np.median(e)), "p90": float(np.quantile(e, 0.9)), "max": float(e.max())}


def sweep(configs: Sequence[SweepConfig | SchemeParams], model: DelayModel, trials: int,
          root_seed: int = 0, grid_mode: str = "roots-of-unity",
          wall_clock: bool = False) -> list[SweepRow]:
    """One row per configuration, aggregated over ``trials`` seeded rounds.

    The relative error of a trial is ``max |C~ - C| / ||C||_F``. A trial
    succeeds when decoding raises no package error.
    """
    if trials < 0:
        raise ParameterError("trials must be >= 0")
    rows = []
    for ci, cfg in enumerate(configs):
        if isinstance(cfg, SchemeParams):
            cfg = SweepConfig(cfg)
        params = cfg.params
        r, s, t = cfg.dims
        grid = default_grid(params, grid_mode)
        errors, delays, ok = [], [], 0
        start = time.perf_counter()
        for trial in range(trials):
            mseed, fseed, dseed = trial_seeds(root_seed, ci, trial)
            rng = np.random.default_rng(mseed)
            A, B = rng.standard_normal((r, s)), rng.standard_normal((s, t))
            family = SketchFamily.from_seed(fseed, params)
            shares = encode(A, B, params, family, grid)
            try:
                outcome = run_round(shares, model.with_seed(dseed), params.threshold)
                est = median_recover(decode(outcome.arrivals, params, family), params).estimate
            except CodedSketchError:
                continue
            ok += 1
            delays.append(outcome.kth_delay)
            C = A @ B
            norm = np.linalg.norm(C)
            errors.append(float(np.max(np.abs(est - C)) / norm) if norm > 0 else 0.0)
        wall = time.perf_counter() - start if wall_clock else 0.0
        rows.append(SweepRow(params, trials, ok, _quantiles(errors),
                             float(np.mean(delays)) if delays else math.nan, wall))
    return rows
