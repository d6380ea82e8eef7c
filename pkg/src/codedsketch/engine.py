"""The coded-sketch scheme end to end.

Master side: partition, layer, sketch, Lagrange-combine and evaluate at one
point per worker. Workers multiply their two blocks. The master interpolates
the product polynomial from any ``(2pb'-1)(2d-1)`` answers, splits it into the
``d`` per-sketch products, reads off the hidden count-sketches of ``C`` and
takes elementwise medians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import poly_codec
from .errors import ConfigurationError, InsufficientSamplesError, NumericalFailureError, ParameterError
from .poly_codec import EvaluationGrid, partition
from .sketch_core import derive_seeds, make_hash_family, make_sign_family, sketch_size_for

DEFAULT_RESIDUE_RTOL = 1e-6


def threshold_cs_for(p: int, width: int, d: int) -> int:
    return (2 * p * width - 1) * (2 * d - 1)


@dataclass(frozen=True)
class SchemeParams:
    p: int
    m: int
    n: int
    bprime: int
    d: int
    workers: int | None = None
    epsilon: float | None = None
    delta: float | None = None
    log_base: float = 2

    def __post_init__(self):
        for name in ("p", "m", "n", "bprime", "d"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.workers is None:
            object.__setattr__(self, "workers", self.threshold)
        elif self.workers < self.threshold:
            raise ConfigurationError(
                f"{self.workers} workers cannot reach the recovery threshold {self.threshold}"
            )

    @classmethod
    def from_accuracy(cls, epsilon: float, delta: float, p: int, m: int, n: int,
                      workers: int | None = None, log_base: float = 2) -> "SchemeParams":
        bprime, d = sketch_size_for(epsilon, delta, log_base)
        return cls(p, m, n, bprime, d, workers, epsilon, delta, log_base)

    @property
    def stride(self) -> int:
        """Exponent ``2pb' - 1`` substituted for the Lagrange variable."""
        return 2 * self.p * self.bprime - 1

    @property
    def sketch_length(self) -> int:
        return 2 * self.bprime - 1

    @property
    def threshold(self) -> int:
        return threshold_cs_for(self.p, self.bprime, self.d)

    @property
    def product_degree(self) -> int:
        return self.threshold - 1

    @property
    def share_degree(self) -> int:
        return (self.p - 1) + self.p * (self.bprime - 1) + self.stride * (self.d - 1)


def threshold_cs(params: SchemeParams) -> int:
    """Number of answers the decoder interpolates from: ``(2pb'-1)(2d-1)``."""
    return params.threshold


def threshold_exact(params: SchemeParams) -> int:
    """Recovery threshold of the exact entangled polynomial code, ``pmn + p - 1``."""
    return params.p * params.m * params.n + params.p - 1


@dataclass(frozen=True)
class ThresholdReport:
    operational: int
    stated_bound: int | None
    exact: int
    stated_min: int | None
    bprime: int | None
    d: int | None


def threshold_report(params: SchemeParams) -> ThresholdReport:
    """Thresholds side by side.

    ``stated_bound`` is ``(2p*ceil(3/eps^2) - 1)(2*ceil(log 1/delta) - 1) - 1``,
    one below the count the decoder actually waits for.
    """
    exact = threshold_exact(params)
    if params.epsilon is None or params.delta is None:
        return ThresholdReport(params.threshold, None, exact, None, None, None)
    bprime, d = sketch_size_for(params.epsilon, params.delta, params.log_base)
    stated = threshold_cs_for(params.p, bprime, d) - 1
    return ThresholdReport(params.threshold, stated, exact, min(stated, exact), bprime, d)


@dataclass(frozen=True)
class SketchFamily:
    row_hashes: tuple
    row_signs: tuple
    col_hashes: tuple
    col_signs: tuple
    seed: int | None = None

    def __post_init__(self):
        d = len(self.row_hashes)
        if d < 1 or not (len(self.row_signs) == len(self.col_hashes) == len(self.col_signs) == d):
            raise ParameterError("family needs d >= 1 functions of each kind")
        widths = {h.range for h in (*self.row_hashes, *self.col_hashes)}
        if len(widths) != 1:
            raise ParameterError(f"hashes disagree on width: {sorted(widths)}")
        for group, dom in ((self.row_hashes + self.row_signs, self.m),
                           (self.col_hashes + self.col_signs, self.n)):
            if any(f.domain != dom for f in group):
                raise ParameterError("functions on one side must share a domain")

    @classmethod
    def from_seed(cls, seed: int, params: SchemeParams) -> "SketchFamily":
        # derivation order: row hashes, row signs, column hashes, column signs
        s_rh, s_rs, s_ch, s_cs = derive_seeds(seed, 4)
        return cls(
            tuple(make_hash_family(s_rh, params.d, params.m, params.bprime)),
            tuple(make_sign_family(s_rs, params.d, params.m)),
            tuple(make_hash_family(s_ch, params.d, params.n, params.bprime)),
            tuple(make_sign_family(s_cs, params.d, params.n)),
            seed=int(seed),
        )

    @property
    def d(self) -> int:
        return len(self.row_hashes)

    @property
    def m(self) -> int:
        return self.row_hashes[0].domain

    @property
    def n(self) -> int:
        return self.col_hashes[0].domain

    @property
    def width(self) -> int:
        return self.row_hashes[0].range

    def tables(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """``(h, s, h~, s~)`` as ``(d, m)`` / ``(d, n)`` integer arrays."""
        return (
            np.stack([f.table for f in self.row_hashes]),
            np.stack([f.table for f in self.row_signs]),
            np.stack([f.table for f in self.col_hashes]),
            np.stack([f.table for f in self.col_signs]),
        )

    def check(self, params: SchemeParams) -> None:
        if (self.d, self.m, self.n, self.width) != (params.d, params.m, params.n, params.bprime):
            raise ParameterError(
                f"family (d={self.d}, m={self.m}, n={self.n}, b'={self.width}) does not match "
                f"params (d={params.d}, m={params.m}, n={params.n}, b'={params.bprime})"
            )


@dataclass(frozen=True)
class EncodedShare:
    index: int
    theta: complex
    F: np.ndarray
    G: np.ndarray


@dataclass(frozen=True)
class WorkerResult:
    index: int
    theta: complex
    product: np.ndarray
    delay: float | None = None


@dataclass
class SketchSet:
    """``blocks[eta-1, k]`` is the hidden count-sketch entry ``k`` of sketch ``eta``."""

    blocks: np.ndarray
    family: SketchFamily = field(repr=False)
    residue: float = 0.0
    used: tuple[int, ...] = ()

    @property
    def d(self) -> int:
        return self.blocks.shape[0]

    def __getitem__(self, key: tuple[int, int]) -> np.ndarray:
        eta, k = key
        return self.blocks[eta - 1, k]


@dataclass
class EstimateReport:
    estimate: np.ndarray
    blocks: np.ndarray
    candidates: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)


def _check_operands(A, B, params: SchemeParams):
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[0]:
        raise ParameterError(f"cannot multiply shapes {A.shape} and {B.shape}")
    return partition(A, params.m, params.p), partition(B, params.p, params.n)


def balanced_radius(params: SchemeParams) -> float:
    """Circle radius putting ``|w| = |x|^(2pb'-1)`` on the outermost Lagrange node ``d``.

    Decoding evaluates the regrouped product at ``w = 1..d``; on the unit
    circle that step amplifies rounding by roughly ``sum_q d^q``. This radius
    balances coefficient scales so the amplification stays O(d).
    """
    return float(params.d) ** (1.0 / params.stride)


def default_grid(params: SchemeParams, mode: str = "roots-of-unity",
                 radius: float | None = None) -> EvaluationGrid:
    if mode == "roots-of-unity":
        return EvaluationGrid.roots_of_unity(
            params.workers, balanced_radius(params) if radius is None else radius)
    return EvaluationGrid.make(mode, params.workers)


def encode(A, B, params: SchemeParams, family: SketchFamily,
           grid: EvaluationGrid | None = None) -> list[EncodedShare]:
    """One ``(F(theta_j), G(theta_j))`` pair per worker (default grid: :func:`default_grid`)."""
    if grid is None:
        grid = default_grid(params)
    if len(grid) != params.workers:
        raise ConfigurationError(f"grid has {len(grid)} points for {params.workers} workers")
    if len(grid) < params.threshold:
        raise ConfigurationError(f"{len(grid)} workers < threshold {params.threshold}")
    family.check(params)
    Ab, Bb = _check_operands(A, B, params)
    h, s, ht, st = family.tables()
    p, S = params.p, params.stride
    theta = grid.points
    L = np.stack([poly_codec.lagrange_weights(params.d, w) for w in theta**S])  # (N, d)
    k = np.arange(p)
    # F weights: L_l(theta^S) * s_l(i) * theta^(p*h_l(i) + k)
    wF = L[:, :, None, None] * s[None, :, :, None] * theta[:, None, None, None] ** (
        p * h[None, :, :, None] + k[None, None, None, :])
    # G weights: B block (k, j) carries x^(p-1-k)
    wG = L[:, :, None, None] * st[None, :, :, None] * theta[:, None, None, None] ** (
        p * ht[None, :, :, None] + (p - 1 - k)[None, None, None, :])
    Fs = np.einsum("nlik,ikab->nab", wF, Ab.blocks)
    Gs = np.einsum("nljk,kjab->nab", wG, Bb.blocks)
    return [EncodedShare(j, complex(theta[j]), Fs[j], Gs[j]) for j in range(len(theta))]


def worker_compute(share: EncodedShare, delay: float | None = None) -> WorkerResult:
    if share.F.shape[1] != share.G.shape[0]:
        raise ParameterError(f"share blocks {share.F.shape} and {share.G.shape} are not conformable")
    return WorkerResult(share.index, share.theta, share.F @ share.G, delay)


def decode(results: Sequence[WorkerResult], params: SchemeParams, family: SketchFamily,
           residue_rtol: float = DEFAULT_RESIDUE_RTOL, method: str = "auto") -> SketchSet:
    """Recover the ``d`` hidden count-sketches of ``C`` from worker answers.

    The first ``threshold`` results (arrival order) are used. Raises
    :class:`NumericalFailureError` if the imaginary residue exceeds
    ``residue_rtol`` times the largest real magnitude, or if the point set's
    Vandermonde condition number times machine epsilon does.
    """
    K = params.threshold
    if len(results) < K:
        raise InsufficientSamplesError(K, len(results))
    family.check(params)
    chosen = sorted(results[:K], key=lambda r: r.index)
    interp = poly_codec.interpolate([(r.theta, r.product) for r in chosen], K - 1, method)
    # a real point set leaves no imaginary residue to check; bound the rounding instead
    amplified = interp.condition * np.finfo(float).eps
    if amplified > residue_rtol:
        raise NumericalFailureError(amplified, residue_rtol, "rounding bound cond(V)*eps")
    coeffs = interp.polynomial.coeffs
    S, p = params.stride, params.p
    # exponent q*S + r  ->  R[q, r]; F_l G_k^T has x-degree <= S - 1 so the split is unique
    R = coeffs.reshape(2 * params.d - 1, S, *coeffs.shape[1:])
    eta = np.arange(1, params.d + 1)
    per_sketch = np.einsum("eq,qrab->erab", eta[:, None] ** np.arange(2 * params.d - 1), R)
    ks = np.arange(params.sketch_length) * p + p - 1
    blocks = per_sketch[:, ks]
    residue = float(np.max(np.abs(blocks.imag))) if blocks.size else 0.0
    scale = float(np.max(np.abs(blocks.real))) if blocks.size else 0.0
    limit = residue_rtol * max(scale, np.finfo(float).tiny)
    if residue > limit and residue > 0:
        raise NumericalFailureError(residue, limit)
    return SketchSet(np.ascontiguousarray(blocks.real), family, residue, tuple(r.index for r in chosen))


def median_recover(sketches: SketchSet, params: SchemeParams,
                   keep_candidates: bool = False) -> EstimateReport:
    h, s, ht, st = sketches.family.tables()
    d = sketches.d
    bucket = h[:, :, None] + ht[:, None, :]  # (d, m, n)
    sign = (s[:, :, None] * st[:, None, :]).astype(float)
    cand = sign[..., None, None] * sketches.blocks[np.arange(d)[:, None, None], bucket]
    blocks = np.median(cand, axis=0)  # (m, n, br, bc)
    estimate = poly_codec.BlockMatrix(blocks).assemble()
    return EstimateReport(estimate, blocks, cand if keep_candidates else None)


def responders_default(params: SchemeParams) -> list[int]:
    return list(range(params.threshold))


def approximate_multiply(A, B, params: SchemeParams, seed: int,
                         grid: EvaluationGrid | None = None,
                         responders: Sequence[int] | None = None,
                         family: SketchFamily | None = None,
                         compare_exact: bool = False) -> EstimateReport:
    """Encode, compute on ``responders`` (default: the first ``threshold`` workers), decode."""
    if family is None:
        family = SketchFamily.from_seed(seed, params)
    shares = encode(A, B, params, family, grid)
    if responders is None:
        responders = responders_default(params)
    results = [worker_compute(shares[j]) for j in responders]
    sketches = decode(results, params, family)
    report = median_recover(sketches, params)
    report.diagnostics["imag_residue"] = sketches.residue
    report.diagnostics["responders"] = list(sketches.used)
    if compare_exact:
        C = np.asarray(A, dtype=float) @ np.asarray(B, dtype=float)
        norm = float(np.linalg.norm(C))
        err = float(np.max(np.abs(report.estimate - C))) if C.size else 0.0
        report.diagnostics.update(
            max_abs_error=err,
            frobenius_norm=norm,
            relative_max_error=err / norm if norm > 0 else (0.0 if err == 0 else math.inf),
        )
    return report


def brute_force_sketches(C, params: SchemeParams, family: SketchFamily) -> np.ndarray:
    """Hidden sketches by direct summation over blocks of an exact product.

    ``out[eta-1, k] = sum_{h(i) + h~(j) = k} s(i) s~(j) C[i, j]``.
    """
    Cb = partition(np.asarray(C, dtype=float), params.m, params.n)
    h, s, ht, st = family.tables()
    out = np.zeros((params.d, params.sketch_length, *Cb.block_shape))
    for e in range(params.d):
        for i in range(params.m):
            for j in range(params.n):
                out[e, h[e, i] + ht[e, j]] += s[e, i] * st[e, j] * Cb[i, j]
    return out
