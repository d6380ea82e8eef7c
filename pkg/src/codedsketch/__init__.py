"""Straggler-tolerant approximate matrix multiplication with coded count-sketches."""

from .engine import (
    EncodedShare,
    EstimateReport,
    SchemeParams,
    SketchFamily,
    SketchSet,
    ThresholdReport,
    WorkerResult,
    approximate_multiply,
    balanced_radius,
    brute_force_sketches,
    decode,
    default_grid,
    encode,
    median_recover,
    threshold_cs,
    threshold_cs_for,
    threshold_exact,
    threshold_report,
    worker_compute,
)
from .errors import (
    CodedSketchError,
    ConfigurationError,
    InsufficientSamplesError,
    NumericalFailureError,
    ParameterError,
    PartitionError,
    StarvationError,
)
from .poly_codec import BlockMatrix, EvaluationGrid, MatrixPolynomial, interpolate, partition
from .sketch_core import (
    CountSketchTable,
    HashFn,
    SignFn,
    count_sketch,
    make_hash_family,
    make_sign_family,
    recover,
    recover_all,
    sketch_size_for,
    tail_norm,
)
from .straggler_sim import DelayModel, SimulationOutcome, SweepConfig, SweepRow, run_round, sweep

__version__ = "0.1.0"
