"""Monte Carlo harness for transport-set variable selection.

Repeatedly draws datasets from the continuous-covariate benchmark, runs the
bootstrap transport estimator under a list of candidate transport sets, and
aggregates bias, variance, mean squared error, and confidence-interval
coverage against the known target-population truth.  The interesting
comparisons are *paired*: every transport set is evaluated on the same
datasets, so differences between sets are not confounded by dataset noise.

Determinism: each (model, replicate) pair derives its dataset seed and each
(model, replicate, transport-set) cell its bootstrap seed from the master
seed by stable integer keys.  Worker processes only change how tasks are
scheduled, never which random numbers a task consumes, and BLAS threading is
pinned to one thread, so reports are bit-for-bit identical for any worker
count.
"""

from __future__ import annotations

import csv
import multiprocessing
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from threadpoolctl import threadpool_limits

from ._rng import derive_seed
from .data import DataError, DgpSpec, sample_dgp
from .estimate import bootstrap_estimate

__all__ = [
    "DEFAULT_TRANSPORT_SETS",
    "SimConfig",
    "AggregateMetrics",
    "CellMetrics",
    "SimulationReport",
    "SimulationError",
    "truth_phi",
    "aggregate_metrics",
    "run_experiment",
]

#: The candidate transport sets of the benchmark, in presentation order:
#: the bare effect modifier; the modifier plus one further covariate of each
#: type; three multi-covariate combinations; the kitchen sink; and one
#: inadmissible set that omits the modifier.
DEFAULT_TRANSPORT_SETS: tuple[tuple[str, ...], ...] = (
    ("MSTS",),
    ("MSTS", "W_a"),
    ("MSTS", "W_b"),
    ("MSTS", "W_c"),
    ("MSTS", "W_d"),
    ("MSTS", "W_e"),
    ("MSTS", "W_a", "W_b"),
    ("MSTS", "W_a", "W_c", "W_d"),
    ("MSTS", "W_c", "W_d"),
    ("MSTS", "W_a", "W_b", "W_c", "W_d", "W_e"),
    ("W_c",),
)

_DATA_STREAM = 1
_ESTIMATE_STREAM = 2

_MAX_SEED = 2 ** 64


class SimulationError(RuntimeError):
    """A replicate of the experiment failed irrecoverably."""


@dataclass(frozen=True)
class SimConfig:
    """Experiment layout.

    Defaults give the quick desk-scale run (500 replicates, 200 bootstrap
    draws); the study-scale run uses 5000 replicates and 1000 bootstrap
    draws.  `transport_sets` keeps its given order in all outputs; names
    within a set are sorted.
    """

    models: tuple[int, ...] = (1, 2, 3)
    transport_sets: tuple[tuple[str, ...], ...] = DEFAULT_TRANSPORT_SETS
    replicates: int = 500
    n: int = 5000
    n_boot: int = 200
    seed: int = 0
    workers: int = 1
    scheme: str = "full"

    def __post_init__(self):
        models = tuple(int(m) for m in self.models)
        if not models or len(set(models)) != len(models):
            raise DataError(f"models must be distinct and non-empty, got {self.models!r}")
        object.__setattr__(self, "models", models)
        sets = tuple(tuple(sorted(ts)) for ts in self.transport_sets)
        if not sets:
            raise DataError("transport_sets must be non-empty")
        if len(set(sets)) != len(sets):
            raise DataError("transport_sets contains duplicates")
        object.__setattr__(self, "transport_sets", sets)
        if not isinstance(self.replicates, int) or self.replicates < 1:
            raise DataError(f"replicates must be a positive integer, got {self.replicates!r}")
        if not isinstance(self.n_boot, int) or self.n_boot < 2:
            raise DataError(f"n_boot must be an integer >= 2, got {self.n_boot!r}")
        if not isinstance(self.workers, int) or self.workers < 1:
            raise DataError(f"workers must be a positive integer, got {self.workers!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < _MAX_SEED:
            raise DataError(f"seed must be in [0, 2**64), got {self.seed!r}")
        # Delegate model/n validation to the generator spec.
        for m in models:
            DgpSpec(model=m, n=self.n, seed=0)


def truth_phi(population: str = "target") -> float:
    """True average exposure contrast of the benchmark generator.

    The randomized contrast is ``20 + 10 E[MSTS] + 10 E[W_c]`` in either
    population: 40 in the target (both means 1) and 70 in the source
    (``E[MSTS] = 4``).  Identical across the three model variants, which
    differ only in spread.
    """
    if population == "target":
        return 40.0
    if population == "source":
        return 70.0
    raise ValueError(f"population must be 'target' or 'source', got {population!r}")


@dataclass(frozen=True)
class AggregateMetrics:
    """Replicate-level summary against a known truth.

    `variance` uses the population divisor (number of replicates), so the
    identity ``mse = bias**2 + variance`` holds exactly.
    """

    bias: float
    variance: float
    mse: float
    coverage: float


def aggregate_metrics(phis, ci_lows, ci_highs, truth: float) -> AggregateMetrics:
    """Bias, variance, MSE and interval coverage of replicate estimates."""
    phis = np.asarray(phis, dtype=np.float64)
    ci_lows = np.asarray(ci_lows, dtype=np.float64)
    ci_highs = np.asarray(ci_highs, dtype=np.float64)
    if phis.ndim != 1 or phis.size == 0:
        raise DataError("phis must be a non-empty 1-D array")
    if ci_lows.shape != phis.shape or ci_highs.shape != phis.shape:
        raise DataError("confidence bounds must match the estimates in shape")
    mean = float(phis.mean())
    bias = mean - truth
    variance = float(((phis - mean) ** 2).mean())
    mse = bias * bias + variance
    coverage = float(((ci_lows <= truth) & (truth <= ci_highs)).mean())
    return AggregateMetrics(bias=bias, variance=variance, mse=mse,
                            coverage=coverage)


@dataclass(frozen=True)
class CellMetrics:
    """Aggregated results for one (model, transport set) cell."""

    model: int
    transport_set: tuple[str, ...]
    n_replicates: int
    bias: float
    variance: float
    mse: float
    coverage: float
    mean_se: float
    boot_failures: int

    @property
    def label(self) -> str:
        return "{" + ", ".join(self.transport_set) + "}"


_CSV_COLUMNS = ("model", "transport_set", "n_replicates", "bias", "variance",
                "mse", "coverage", "mean_se", "boot_failures")


@dataclass(frozen=True)
class SimulationReport:
    """Full experiment output: per-cell summaries plus the per-replicate
    estimates they were computed from (keyed by model, then in
    ``config.transport_sets`` order)."""

    config: SimConfig
    cells: tuple[CellMetrics, ...]
    _phi: Mapping[tuple[int, int], np.ndarray] = field(repr=False)
    _ci_low: Mapping[tuple[int, int], np.ndarray] = field(repr=False)
    _ci_high: Mapping[tuple[int, int], np.ndarray] = field(repr=False)
    _se: Mapping[tuple[int, int], np.ndarray] = field(repr=False)

    def _ts_index(self, transport_set) -> int:
        key = tuple(sorted(transport_set))
        try:
            return self.config.transport_sets.index(key)
        except ValueError:
            raise DataError(f"transport set {key!r} not in this report") from None

    def phis(self, model: int, transport_set) -> np.ndarray:
        """Per-replicate point estimates for one cell."""
        return self._phi[model, self._ts_index(transport_set)]

    def intervals(self, model: int, transport_set) -> tuple[np.ndarray, np.ndarray]:
        i = self._ts_index(transport_set)
        return self._ci_low[model, i], self._ci_high[model, i]

    def standard_errors(self, model: int, transport_set) -> np.ndarray:
        return self._se[model, self._ts_index(transport_set)]

    def cell(self, model: int, transport_set) -> CellMetrics:
        i = self._ts_index(transport_set)
        for c in self.cells:
            if c.model == model and c.transport_set == self.config.transport_sets[i]:
                return c
        raise DataError(f"no cell for model {model}")

    def to_csv(self, path_or_file) -> None:
        """Write cell summaries as CSV with exact (round-trippable) floats."""
        own = not hasattr(path_or_file, "write")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(_CSV_COLUMNS)
            for c in self.cells:
                writer.writerow([c.model, c.label, c.n_replicates,
                                 repr(c.bias), repr(c.variance), repr(c.mse),
                                 repr(c.coverage), repr(c.mean_se),
                                 c.boot_failures])
        finally:
            if own:
                fh.close()

    def to_table(self) -> str:
        """Aligned text table of the cell summaries."""
        header = ("model", "transport set", "bias", "variance", "mse",
                  "coverage", "mean se")
        rows = [header]
        for c in self.cells:
            rows.append((str(c.model), c.label, f"{c.bias:+.4f}",
                         f"{c.variance:.4f}", f"{c.mse:.4f}",
                         f"{c.coverage:.3f}", f"{c.mean_se:.4f}"))
        widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
        lines = []
        for idx, row in enumerate(rows):
            lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
            if idx == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines)


# -- experiment driver -----------------------------------------------------

_WORKER_CONFIG: SimConfig | None = None
_WORKER_LIMIT = None


def _init_worker(config: SimConfig) -> None:
    global _WORKER_CONFIG, _WORKER_LIMIT
    _WORKER_CONFIG = config
    # Hold the controller for the worker's lifetime: single-threaded BLAS
    # keeps results identical regardless of process fan-out.
    _WORKER_LIMIT = threadpool_limits(limits=1)


def _run_task(task: tuple[int, int]):
    model, rep = task
    config = _WORKER_CONFIG
    try:
        dataset_seed = derive_seed(config.seed, _DATA_STREAM, model, rep)
        ds = sample_dgp(DgpSpec(model=model, n=config.n, seed=dataset_seed))
        payload = []
        for ts_index, ts in enumerate(config.transport_sets):
            boot_seed = derive_seed(config.seed, _ESTIMATE_STREAM, model, rep,
                                    ts_index)
            est = bootstrap_estimate(ds, ts, n_boot=config.n_boot,
                                     seed=boot_seed, scheme=config.scheme)
            payload.append((est.phi, est.ci_low, est.ci_high, est.se,
                            est.n_failed))
        return model, rep, payload
    except SimulationError:
        raise
    except Exception as exc:  # surface task identity across process exits
        raise SimulationError(
            f"model {model}, replicate {rep}: {type(exc).__name__}: {exc}") from None


def run_experiment(config: SimConfig) -> SimulationReport:
    """Run the full experiment described by `config`.

    Tasks are one dataset each (a model-replicate pair, evaluated under
    every transport set so comparisons stay paired) and are farmed out to
    `config.workers` spawned processes; results are reduced in a fixed sorted
    order.  The report is identical for any worker count.
    """
    tasks = [(m, r) for m in config.models for r in range(config.replicates)]
    results: dict[tuple[int, int], list] = {}
    if config.workers == 1:
        _init_worker(config)
        for task in tasks:
            model, rep, payload = _run_task(task)
            results[model, rep] = payload
    else:
        ctx = multiprocessing.get_context("spawn")
        chunksize = max(1, len(tasks) // (config.workers * 8))
        with ctx.Pool(config.workers, initializer=_init_worker,
                      initargs=(config,)) as pool:
            for model, rep, payload in pool.imap_unordered(
                    _run_task, tasks, chunksize=chunksize):
                results[model, rep] = payload

    truth = truth_phi("target")
    phi: dict[tuple[int, int], np.ndarray] = {}
    ci_low: dict[tuple[int, int], np.ndarray] = {}
    ci_high: dict[tuple[int, int], np.ndarray] = {}
    se: dict[tuple[int, int], np.ndarray] = {}
    cells = []
    for model in config.models:
        ordered = [results[model, rep] for rep in range(config.replicates)]
        for ts_index, ts in enumerate(config.transport_sets):
            rows = [payload[ts_index] for payload in ordered]
            cell_phi = np.array([row[0] for row in rows])
            cell_low = np.array([row[1] for row in rows])
            cell_high = np.array([row[2] for row in rows])
            cell_se = np.array([row[3] for row in rows])
            failures = int(sum(row[4] for row in rows))
            for arr in (cell_phi, cell_low, cell_high, cell_se):
                arr.setflags(write=False)
            phi[model, ts_index] = cell_phi
            ci_low[model, ts_index] = cell_low
            ci_high[model, ts_index] = cell_high
            se[model, ts_index] = cell_se
            agg = aggregate_metrics(cell_phi, cell_low, cell_high, truth)
            cells.append(CellMetrics(
                model=model, transport_set=ts,
                n_replicates=config.replicates, bias=agg.bias,
                variance=agg.variance, mse=agg.mse, coverage=agg.coverage,
                mean_se=float(cell_se.mean()), boot_failures=failures))
    return SimulationReport(config=config, cells=tuple(cells), _phi=phi,
                            _ci_low=ci_low, _ci_high=ci_high, _se=se)
