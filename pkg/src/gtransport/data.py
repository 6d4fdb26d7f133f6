"""Datasets, CSV serialization, and synthetic data generators.

A :class:`Dataset` is a column store for two-population studies: a binary
population indicator ``S`` (1 = source, 0 = target), a binary exposure ``Z``,
a real outcome ``Y``, and named real covariate columns.  Arrays are copied in
and frozen, so datasets are safe to share.

Two generator families are provided:

- :func:`sample_dgp` draws from a continuous-covariate benchmark with one
  effect modifier whose distribution differs between populations (``MSTS``),
  two more differing covariates (``W_a`` affects the outcome, ``W_b`` does
  not), shared prognostic covariates (``W_c`` modifies the effect, ``W_d``
  does not), and pure noise (``W_e``).  Three model variants differ only in
  how much wider the source covariate distributions are than the target's.
- :func:`sample_toy` draws from an exactly solvable binary example whose
  closed-form tables live on :data:`TOY_MODEL`; it is calibrated so the
  transported risk difference is identical whether one adjusts for both
  covariates or only ``B``, while the transported risk ratios disagree.

All randomness flows through named substreams keyed by ``(seed, column)``, so
every column is reproducible in isolation and independent of the others.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from ._rng import bernoulli, normal, substream

__all__ = [
    "Dataset",
    "DataError",
    "DgpSpec",
    "PopulationSplit",
    "ToyModel",
    "TOY_MODEL",
    "sample_dgp",
    "sample_toy",
    "read_csv",
    "write_csv",
    "split_population",
]

RESERVED_COLUMNS = ("S", "Z", "Y")

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")

_MAX_SEED = 2 ** 64


class DataError(ValueError):
    """Invalid dataset contents, file format, or generator specification."""


def _frozen(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


class Dataset:
    """Immutable column-oriented two-population dataset.

    Parameters
    ----------
    s, z:
        Binary columns (population indicator and exposure); any values
        outside {0, 1} are rejected.
    y:
        Real outcome column; must be finite.
    covariates:
        Mapping from column name to a real column of the same length.
        Names must be identifiers and may not shadow ``S``, ``Z`` or ``Y``.
    """

    __slots__ = ("s", "z", "y", "_covariates")

    def __init__(self, s, z, y, covariates: Mapping[str, object] | None = None):
        raw_s = np.asarray(s)
        raw_z = np.asarray(z)
        for label, raw in (("S", raw_s), ("Z", raw_z)):
            bad = ~np.isin(raw, (0, 1))
            if bad.any():
                value = raw.reshape(-1)[np.argmax(bad.reshape(-1))]
                raise DataError(f"column {label} must be 0 or 1, got {value!r}")
        object.__setattr__(self, "s", _frozen(raw_s, np.int8))
        object.__setattr__(self, "z", _frozen(raw_z, np.int8))
        object.__setattr__(self, "y", _frozen(y, np.float64))

        columns: dict[str, np.ndarray] = {}
        for name, values in (covariates or {}).items():
            if not isinstance(name, str) or not _NAME_RE.match(name):
                raise DataError(f"invalid covariate name {name!r}")
            if name in RESERVED_COLUMNS:
                raise DataError(f"covariate may not be named {name!r}")
            columns[name] = _frozen(values, np.float64)
        object.__setattr__(self, "_covariates", columns)

        n = self.y.shape[0]
        for label, arr in self._iter_columns():
            if arr.shape[0] != n:
                raise DataError(
                    f"column {label} has length {arr.shape[0]}, expected {n}")
        for label, arr in (("Y", self.y), *columns.items()):
            if not np.isfinite(arr).all():
                row = int(np.argmax(~np.isfinite(arr)))
                raise DataError(f"column {label} is not finite at row {row}")

    def _iter_columns(self):
        yield "S", self.s
        yield "Z", self.z
        yield "Y", self.y
        yield from self._covariates.items()

    def __setattr__(self, name, value):
        raise AttributeError("Dataset is immutable")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def covariate_names(self) -> tuple[str, ...]:
        return tuple(sorted(self._covariates))

    def covariate(self, name: str) -> np.ndarray:
        try:
            return self._covariates[name]
        except KeyError:
            raise DataError(
                f"no covariate {name!r}; have {list(self.covariate_names)}") from None

    def covariate_matrix(self, names: Sequence[str]) -> np.ndarray:
        """Selected covariates as an (n, len(names)) float matrix."""
        if not names:
            return np.empty((self.n, 0))
        return np.column_stack([self.covariate(name) for name in names])

    def take(self, indices) -> "Dataset":
        """Row subset (integer indices or a boolean mask), as a new dataset."""
        idx = np.asarray(indices)
        if idx.dtype == bool:
            if idx.shape[0] != self.n:
                raise DataError(
                    f"boolean mask has length {idx.shape[0]}, expected {self.n}")
            idx = np.flatnonzero(idx)
        elif idx.size == 0:
            idx = np.empty(0, dtype=np.intp)
        return Dataset(self.s[idx], self.z[idx], self.y[idx],
                       {k: v[idx] for k, v in self._covariates.items()})

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        if set(self._covariates) != set(other._covariates):
            return False
        return all(np.array_equal(a, other._column(label))
                   for label, a in self._iter_columns())

    def _column(self, label: str) -> np.ndarray:
        if label == "S":
            return self.s
        if label == "Z":
            return self.z
        if label == "Y":
            return self.y
        return self._covariates[label]

    def __repr__(self) -> str:
        return f"Dataset(n={self.n}, covariates={list(self.covariate_names)})"


class PopulationSplit(NamedTuple):
    source: Dataset
    target: Dataset


def split_population(ds: Dataset) -> PopulationSplit:
    """Partition rows into the source (``S == 1``) and target (``S == 0``)."""
    return PopulationSplit(source=ds.take(ds.s == 1), target=ds.take(ds.s == 0))


# -- continuous-covariate benchmark generator ------------------------------

#: Slope of the source-population widening of the differing covariates'
#: standard deviation: sd = 1 + slope * S.  Model 1 is the most severe
#: mismatch, model 3 the mildest.
MODEL_SCALE_SLOPES = {1: 5.0, 2: 3.0, 3: 1.0}

#: Order in which generator columns consume random substreams.
_COLUMN_STREAMS = {"S": 0, "Z": 1, "MSTS": 2, "W_a": 3, "W_b": 4,
                   "W_c": 5, "W_d": 6, "W_e": 7, "Y": 8}


def _check_seed(seed: int) -> int:
    if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
        raise DataError(f"seed must be an integer, got {seed!r}")
    if not 0 <= int(seed) < _MAX_SEED:
        raise DataError(f"seed must be in [0, 2**64), got {seed}")
    return int(seed)


@dataclass(frozen=True)
class DgpSpec:
    """Specification for one draw from the continuous benchmark.

    `model` selects the population scale mismatch (1, 2 or 3), `n` is the
    total number of rows across both populations, `seed` the stream key.
    """

    model: int
    n: int
    seed: int

    def __post_init__(self):
        if self.model not in MODEL_SCALE_SLOPES:
            raise DataError(f"model must be one of {sorted(MODEL_SCALE_SLOPES)}, "
                            f"got {self.model!r}")
        if not isinstance(self.n, (int, np.integer)) or self.n < 2:
            raise DataError(f"n must be an integer >= 2, got {self.n!r}")
        _check_seed(self.seed)


def sample_dgp(spec: DgpSpec) -> Dataset:
    """Draw one dataset from the continuous-covariate benchmark.

    Structure (all draws via per-column substreams of ``spec.seed``):

    - ``S, Z ~ Bernoulli(1/2)`` independently;
    - ``MSTS, W_a, W_b ~ Normal(1 + 3 S, 1 + slope S)`` with the
      model-specific `slope`, so the source population is both shifted and
      widened relative to the target;
    - ``W_c, W_d ~ Normal(1, 1)`` and ``W_e ~ Normal(0, 1)`` identically in
      both populations;
    - ``Y ~ Normal(100 + 20 Z + 10 MSTS Z + 10 W_a + 10 W_c Z + 10 W_d, 5)``.

    ``MSTS`` and ``W_c`` modify the exposure effect; ``W_a`` and ``W_d`` only
    shift the outcome level; ``W_b`` and ``W_e`` never enter the outcome.
    """
    if not isinstance(spec, DgpSpec):
        raise DataError(f"expected DgpSpec, got {type(spec).__name__}")
    n, seed = spec.n, spec.seed
    slope = MODEL_SCALE_SLOPES[spec.model]

    def stream(column: str):
        return substream(seed, _COLUMN_STREAMS[column])

    s = bernoulli(stream("S"), 0.5, n)
    z = bernoulli(stream("Z"), 0.5, n)
    shifted_mean = 1.0 + 3.0 * s
    widened_sd = 1.0 + slope * s
    covariates = {
        "MSTS": normal(stream("MSTS"), shifted_mean, widened_sd, n),
        "W_a": normal(stream("W_a"), shifted_mean, widened_sd, n),
        "W_b": normal(stream("W_b"), shifted_mean, widened_sd, n),
        "W_c": normal(stream("W_c"), 1.0, 1.0, n),
        "W_d": normal(stream("W_d"), 1.0, 1.0, n),
        "W_e": normal(stream("W_e"), 0.0, 1.0, n),
    }
    mean_y = (100.0 + 20.0 * z + 10.0 * covariates["MSTS"] * z
              + 10.0 * covariates["W_a"] + 10.0 * covariates["W_c"] * z
              + 10.0 * covariates["W_d"])
    y = normal(stream("Y"), mean_y, 5.0, n)
    return Dataset(s, z, y, covariates)


# -- exactly solvable binary example ---------------------------------------

@dataclass(frozen=True)
class ToyModel:
    """Closed-form two-covariate binary model.

    Both covariates are Bernoulli, independent given the population; the
    outcome is Bernoulli with a probability linear in ``B`` and ``G`` whose
    exposure contrast depends only on ``B``.  The target-population ``B``
    prevalence is calibrated so the transported risk difference equals
    :attr:`calibrated_rd` exactly — whether one adjusts for ``{B, G}`` or for
    ``{B}`` alone — while the two adjustments give different risk ratios.

    Strata are ``(b, g)`` tuples ordered by :attr:`covariate_order`.
    """

    #: P(B = 1 | S), indexed by the population indicator.
    p_b: tuple[float, float] = (0.120 / 0.399, 0.6)
    #: P(G = 1 | S), indexed by the population indicator.
    p_g: tuple[float, float] = (0.3, 0.5)
    #: Coefficients of P(Y=1 | Z=0, B, G) = intercept + slope_b B + slope_g G.
    slope_b: float = 0.2
    slope_g: float = -0.24
    intercept: float = 0.752 - 0.2 * (0.120 / 0.399)
    #: Exposure effect on the outcome probability, by level of B.
    effect_b1: float = -0.4
    effect_b0: float = -0.001
    #: The exactly transported risk difference in the target population.
    calibrated_rd: float = -0.121

    covariate_order = ("B", "G")

    def covariate_probability(self, name: str, s: int) -> float:
        """P(covariate = 1) in population `s`."""
        if name == "B":
            return self.p_b[s]
        if name == "G":
            return self.p_g[s]
        raise DataError(f"toy model has no covariate {name!r}")

    def outcome_probability(self, z, b, g):
        """P(Y = 1 | Z=z, B=b, G=g); identical in both populations."""
        base = self.intercept + self.slope_b * np.asarray(b) + self.slope_g * np.asarray(g)
        effect = self.effect_b1 * np.asarray(b) + self.effect_b0 * (1 - np.asarray(b))
        return base + np.asarray(z) * effect

    def strata(self) -> list[tuple[int, int]]:
        return [(b, g) for b in (0, 1) for g in (0, 1)]

    def stratum_distribution(
            self, transport_on: Iterable[str] = ("B", "G"),
    ) -> dict[tuple[int, int], float]:
        """Stratum weights mixing marginals: target for covariates named in
        `transport_on`, source for the rest (the populations share no
        covariate dependence, so the mixture factorizes)."""
        transported = frozenset(transport_on)
        for name in transported:
            if name not in self.covariate_order:
                raise DataError(f"toy model has no covariate {name!r}")
        probs = {name: self.covariate_probability(name, 0 if name in transported else 1)
                 for name in self.covariate_order}
        return {(b, g): (probs["B"] if b else 1 - probs["B"])
                        * (probs["G"] if g else 1 - probs["G"])
                for b, g in self.strata()}

    def source_outcome_table(self) -> dict[tuple[int, int], tuple[float, float]]:
        """Per-stratum (P(Y=1|Z=0), P(Y=1|Z=1))."""
        return {(b, g): (float(self.outcome_probability(0, b, g)),
                         float(self.outcome_probability(1, b, g)))
                for b, g in self.strata()}

    def exact_risks(self, transport_on: Iterable[str] = ("B", "G")) -> tuple[float, float]:
        """Transported (risk under Z=0, risk under Z=1) in the target."""
        weights = self.stratum_distribution(transport_on)
        table = self.source_outcome_table()
        risk0 = sum(weights[k] * table[k][0] for k in weights)
        risk1 = sum(weights[k] * table[k][1] for k in weights)
        return risk0, risk1

    def risk_difference(self, transport_on: Iterable[str] = ("B", "G")) -> float:
        risk0, risk1 = self.exact_risks(transport_on)
        return risk1 - risk0

    def risk_ratio(self, transport_on: Iterable[str] = ("B", "G")) -> float:
        risk0, risk1 = self.exact_risks(transport_on)
        return risk1 / risk0


TOY_MODEL = ToyModel()


def sample_toy(n: int, seed: int) -> Dataset:
    """Draw `n` rows from :data:`TOY_MODEL` (binary columns B, G and Y).

    ``S, Z ~ Bernoulli(1/2)`` independently; ``B`` and ``G`` are Bernoulli
    with population-specific prevalences; ``Y`` is Bernoulli with the model's
    outcome probability.  Columns use independent substreams of `seed`.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise DataError(f"n must be a positive integer, got {n!r}")
    seed = _check_seed(seed)
    m = TOY_MODEL
    s = bernoulli(substream(seed, 0), 0.5, n)
    z = bernoulli(substream(seed, 1), 0.5, n)
    b = bernoulli(substream(seed, 2), np.asarray(m.p_b)[s], n)
    g = bernoulli(substream(seed, 3), np.asarray(m.p_g)[s], n)
    y = bernoulli(substream(seed, 4), m.outcome_probability(z, b, g), n)
    return Dataset(s, z, y, {"B": b, "G": g})


# -- CSV serialization -----------------------------------------------------

def _open_maybe(path_or_file, mode: str):
    if hasattr(path_or_file, "read" if "r" in mode else "write"):
        return path_or_file, False
    return open(path_or_file, mode, newline=""), True


def write_csv(ds: Dataset, path_or_file) -> None:
    """Write a dataset as CSV: header ``S,Z,<covariates sorted>,Y``, float
    cells in shortest round-trip decimal form, LF line endings."""
    fh, owned = _open_maybe(path_or_file, "w")
    try:
        writer = csv.writer(fh, lineterminator="\n")
        names = ds.covariate_names
        writer.writerow(["S", "Z", *names, "Y"])
        columns = [ds.covariate(name) for name in names]
        for i in range(ds.n):
            writer.writerow([int(ds.s[i]), int(ds.z[i]),
                             *(repr(float(col[i])) for col in columns),
                             repr(float(ds.y[i]))])
    finally:
        if owned:
            fh.close()


def read_csv(path_or_file) -> Dataset:
    """Read a dataset written by :func:`write_csv` (column order free).

    Requires columns ``S``, ``Z`` and ``Y``; every other column becomes a
    covariate.  Raises :class:`DataError` on a missing required column,
    duplicate column names, ragged rows, unparseable cells, or ``S``/``Z``
    values outside {0, 1}; messages cite the 1-based row and the column name.
    """
    fh, owned = _open_maybe(path_or_file, "r")
    try:
        rows = csv.reader(fh)
        try:
            header = next(rows)
        except StopIteration:
            raise DataError("empty file: no header row") from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            dupe = next(h for h in header if header.count(h) > 1)
            raise DataError(f"duplicate column {dupe!r} in header")
        for required in RESERVED_COLUMNS:
            if required not in header:
                raise DataError(f"missing required column {required!r}; "
                                f"header has {header}")
        for name in header:
            if name not in RESERVED_COLUMNS and not _NAME_RE.match(name):
                raise DataError(f"invalid covariate name {name!r} in header")

        columns: dict[str, list[float]] = {name: [] for name in header}
        for lineno, row in enumerate(rows, start=2):
            if len(row) != len(header):
                raise DataError(f"row {lineno} has {len(row)} fields, "
                                f"expected {len(header)}")
            for name, cell in zip(header, row):
                try:
                    value = float(cell)
                except ValueError:
                    raise DataError(f"row {lineno}, column {name}: "
                                    f"could not parse {cell!r}") from None
                if name in ("S", "Z") and value not in (0.0, 1.0):
                    raise DataError(f"row {lineno}: {name} must be 0 or 1, "
                                    f"got {cell!r}")
                if name not in ("S", "Z") and not math.isfinite(value):
                    raise DataError(f"row {lineno}, column {name}: "
                                    f"value {cell!r} is not finite")
                columns[name].append(value)
    finally:
        if owned:
            fh.close()

    return Dataset(columns["S"], columns["Z"], columns["Y"],
                   {k: v for k, v in columns.items() if k not in RESERVED_COLUMNS})
