"""Transport estimators: parametric g-computation and stratified tables.

The parametric estimator fits, in the source population, an ordinary
least-squares model of the outcome on the exposure fully interacted with the
chosen transport set, then averages the fitted exposure contrast over the
target population's covariate rows.  Uncertainty comes from a nonparametric
bootstrap stratified by population.  For discrete covariates the same
transport formula is available in exact stratified form, with positivity
failures reported rather than silently extrapolated.

Rank deficiency is handled once, at the point fit: a pivoted QR drops
numerically dependent columns (in pivot order), and every bootstrap
replicate refits on the surviving columns only.  Replicates whose resample
nevertheless loses rank are redrawn from a fresh substream, so results do
not depend on which replicate happened to fail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg

from . import backend
from ._rng import substream
from .data import DataError, Dataset, split_population
from .diagram import TransportSet

__all__ = [
    "FitError",
    "BootstrapError",
    "PositivityError",
    "ExpandedDesign",
    "OlsFit",
    "GFitResult",
    "TransportEstimate",
    "DiscreteTransportResult",
    "CovariateOverlap",
    "PositivityReport",
    "covariate_expansion",
    "expand_design",
    "fit_ols",
    "g_transport",
    "bootstrap_estimate",
    "empirical_tables",
    "discrete_transport",
    "positivity_diagnostic",
]

#: Largest transport set the factorial expansion accepts (2**12 = 4096
#: expansion columns); beyond this the design is certainly wider than any
#: reasonable dataset.
MAX_TRANSPORT_SET = 12

#: Relative tolerance for rank detection: a design column is dropped when
#: its pivoted-QR diagonal falls below this fraction of the largest column
#: norm.
RANK_TOL_REL = 1e-10

#: Normal quantile used for the Wald confidence interval.
WALD_Z = 1.96

_SCHEMES = ("full", "treatment")

_BOOT_STREAM = 3

_MAX_REDRAWS = 10

_MAX_FAILED_FRACTION = 0.01

#: Cap on distinct strata in the discrete estimator; exceeding it almost
#: always means a continuous covariate was passed where the parametric
#: estimator was intended.
MAX_STRATA = 256


class FitError(ValueError):
    """The design or data cannot support the requested fit."""


class BootstrapError(RuntimeError):
    """Too many bootstrap resamples were numerically degenerate."""


class PositivityError(ValueError):
    """A target stratum has no source support for some exposure arm."""


# -- design construction ---------------------------------------------------

def _normalize_names(transport_set) -> tuple[str, ...]:
    if isinstance(transport_set, TransportSet):
        names = list(transport_set)
    elif isinstance(transport_set, str):
        raise FitError("transport set must be a collection of names, "
                       f"not the bare string {transport_set!r}")
    else:
        names = list(transport_set)
    ordered = tuple(sorted(names))
    if len(set(ordered)) != len(ordered):
        dupe = next(n for n in ordered if ordered.count(n) > 1)
        raise FitError(f"duplicate covariate {dupe!r} in transport set")
    if len(ordered) > MAX_TRANSPORT_SET:
        raise FitError(f"transport set of {len(ordered)} covariates exceeds "
                       f"the factorial-expansion cap of {MAX_TRANSPORT_SET}")
    return ordered


def _check_scheme(scheme: str) -> str:
    if scheme not in _SCHEMES:
        raise FitError(f"unknown interaction scheme {scheme!r}; "
                       f"expected one of {_SCHEMES}")
    return scheme


def covariate_expansion(matrix: np.ndarray, names: Sequence[str],
                        scheme: str = "full") -> tuple[np.ndarray, tuple[str, ...]]:
    """Expansion columns of a covariate matrix, with term labels.

    ``scheme="full"`` produces all products over subsets of the covariates in
    binary-counting order (first column is the constant 1, covariate ``i`` is
    bit ``i``); ``scheme="treatment"`` produces only the constant and the
    main effects.  Labels join factor names with ``:``, the constant being
    ``"1"``.
    """
    _check_scheme(scheme)
    matrix = np.asarray(matrix, dtype=np.float64)
    n, p = matrix.shape
    if p != len(names):
        raise FitError(f"{p} covariate columns but {len(names)} names")
    if scheme == "treatment" or p == 0:
        cols = np.hstack([np.ones((n, 1)), matrix])
        labels = ("1", *names)
        return cols, labels
    out = np.empty((n, 2 ** p))
    out[:, 0] = 1.0
    size = 1
    for j in range(p):
        out[:, size:2 * size] = out[:, :size] * matrix[:, j:j + 1]
        size *= 2
    labels = tuple(
        ":".join(names[i] for i in range(p) if k >> i & 1) or "1"
        for k in range(2 ** p))
    return out, labels


@dataclass(frozen=True, eq=False)
class ExpandedDesign:
    """A regression design of expansion columns interleaved with their
    exposure interactions.

    Column ``2k`` is expansion term ``k``; column ``2k + 1`` is the exposure
    times that term, so the fitted exposure contrast at covariate row ``c``
    is the inner product of ``c``'s expansion with the odd coefficients.
    """

    x: np.ndarray
    labels: tuple[str, ...]
    expansion_labels: tuple[str, ...]

    @property
    def n_terms(self) -> int:
        return len(self.expansion_labels)

    def interaction_column(self, k: int) -> int:
        """Design-column index of the exposure interaction with term `k`."""
        return 2 * k + 1


def expand_design(z: np.ndarray, matrix: np.ndarray, names: Sequence[str],
                  scheme: str = "full") -> ExpandedDesign:
    """Build the exposure-interacted design for one population."""
    z = np.asarray(z, dtype=np.float64)
    cols, term_labels = covariate_expansion(matrix, names, scheme)
    if cols.shape[0] != z.shape[0]:
        raise FitError(f"exposure column has {z.shape[0]} rows, "
                       f"covariates have {cols.shape[0]}")
    q = cols.shape[1]
    x = np.empty((cols.shape[0], 2 * q))
    x[:, 0::2] = cols
    x[:, 1::2] = cols * z[:, None]
    labels = []
    for term in term_labels:
        labels.append(term)
        labels.append("Z" if term == "1" else f"Z:{term}")
    return ExpandedDesign(x=x, labels=tuple(labels),
                          expansion_labels=term_labels)


# -- ordinary least squares ------------------------------------------------

@dataclass(frozen=True, eq=False)
class OlsFit:
    """A least-squares fit after rank-revealing column selection.

    `beta` is indexed parallel to `retained` (original column indices,
    ascending).  `dropped` lists discarded columns in the order the pivoted
    QR rejected them, so repeated fits discard deterministically.
    `residual_sd` is the classical root-mean-square error with
    degrees-of-freedom correction, NaN when the fit is saturated.
    """

    labels: tuple[str, ...]
    beta: np.ndarray
    retained: tuple[int, ...]
    dropped: tuple[int, ...]
    residual_sd: float
    n_obs: int

    @property
    def rank(self) -> int:
        return len(self.retained)

    @property
    def retained_labels(self) -> tuple[str, ...]:
        return tuple(self.labels[i] for i in self.retained)

    @property
    def dropped_labels(self) -> tuple[str, ...]:
        return tuple(self.labels[i] for i in self.dropped)

    def coefficient(self, label: str) -> float:
        """Coefficient by column label; FitError if unknown or dropped."""
        try:
            column = self.labels.index(label)
        except ValueError:
            raise FitError(f"no design column labelled {label!r}") from None
        try:
            return float(self.beta[self.retained.index(column)])
        except ValueError:
            raise FitError(f"column {label!r} was dropped as collinear") from None


def fit_ols(x: np.ndarray, y: np.ndarray,
            labels: Sequence[str] | None = None) -> OlsFit:
    """Least squares with pivoted-QR rank handling.

    Columns whose pivoted-QR diagonal falls below ``RANK_TOL_REL`` times the
    largest column norm are dropped (reported in pivot order) and the
    coefficients of the surviving columns are computed from the same
    factorization.  Raises :class:`FitError` for an empty design, shape
    mismatch, non-finite values, or a design with no usable columns.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2:
        raise FitError(f"design must be 2-D, got shape {x.shape}")
    n, p = x.shape
    if y.shape != (n,):
        raise FitError(f"outcome has shape {y.shape}, expected ({n},)")
    if n == 0 or p == 0:
        raise FitError("empty design: nothing to fit")
    if not np.isfinite(x).all() or not np.isfinite(y).all():
        raise FitError("design and outcome must be finite")
    if labels is None:
        labels = tuple(f"x{i}" for i in range(p))
    else:
        labels = tuple(labels)
        if len(labels) != p:
            raise FitError(f"{len(labels)} labels for {p} columns")

    q, r, pivot = scipy.linalg.qr(x, mode="economic", pivoting=True)
    diag = np.abs(np.diagonal(r))
    threshold = RANK_TOL_REL * np.sqrt((x * x).sum(axis=0).max())
    rank = int((diag > threshold).sum()) if diag.size else 0
    if rank == 0:
        raise FitError("design has no columns above the rank tolerance "
                       "(all columns numerically zero)")
    # The first `rank` pivot columns satisfy X[:, pivot[:rank]] = Q1 R11.
    coeffs = scipy.linalg.solve_triangular(r[:rank, :rank], q[:, :rank].T @ y)
    order = np.argsort(pivot[:rank])
    retained = tuple(int(i) for i in pivot[:rank][order])
    beta = coeffs[order]
    dropped = tuple(int(i) for i in pivot[rank:])
    residual = y - x[:, retained] @ beta
    dof = n - rank
    residual_sd = math.sqrt(float(residual @ residual) / dof) if dof > 0 else math.nan
    return OlsFit(labels=labels, beta=beta, retained=retained, dropped=dropped,
                  residual_sd=residual_sd, n_obs=n)


# -- the transport frame ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class _TransportFrame:
    """Preprocessed inputs shared by the point estimate and every bootstrap
    replicate: retained source design, target expansion columns, and the map
    from expansion term to retained interaction column."""

    names: tuple[str, ...]
    scheme: str
    z_src: np.ndarray
    y_src: np.ndarray
    x_src: np.ndarray | None       # None for the empty transport set
    c_tgt: np.ndarray | None
    zcol: np.ndarray | None        # int64, -1 where the interaction was dropped
    fit: OlsFit | None
    n_source: int
    n_target: int

    @property
    def is_empty_set(self) -> bool:
        return self.x_src is None


def _build_frame(ds: Dataset, transport_set, scheme: str = "full") -> _TransportFrame:
    names = _normalize_names(transport_set)
    scheme = _check_scheme(scheme)
    if not isinstance(ds, Dataset):
        raise FitError(f"expected Dataset, got {type(ds).__name__}")
    source, target = split_population(ds)
    if source.n == 0:
        raise FitError("no source rows (S == 1) to fit on")
    if target.n == 0:
        raise FitError("no target rows (S == 0) to transport to")
    z_src = source.z.astype(np.float64)
    n_exposed = int(source.z.sum())
    if n_exposed == 0 or n_exposed == source.n:
        raise FitError("source population must contain both exposure arms")

    if not names:
        return _TransportFrame(names=names, scheme=scheme, z_src=z_src,
                               y_src=np.asarray(source.y), x_src=None,
                               c_tgt=None, zcol=None, fit=None,
                               n_source=source.n, n_target=target.n)

    design = expand_design(z_src, source.covariate_matrix(names), names, scheme)
    fit = fit_ols(design.x, source.y, design.labels)
    position = {column: i for i, column in enumerate(fit.retained)}
    zcol = np.array([position.get(design.interaction_column(k), -1)
                     for k in range(design.n_terms)], dtype=np.int64)
    c_tgt, _ = covariate_expansion(target.covariate_matrix(names), names, scheme)
    return _TransportFrame(
        names=names, scheme=scheme, z_src=z_src, y_src=np.asarray(source.y),
        x_src=np.ascontiguousarray(design.x[:, fit.retained]),
        c_tgt=np.ascontiguousarray(c_tgt), zcol=zcol, fit=fit,
        n_source=source.n, n_target=target.n)


def _contrast_from_means(frame: _TransportFrame, means: np.ndarray) -> float:
    keep = frame.zcol >= 0
    return float(means[keep] @ frame.fit.beta[frame.zcol[keep]])


def _point_phi(frame: _TransportFrame) -> float:
    if frame.is_empty_set:
        z = frame.z_src
        return (float(frame.y_src[z == 1].mean())
                - float(frame.y_src[z == 0].mean()))
    return _contrast_from_means(frame, frame.c_tgt.mean(axis=0))


def _weighted_empty_phi(y: np.ndarray, z: np.ndarray, w: np.ndarray):
    w1 = float(w @ z)
    w0 = float(w.sum()) - w1
    if w1 <= 0 or w0 <= 0:
        return 0.0, False
    wy = w * y
    total1 = float(wy @ z)
    return total1 / w1 - (float(wy.sum()) - total1) / w0, True


# -- parametric g-computation ----------------------------------------------

@dataclass(frozen=True, eq=False)
class GFitResult:
    """Point transport estimate with the underlying source-model fit."""

    phi: float
    transport_set: tuple[str, ...]
    scheme: str
    n_source: int
    n_target: int
    fit: OlsFit | None


def g_transport(ds: Dataset, transport_set, scheme: str = "full") -> GFitResult:
    """Transported exposure contrast for the target population.

    Fits the exposure-interacted model in the source population and averages
    the implied per-row contrast over target rows.  With an empty transport
    set this reduces — exactly, not just in expectation — to the source
    difference in arm means.
    """
    frame = _build_frame(ds, transport_set, scheme)
    return GFitResult(phi=_point_phi(frame), transport_set=frame.names,
                      scheme=frame.scheme, n_source=frame.n_source,
                      n_target=frame.n_target, fit=frame.fit)


@dataclass(frozen=True, eq=False)
class TransportEstimate:
    """Bootstrap-quantified transport estimate.

    `phi` is the point estimate on the original data; `se` is the standard
    deviation (ddof=1) of the replicate estimates; the confidence interval
    is Wald (``phi ± 1.96 se``) or percentile (2.5%/97.5% of replicates)
    according to `ci_method`.  `replicates` holds the successful replicate
    estimates; `n_failed` counts replicates abandoned after exhausting their
    redraw budget.
    """

    phi: float
    se: float
    ci_low: float
    ci_high: float
    transport_set: tuple[str, ...]
    scheme: str
    ci_method: str
    n_boot: int
    n_failed: int
    n_source: int
    n_target: int
    fit: OlsFit | None = field(repr=False)
    replicates: np.ndarray = field(repr=False)

    def covers(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high


def _resample_counts(gen, n: int) -> np.ndarray:
    return np.bincount(gen.integers(0, n, size=n), minlength=n).astype(np.float64)


def _replicate(frame: _TransportFrame, gen) -> tuple[float, bool]:
    w_src = _resample_counts(gen, frame.n_source)
    w_tgt = _resample_counts(gen, frame.n_target)
    if frame.is_empty_set:
        return _weighted_empty_phi(frame.y_src, frame.z_src, w_src)
    return backend.replicate_phi(frame.x_src, frame.y_src, w_src,
                                 frame.c_tgt, w_tgt, frame.zcol)


def bootstrap_estimate(ds: Dataset, transport_set, n_boot: int, seed: int,
                       scheme: str = "full",
                       ci_method: str = "wald") -> TransportEstimate:
    """Point estimate plus stratified-bootstrap uncertainty.

    Source and target rows are resampled with replacement independently (the
    two sample sizes are fixed), the estimator is recomputed on the retained
    design columns of the point fit, and the spread of replicates gives the
    standard error.  Replicates with numerically rank-deficient resamples
    are redrawn from fresh substreams (at most ``10`` attempts); if more
    than 1% of replicates fail outright, :class:`BootstrapError` is raised.

    Replicate randomness is keyed by ``(seed, replicate, attempt)``, so
    results are independent of evaluation order and of how many redraws
    other replicates consumed.
    """
    if not isinstance(n_boot, (int, np.integer)) or n_boot < 2:
        raise FitError(f"n_boot must be an integer >= 2, got {n_boot!r}")
    if ci_method not in ("wald", "percentile"):
        raise FitError(f"unknown ci_method {ci_method!r}")
    frame = _build_frame(ds, transport_set, scheme)
    phi = _point_phi(frame)

    values = []
    n_failed = 0
    for b in range(int(n_boot)):
        ok = False
        for attempt in range(_MAX_REDRAWS):
            gen = substream(seed, _BOOT_STREAM, b, attempt)
            value, ok = _replicate(frame, gen)
            if ok:
                values.append(value)
                break
        if not ok:
            n_failed += 1
    if n_failed > _MAX_FAILED_FRACTION * n_boot:
        raise BootstrapError(
            f"{n_failed} of {n_boot} bootstrap replicates failed "
            f"(numerically singular resamples) for transport set "
            f"{{{', '.join(frame.names)}}}; tolerated fraction is "
            f"{_MAX_FAILED_FRACTION:.0%}")

    replicates = np.asarray(values)
    se = float(replicates.std(ddof=1))
    if ci_method == "wald":
        ci_low, ci_high = phi - WALD_Z * se, phi + WALD_Z * se
    else:
        ci_low, ci_high = (float(np.quantile(replicates, 0.025)),
                           float(np.quantile(replicates, 0.975)))
    return TransportEstimate(
        phi=phi, se=se, ci_low=ci_low, ci_high=ci_high,
        transport_set=frame.names, scheme=frame.scheme, ci_method=ci_method,
        n_boot=int(n_boot), n_failed=n_failed, n_source=frame.n_source,
        n_target=frame.n_target, fit=frame.fit, replicates=replicates)


# -- discrete (stratified) transport ---------------------------------------

def _stratum_text(stratum: tuple, names: Sequence[str] | None) -> str:
    if names:
        parts = [f"{n}={_trim(v)}" for n, v in zip(names, stratum)]
    else:
        parts = [_trim(v) for v in stratum]
    return "(" + ", ".join(parts) + ")"


def _trim(value) -> str:
    as_float = float(value)
    return str(int(as_float)) if as_float.is_integer() else repr(as_float)


@dataclass(frozen=True)
class DiscreteTransportResult:
    """Transported risks and contrasts from stratified tables."""

    risk0: float
    risk1: float
    risk_difference: float
    risk_ratio: float


def discrete_transport(source_table: Mapping, target_dist: Mapping,
                       names: Sequence[str] | None = None) -> DiscreteTransportResult:
    """Integrate per-stratum source outcome means over a target stratum
    distribution.

    `source_table` maps stratum key to ``(mean under Z=0, mean under Z=1)``,
    with ``None`` marking an arm unobserved in the source.  `target_dist`
    maps stratum key to probability; it must be nonnegative and sum to 1
    within 1e-9.  Any stratum carrying target mass but lacking a source arm
    raises :class:`PositivityError` naming the stratum (via `names` when
    given).
    """
    total = math.fsum(target_dist.values())
    if any(v < 0 for v in target_dist.values()):
        raise DataError("target distribution has negative mass")
    if abs(total - 1.0) > 1e-9:
        raise DataError(f"target distribution sums to {total!r}, expected 1")
    risk0 = 0.0
    risk1 = 0.0
    for stratum, mass in target_dist.items():
        if mass == 0.0:
            continue
        arms = source_table.get(stratum)
        if arms is None:
            raise PositivityError(
                f"target stratum {_stratum_text(stratum, names)} has no "
                f"source observations")
        for z, value in enumerate(arms):
            if value is None or not math.isfinite(value):
                raise PositivityError(
                    f"no source observations for Z={z} in stratum "
                    f"{_stratum_text(stratum, names)}")
        risk0 += mass * float(arms[0])
        risk1 += mass * float(arms[1])
    ratio = risk1 / risk0 if risk0 != 0.0 else math.nan
    return DiscreteTransportResult(risk0=risk0, risk1=risk1,
                                   risk_difference=risk1 - risk0,
                                   risk_ratio=ratio)


def empirical_tables(ds: Dataset, covariates: Sequence[str]):
    """Empirical inputs for :func:`discrete_transport`.

    Returns ``(source_table, target_dist)``: per-stratum source outcome
    means by exposure arm (``None`` for an empty arm) and the target
    stratum frequencies, keyed by tuples of covariate values in the given
    order.
    """
    names = _normalize_names(covariates)
    if not names:
        raise FitError("discrete transport requires at least one covariate")
    source, target = split_population(ds)
    if source.n == 0 or target.n == 0:
        raise FitError("both populations must be non-empty")

    src_cols = source.covariate_matrix(names)
    tgt_cols = target.covariate_matrix(names)
    strata = sorted({tuple(float(v) for v in row) for row in src_cols}
                    | {tuple(float(v) for v in row) for row in tgt_cols})
    if len(strata) > MAX_STRATA:
        raise FitError(
            f"{len(strata)} distinct strata over {names}; a covariate looks "
            "continuous — use the parametric estimator instead")

    source_table = {}
    target_dist = {}
    for stratum in strata:
        key = np.asarray(stratum)
        mask = np.all(src_cols == key, axis=1)
        if mask.any():
            arms = []
            for z in (0, 1):
                cell = mask & (source.z == z)
                arms.append(float(source.y[cell].mean()) if cell.any() else None)
            source_table[stratum] = tuple(arms)
        mass = float(np.all(tgt_cols == key, axis=1).mean())
        if mass > 0:
            target_dist[stratum] = mass
    return source_table, target_dist


# -- positivity diagnostics ------------------------------------------------

@dataclass(frozen=True)
class CovariateOverlap:
    """Support comparison for one covariate.

    Bins are equal-width over the pooled (source plus target) range.
    ``unsupported_mass_z0``/``z1`` give the fraction of target rows falling
    in bins containing no source row of that exposure arm;
    ``unsupported_mass`` is the fraction unsupported for at least one arm.
    """

    name: str
    source_range: tuple[float, float]
    target_range: tuple[float, float]
    unsupported_mass_z0: float
    unsupported_mass_z1: float
    unsupported_mass: float


@dataclass(frozen=True)
class PositivityReport:
    """Per-covariate overlap diagnostics for a transport analysis."""

    overlaps: tuple[CovariateOverlap, ...]
    n_bins: int
    n_source: int
    n_target: int

    def overlap(self, name: str) -> CovariateOverlap:
        for item in self.overlaps:
            if item.name == name:
                return item
        raise DataError(f"no overlap entry for covariate {name!r}")

    @property
    def worst(self) -> CovariateOverlap | None:
        if not self.overlaps:
            return None
        return max(self.overlaps, key=lambda o: o.unsupported_mass)


def positivity_diagnostic(ds: Dataset, covariates: Sequence[str] | None = None,
                          n_bins: int = 20) -> PositivityReport:
    """Histogram-based transport-positivity check.

    For each covariate, the pooled range is cut into `n_bins` equal-width
    bins and each target row is checked for source support of both exposure
    arms in its bin.  Mass in unsupported bins signals reliance on model
    extrapolation in the parametric estimator.
    """
    if not isinstance(n_bins, (int, np.integer)) or n_bins < 1:
        raise FitError(f"n_bins must be a positive integer, got {n_bins!r}")
    names = (_normalize_names(covariates) if covariates is not None
             else ds.covariate_names)
    source, target = split_population(ds)
    if source.n == 0 or target.n == 0:
        raise FitError("both populations must be non-empty")

    overlaps = []
    for name in names:
        pooled = ds.covariate(name)
        src = source.covariate(name)
        tgt = target.covariate(name)
        lo, hi = float(pooled.min()), float(pooled.max())
        if hi > lo:
            width = (hi - lo) / n_bins
            def bin_of(v):
                return np.minimum((v - lo) / width, n_bins - 1).astype(np.intp)
        else:
            def bin_of(v):
                return np.zeros(v.shape[0], dtype=np.intp)
        tgt_bins = bin_of(tgt)
        occupied = [np.bincount(bin_of(src[source.z == z]), minlength=n_bins) > 0
                    for z in (0, 1)]
        overlaps.append(CovariateOverlap(
            name=name,
            source_range=(float(src.min()), float(src.max())),
            target_range=(float(tgt.min()), float(tgt.max())),
            unsupported_mass_z0=float((~occupied[0][tgt_bins]).mean()),
            unsupported_mass_z1=float((~occupied[1][tgt_bins]).mean()),
            unsupported_mass=float((~(occupied[0] & occupied[1]))[tgt_bins].mean())))
    return PositivityReport(overlaps=tuple(overlaps), n_bins=int(n_bins),
                            n_source=source.n, n_target=target.n)
