"""Transport causal effect estimates from a source population to a target.

The package has four layers, each importable from the top level:

* selection diagrams — :class:`SelectionDiagram`, :func:`parse_diagram`,
  d-separation queries, and s-admissibility checks and enumeration for
  transport sets;
* data — the column-oriented :class:`Dataset`, CSV round-tripping, the
  continuous-covariate benchmark generator (:func:`sample_dgp`) and the
  closed-form binary example (:data:`TOY_MODEL`, :func:`sample_toy`);
* estimation — the parametric g-computation transporter
  (:func:`g_transport`, :func:`bootstrap_estimate`), the stratified
  discrete estimator (:func:`discrete_transport`), and positivity
  diagnostics;
* simulation — the repeated-sampling experiment comparing transport sets
  (:class:`SimConfig`, :func:`run_experiment`).

Numerical kernels run on a compiled extension when available and fall back
to a pure-NumPy implementation (see :mod:`gtransport.backend`); results are
identical either way.
"""

from .backend import BACKEND, available_backends
from .data import (
    DataError,
    Dataset,
    DgpSpec,
    MODEL_SCALE_SLOPES,
    PopulationSplit,
    TOY_MODEL,
    ToyModel,
    read_csv,
    sample_dgp,
    sample_toy,
    split_population,
    write_csv,
)
from .diagram import (
    CycleError,
    DiagramError,
    DiagramParseError,
    EnumerationLimitError,
    SelectionDiagram,
    TransportSet,
    UnknownNodeError,
    d_separated,
    eligible_pool,
    enumerate_s_admissible,
    find_active_trail,
    is_s_admissible,
    minimal_sets,
    parse_diagram,
)
from .estimate import (
    BootstrapError,
    CovariateOverlap,
    DiscreteTransportResult,
    FitError,
    GFitResult,
    OlsFit,
    PositivityError,
    PositivityReport,
    TransportEstimate,
    bootstrap_estimate,
    covariate_expansion,
    discrete_transport,
    empirical_tables,
    fit_ols,
    g_transport,
    positivity_diagnostic,
)
from .simulate import (
    DEFAULT_TRANSPORT_SETS,
    AggregateMetrics,
    CellMetrics,
    SimConfig,
    SimulationError,
    SimulationReport,
    aggregate_metrics,
    run_experiment,
    truth_phi,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "BACKEND",
    "available_backends",
    # diagrams
    "CycleError",
    "DiagramError",
    "DiagramParseError",
    "EnumerationLimitError",
    "SelectionDiagram",
    "TransportSet",
    "UnknownNodeError",
    "d_separated",
    "eligible_pool",
    "enumerate_s_admissible",
    "find_active_trail",
    "is_s_admissible",
    "minimal_sets",
    "parse_diagram",
    # data
    "DataError",
    "Dataset",
    "DgpSpec",
    "MODEL_SCALE_SLOPES",
    "PopulationSplit",
    "TOY_MODEL",
    "ToyModel",
    "read_csv",
    "sample_dgp",
    "sample_toy",
    "split_population",
    "write_csv",
    # estimation
    "BootstrapError",
    "CovariateOverlap",
    "DiscreteTransportResult",
    "FitError",
    "GFitResult",
    "OlsFit",
    "PositivityError",
    "PositivityReport",
    "TransportEstimate",
    "bootstrap_estimate",
    "covariate_expansion",
    "discrete_transport",
    "empirical_tables",
    "fit_ols",
    "g_transport",
    "positivity_diagnostic",
    # simulation
    "DEFAULT_TRANSPORT_SETS",
    "AggregateMetrics",
    "CellMetrics",
    "SimConfig",
    "SimulationError",
    "SimulationReport",
    "aggregate_metrics",
    "run_experiment",
    "truth_phi",
]
