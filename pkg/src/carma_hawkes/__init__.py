"""Point-process models of tick data with long-memory excitation kernels.

The package simulates, estimates, and selects univariate and bivariate
state-space Hawkes models whose excitation kernel comes from a
continuous-time ARMA specification, detects intraday jumps with the
Lee-Mykland test, and runs a sequential three-framework selection routine
over tick-level quote data.
"""

from .errors import (
    CarmaHawkesError,
    DataError,
    DataWarning,
    EstimationError,
    SimulationError,
    SpecificationError,
)
from .model import (
    BivariateOrder,
    BivariateSpec,
    EventSeries,
    MarkedEventSeries,
    UnivariateOrder,
    UnivariateSpec,
    ValidationReport,
    branching_matrix,
    branching_ratio,
    companion,
    intensity_path,
    kernel,
    kernel_matrix,
    spec_from_dict,
    spec_to_dict,
    validate,
)
from .likelihood import (
    RecursionState,
    ResidualReport,
    compensator,
    initial_state,
    loglik_bivariate,
    loglik_univariate,
    residual_times,
    update_recursion,
)
from .simulate import SimulationConfig, simulate_bivariate, simulate_univariate
from .estimate import (
    FitResult,
    LrOutcome,
    aic,
    chi_square_survival,
    fit_bivariate,
    fit_univariate,
    is_nested,
    lr_test,
    numerical_hessian_se,
    param_names,
)
from .jumps import (
    DEFAULT_ALPHA_LEVELS,
    JumpDetectionResult,
    LMConfig,
    LMStatistics,
    auto_window,
    cs_constants,
    detect_jumps,
    gumbel_threshold,
    lm_statistics,
    local_volatility,
)
from .data import (
    CALENDARS,
    IngestStats,
    ReturnSeries,
    SessionCalendar,
    SpreadStats,
    SynthConfig,
    TickSeries,
    ingest_ticks,
    log_returns,
    parse_ticks,
    read_events,
    spread_stats,
    synth_ticks,
    ticks_from_events,
    write_events,
    write_ticks,
)
from .pipeline import (
    CandidateLattice,
    FrameworkKind,
    KsOutcome,
    PipelineConfig,
    PipelineReport,
    SelectionResult,
    SelectionStep,
    StageEntry,
    StageReport,
    build_point_process,
    default_bivariate_lattice,
    default_univariate_lattice,
    ks_test_exp1,
    run_pipeline,
    run_selection,
)
from .estimators import (
    BivariateCarmaHawkes,
    LeeMyklandJumps,
    SequentialFrameworkPipeline,
    UnivariateCarmaHawkes,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "CarmaHawkesError",
    "SpecificationError",
    "DataError",
    "DataWarning",
    "EstimationError",
    "SimulationError",
    # model
    "UnivariateOrder",
    "BivariateOrder",
    "UnivariateSpec",
    "BivariateSpec",
    "EventSeries",
    "MarkedEventSeries",
    "ValidationReport",
    "companion",
    "kernel",
    "kernel_matrix",
    "branching_ratio",
    "branching_matrix",
    "intensity_path",
    "validate",
    "spec_to_dict",
    "spec_from_dict",
    # likelihood
    "loglik_univariate",
    "loglik_bivariate",
    "RecursionState",
    "initial_state",
    "update_recursion",
    "compensator",
    "residual_times",
    "ResidualReport",
    # simulate
    "SimulationConfig",
    "simulate_univariate",
    "simulate_bivariate",
    # estimate
    "FitResult",
    "fit_univariate",
    "fit_bivariate",
    "aic",
    "is_nested",
    "lr_test",
    "LrOutcome",
    "chi_square_survival",
    "numerical_hessian_se",
    "param_names",
    # jumps
    "LMConfig",
    "LMStatistics",
    "JumpDetectionResult",
    "DEFAULT_ALPHA_LEVELS",
    "cs_constants",
    "gumbel_threshold",
    "auto_window",
    "local_volatility",
    "lm_statistics",
    "detect_jumps",
    # data
    "SessionCalendar",
    "CALENDARS",
    "TickSeries",
    "IngestStats",
    "ReturnSeries",
    "SpreadStats",
    "SynthConfig",
    "ingest_ticks",
    "parse_ticks",
    "write_ticks",
    "log_returns",
    "spread_stats",
    "synth_ticks",
    "ticks_from_events",
    "write_events",
    "read_events",
    # pipeline
    "FrameworkKind",
    "KsOutcome",
    "ks_test_exp1",
    "CandidateLattice",
    "default_univariate_lattice",
    "default_bivariate_lattice",
    "SelectionStep",
    "SelectionResult",
    "run_selection",
    "build_point_process",
    "PipelineConfig",
    "StageEntry",
    "StageReport",
    "PipelineReport",
    "run_pipeline",
    # estimators
    "UnivariateCarmaHawkes",
    "BivariateCarmaHawkes",
    "LeeMyklandJumps",
    "SequentialFrameworkPipeline",
]
