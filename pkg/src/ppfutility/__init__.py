"""Randomized biomarker-subgroup phase II designs with Bayesian
posterior-predictive futility monitoring.

The package simulates, calibrates, and tabulates three randomized designs
for a three-subgroup binary-endpoint trial -- a pooled-control design, a
stratified design, and a two-stage enrichment design -- all monitored by
the two-sample posterior predictive probability of a positive final
comparison.
"""

from .bayes import (
    DEFAULT_PRIOR,
    ArmData,
    BetaParams,
    Decision,
    NumericalError,
    PPPKey,
    ThresholdPair,
    beta_binomial_pmf,
    futility_decision,
    posterior,
    ppp_cache_clear,
    ppp_two_sample,
    prob_greater,
    prob_greater_table,
)
from .calibration import (
    DEFAULT_POSTERIOR_GRID,
    DEFAULT_PREDICTIVE_GRID,
    CalibrationResult,
    OCRecord,
    ThresholdGrid,
    calibrate,
    calibrate_enrichment_bound,
    efficiency_distance,
    filter_acceptable,
    nearest_rank,
    select_optimal,
    sweep,
)
from .config import ConfigError, RunConfig, load_config, parse_config, serialize_config
from .designs import (
    DesignConfig,
    DesignKind,
    LiveMonitor,
    Outcome,
    TableMonitor,
    TrialOutcome,
    build_monitors,
    draw_for_design,
    run_design,
    run_enrichment,
    run_pooled,
    run_stage1_selection_stat,
    run_stratified,
)
from .engine import (
    ReplicateStreams,
    RngPolicy,
    ScenarioRates,
    Subgroup,
    TrialDraws,
    alternative_scenario,
    null_scenario,
    run_replicates,
)
from .tables import DecisionTable, build_table, from_text, load_npz, lookup, save_npz, to_text
from ._backend import backend_name

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "backend_name",
    # bayes
    "DEFAULT_PRIOR", "ArmData", "BetaParams", "Decision", "NumericalError",
    "PPPKey", "ThresholdPair", "beta_binomial_pmf", "futility_decision",
    "posterior", "ppp_cache_clear", "ppp_two_sample", "prob_greater",
    "prob_greater_table",
    # engine
    "ReplicateStreams", "RngPolicy", "ScenarioRates", "Subgroup", "TrialDraws",
    "alternative_scenario", "null_scenario", "run_replicates",
    # designs
    "DesignConfig", "DesignKind", "LiveMonitor", "Outcome", "TableMonitor",
    "TrialOutcome", "build_monitors", "draw_for_design", "run_design",
    "run_enrichment", "run_pooled", "run_stage1_selection_stat", "run_stratified",
    # calibration
    "DEFAULT_POSTERIOR_GRID", "DEFAULT_PREDICTIVE_GRID", "CalibrationResult",
    "OCRecord", "ThresholdGrid", "calibrate", "calibrate_enrichment_bound",
    "efficiency_distance", "filter_acceptable", "nearest_rank", "select_optimal",
    "sweep",
    # tables
    "DecisionTable", "build_table", "from_text", "load_npz", "lookup",
    "save_npz", "to_text",
    # config
    "ConfigError", "RunConfig", "load_config", "parse_config", "serialize_config",
]
