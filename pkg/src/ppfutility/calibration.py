"""Threshold-grid calibration: sweep, filter, and optimal-design selection.

A calibration sweeps every (posterior, predictive) threshold pair over a
global-null scenario and an alternative scenario, aggregates operating
characteristics per pair, keeps the pairs whose type I error falls in
[t1_min, t1_max] with power >= power_min, and picks the pair closest to the
utopia point (smallest average N under the null, largest under the
alternative) in the sample-size plane.

Calibration rates by design:

* pooled / stratified: type I error is the IC0 subgroup's positive rate
  under the global null; power is the IC2/3 subgroup's positive rate under
  the alternative.
* enrichment: both are stage-2 positive rates for the selected subgroup,
  conditional on a subgroup entering stage 2 (NaN, hence never acceptable,
  for pairs that never enter).  The selection lower bound is re-calibrated
  per pair from a separate replicate domain before the evaluation sweep.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .bayes import ThresholdPair
from .designs import (
    DesignConfig,
    DesignKind,
    Outcome,
    build_monitors,
    draw_for_design,
    run_design,
    run_stage1_selection_stat,
)
from .engine import (
    BOUND_STREAM_DOMAIN,
    SUBGROUPS,
    RngPolicy,
    ScenarioRates,
    Subgroup,
    alternative_scenario,
    null_scenario,
)

DEFAULT_POSTERIOR_GRID = (
    0.7, 0.74, 0.78, 0.82, 0.86, 0.9, 0.92, 0.93, 0.94, 0.95, 0.96, 0.97, 0.98, 0.99,
)
DEFAULT_PREDICTIVE_GRID = (0.05, 0.1, 0.15, 0.2)

SELECTION_PERCENTILE = 80.0


@dataclass(frozen=True)
class ThresholdGrid:
    posterior_values: Tuple[float, ...] = DEFAULT_POSTERIOR_GRID
    predictive_values: Tuple[float, ...] = DEFAULT_PREDICTIVE_GRID

    def __post_init__(self):
        if not self.posterior_values or not self.predictive_values:
            raise ValueError("grid must be non-empty")

    def pairs(self) -> List[ThresholdPair]:
        return [
            ThresholdPair(posterior=p, predictive=q)
            for p in self.posterior_values
            for q in self.predictive_values
        ]


@dataclass(frozen=True)
class OCRecord:
    """Aggregated operating characteristics for one threshold pair.

    Rates indexed by subgroup follow Subgroup order (IC0, IC1, IC2/3).
    Enrichment-only fields are None for the other designs; the conditional
    stage-2 rates are NaN when no replicate entered stage 2 under that
    scenario.
    """

    design: DesignKind
    thresholds: ThresholdPair
    n_reps: int
    t1_by_subgroup: Tuple[float, float, float]
    power_by_subgroup: Tuple[float, float, float]
    stop_rate_null: Tuple[float, float, float]
    stop_rate_alt: Tuple[float, float, float]
    avg_n_null: float
    avg_n_alt: float
    avg_ctl_null: float
    avg_ctl_alt: float
    avg_trt_null: float
    avg_trt_alt: float
    avg_tested_null: float
    avg_tested_alt: float
    lower_bound: Optional[float] = None
    entry_rate_null: Optional[float] = None
    entry_rate_alt: Optional[float] = None
    entry_split_null: Optional[Tuple[float, float, float]] = None
    entry_split_alt: Optional[Tuple[float, float, float]] = None
    stage2_t1: Optional[float] = None
    stage2_power: Optional[float] = None
    stage2_t1_unconditional: Optional[float] = None
    stage2_power_unconditional: Optional[float] = None

    @property
    def stage1_t1(self) -> Optional[float]:
        """Probability of any stage-2 entry under the global null."""
        return self.entry_rate_null

    @property
    def stage1_power(self) -> Optional[float]:
        """Probability the IC2/3 subgroup enters stage 2 under the alternative."""
        return None if self.entry_split_alt is None else self.entry_split_alt[Subgroup.IC23]

    @property
    def calibration_t1(self) -> float:
        if self.design is DesignKind.ENRICHMENT:
            return self.stage2_t1
        return self.t1_by_subgroup[Subgroup.IC0]

    @property
    def calibration_power(self) -> float:
        if self.design is DesignKind.ENRICHMENT:
            return self.stage2_power
        return self.power_by_subgroup[Subgroup.IC23]


@dataclass(frozen=True)
class CalibrationResult:
    design: DesignKind
    records: Tuple[OCRecord, ...]
    acceptable: Tuple[int, ...]
    optimal: Optional[int]
    distances: Tuple[float, ...]
    t1_min: float
    t1_max: float
    power_min: float

    @property
    def optimal_record(self) -> Optional[OCRecord]:
        return None if self.optimal is None else self.records[self.optimal]


def nearest_rank(values: Sequence[float], percentile: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value."""
    if not 0.0 < percentile <= 100.0:
        raise ValueError("percentile must lie in (0, 100]")
    ordered = sorted(values)
    if not ordered:
        raise ValueError("values must be non-empty")
    rank = max(1, math.ceil(percentile / 100.0 * len(ordered)))
    return float(ordered[rank - 1])


# ---------------------------------------------------------------------------
# Replicate tallies.  All counters are integers so that merging worker
# chunks is exact and order-free.
# ---------------------------------------------------------------------------

_NULL, _ALT = 0, 1


class _Tally:
    __slots__ = (
        "reps", "pos", "stopped", "n_enrolled", "n_ctl", "n_tested",
        "entries", "selected", "s2_pos",
    )

    def __init__(self):
        self.reps = np.zeros(2, np.int64)
        self.pos = np.zeros((2, 3), np.int64)
        self.stopped = np.zeros((2, 3), np.int64)
        self.n_enrolled = np.zeros(2, np.int64)
        self.n_ctl = np.zeros(2, np.int64)
        self.n_tested = np.zeros(2, np.int64)
        self.entries = np.zeros(2, np.int64)
        self.selected = np.zeros((2, 3), np.int64)
        self.s2_pos = np.zeros(2, np.int64)

    def add(self, scn: int, out) -> None:
        self.reps[scn] += 1
        for s in SUBGROUPS:
            if out.decisions[s] is Outcome.POSITIVE:
                self.pos[scn, s] += 1
            elif out.decisions[s] is Outcome.STOPPED_FUTILITY:
                self.stopped[scn, s] += 1
        self.n_enrolled[scn] += out.n_enrolled
        self.n_ctl[scn] += sum(a.n for k, a in out.arms.items() if "control" in k)
        self.n_tested[scn] += out.n_tested
        if out.selected is not None:
            self.entries[scn] += 1
            self.selected[scn, out.selected] += 1
            if out.stage2_decision is Outcome.POSITIVE:
                self.s2_pos[scn] += 1

    def merge(self, other: "_Tally") -> None:
        for name in self.__slots__:
            getattr(self, name).__iadd__(getattr(other, name))


def _rate(num: np.ndarray, den: np.ndarray):
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 0, num / np.maximum(den, 1), np.nan)
    return out


def _record_from_tally(config: DesignConfig, thresholds: ThresholdPair, tally: _Tally,
                       lower_bound: Optional[float]) -> OCRecord:
    r = tally.reps.astype(float)
    pos = tally.pos / r[:, None]
    stopped = tally.stopped / r[:, None]
    n_trt = tally.n_enrolled - tally.n_ctl
    rec = dict(
        design=config.kind,
        thresholds=thresholds,
        n_reps=int(tally.reps[_NULL]),
        t1_by_subgroup=tuple(float(v) for v in pos[_NULL]),
        power_by_subgroup=tuple(float(v) for v in pos[_ALT]),
        stop_rate_null=tuple(float(v) for v in stopped[_NULL]),
        stop_rate_alt=tuple(float(v) for v in stopped[_ALT]),
        avg_n_null=float(tally.n_enrolled[_NULL] / r[_NULL]),
        avg_n_alt=float(tally.n_enrolled[_ALT] / r[_ALT]),
        avg_ctl_null=float(tally.n_ctl[_NULL] / r[_NULL]),
        avg_ctl_alt=float(tally.n_ctl[_ALT] / r[_ALT]),
        avg_trt_null=float(n_trt[_NULL] / r[_NULL]),
        avg_trt_alt=float(n_trt[_ALT] / r[_ALT]),
        avg_tested_null=float(tally.n_tested[_NULL] / r[_NULL]),
        avg_tested_alt=float(tally.n_tested[_ALT] / r[_ALT]),
    )
    if config.kind is DesignKind.ENRICHMENT:
        cond_pos = _rate(tally.s2_pos, tally.entries)
        rec.update(
            lower_bound=lower_bound,
            entry_rate_null=float(tally.entries[_NULL] / r[_NULL]),
            entry_rate_alt=float(tally.entries[_ALT] / r[_ALT]),
            entry_split_null=tuple(float(v) for v in tally.selected[_NULL] / r[_NULL]),
            entry_split_alt=tuple(float(v) for v in tally.selected[_ALT] / r[_ALT]),
            stage2_t1=float(cond_pos[_NULL]),
            stage2_power=float(cond_pos[_ALT]),
            stage2_t1_unconditional=float(tally.s2_pos[_NULL] / r[_NULL]),
            stage2_power_unconditional=float(tally.s2_pos[_ALT] / r[_ALT]),
        )
    return OCRecord(**rec)


# ---------------------------------------------------------------------------
# Stage-1 selection-statistic pass (enrichment lower-bound calibration).
# ---------------------------------------------------------------------------


def _stage1_stats_range(config: DesignConfig, pairs: Sequence[ThresholdPair],
                        scenario: ScenarioRates, lo: int, hi: int,
                        policy: RngPolicy) -> np.ndarray:
    """Per-pair stage-1 selection statistics for replicates [lo, hi)."""
    cfg1 = DesignConfig.pooled(
        block_size=config.block_size, max_per_arm=config.max_per_arm, prior=config.prior
    )
    pg_cache: dict = {}
    monitors = [build_monitors(cfg1, thr, pg_cache)["main"] for thr in pairs]
    vals = np.empty((len(pairs), hi - lo))
    for j, rep in enumerate(range(lo, hi)):
        draws = draw_for_design(cfg1, scenario, policy, rep)
        for i, thr in enumerate(pairs):
            vals[i, j] = run_stage1_selection_stat(
                cfg1, thr, scenario, draws=draws, monitor=monitors[i]
            )
    return vals


def _stage1_stats(config, pairs, scenario, n_reps, policy, workers) -> np.ndarray:
    if workers == 1:
        return _stage1_stats_range(config, pairs, scenario, 0, n_reps, policy)
    bounds = np.linspace(0, n_reps, workers + 1).astype(int)
    chunks = [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(_stage1_stats_range, config, pairs, scenario, lo, hi, policy)
            for lo, hi in chunks
        ]
        parts = [f.result() for f in futures]
    return np.concatenate(parts, axis=1)


def calibrate_enrichment_bound(
    thresholds: ThresholdPair,
    scenario_null: ScenarioRates,
    n_reps: int,
    policy: RngPolicy,
    *,
    config: Optional[DesignConfig] = None,
    workers: int = 1,
) -> float:
    """Stage-2 selection lower bound for one threshold pair.

    Runs stage-1-only replicates under the global null, records each
    replicate's maximum end-of-stage-1 PPP over non-stopped subgroups
    (a sentinel below any probability when every subgroup stops), and
    returns the nearest-rank 80th percentile of those statistics.
    """
    if config is None:
        config = DesignConfig.enrichment()
    vals = _stage1_stats(config, [thresholds], scenario_null, n_reps, policy, workers)
    return nearest_rank(vals[0], SELECTION_PERCENTILE)


# ---------------------------------------------------------------------------
# The main sweep.
# ---------------------------------------------------------------------------


def _sweep_range(config: DesignConfig, pairs: Sequence[ThresholdPair],
                 bounds: Sequence[Optional[float]],
                 scenarios: Tuple[ScenarioRates, ScenarioRates],
                 lo: int, hi: int, policy: RngPolicy) -> List[_Tally]:
    pg_cache: dict = {}
    cfgs = [
        replace(config, lower_bound=b) if config.kind is DesignKind.ENRICHMENT else config
        for b in bounds
    ]
    monitors = [build_monitors(c, thr, pg_cache) for c, thr in zip(cfgs, pairs)]
    tallies = [_Tally() for _ in pairs]
    for rep in range(lo, hi):
        for scn, scenario in enumerate(scenarios):
            draws = draw_for_design(config, scenario, policy, rep)
            for i, thr in enumerate(pairs):
                out = run_design(cfgs[i], thr, scenario, draws=draws, monitors=monitors[i])
                tallies[i].add(scn, out)
    return tallies


def sweep(
    config: DesignConfig,
    grid: ThresholdGrid,
    scenarios: Tuple[ScenarioRates, ScenarioRates],
    n_reps: int,
    policy: RngPolicy,
    workers: int = 1,
    bound_reps: Optional[int] = None,
) -> List[OCRecord]:
    """One OCRecord per grid pair: (global null, alternative) = ``scenarios``.

    For the enrichment design each pair's selection lower bound is first
    calibrated from stage-1-only replicates drawn in a disjoint stream
    domain, so the bound is never fit to the evaluation replicates.
    ``bound_reps`` sizes that calibration pass (default: ``n_reps``); the
    stage-1 statistic is discrete, so a larger pass pins the percentile
    when the all-stop mass sits near the percentile itself.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    pairs = grid.pairs()

    bounds: List[Optional[float]] = [None] * len(pairs)
    if config.kind is DesignKind.ENRICHMENT:
        stats = _stage1_stats(
            config, pairs, scenarios[0], bound_reps if bound_reps else n_reps,
            policy.with_domain(BOUND_STREAM_DOMAIN), workers,
        )
        bounds = [nearest_rank(row, SELECTION_PERCENTILE) for row in stats]

    if workers == 1:
        tallies = _sweep_range(config, pairs, bounds, scenarios, 0, n_reps, policy)
    else:
        edges = np.linspace(0, n_reps, workers + 1).astype(int)
        chunks = [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_sweep_range, config, pairs, bounds, scenarios, lo, hi, policy)
                for lo, hi in chunks
            ]
            parts = [f.result() for f in futures]
        tallies = parts[0]
        for part in parts[1:]:
            for t, p in zip(tallies, part):
                t.merge(p)

    return [
        _record_from_tally(config, thr, tally, bound)
        for thr, tally, bound in zip(pairs, tallies, bounds)
    ]


# ---------------------------------------------------------------------------
# Filtering and optimal-design selection.
# ---------------------------------------------------------------------------


def filter_acceptable(
    records: Sequence[OCRecord],
    t1_min: float = 0.05,
    t1_max: float = 0.1,
    power_min: float = 0.8,
) -> List[int]:
    """Indices with t1_min <= type I error <= t1_max and power >= power_min.

    Records whose calibration rates are NaN (enrichment pairs that never
    reached stage 2) are never acceptable.
    """
    if not t1_min <= t1_max:
        raise ValueError("t1_min must not exceed t1_max")
    keep = []
    for i, rec in enumerate(records):
        t1, power = rec.calibration_t1, rec.calibration_power
        if math.isnan(t1) or math.isnan(power):
            continue
        if t1_min <= t1 <= t1_max and power >= power_min:
            keep.append(i)
    return keep


def efficiency_distance(record: OCRecord, acceptable_records: Sequence[OCRecord]) -> float:
    """Euclidean distance from (avg_n_null, avg_n_alt) to the utopia point.

    The utopia point is (min null N, max alt N) over the acceptable set;
    the distance is zero only for a record attaining both extremes.
    """
    if not acceptable_records:
        raise ValueError("acceptable set is empty")
    if not any(record is rec for rec in acceptable_records):
        raise ValueError("record must belong to the acceptable set")
    best_null = min(rec.avg_n_null for rec in acceptable_records)
    best_alt = max(rec.avg_n_alt for rec in acceptable_records)
    return math.hypot(record.avg_n_null - best_null, record.avg_n_alt - best_alt)


def select_optimal(
    records: Sequence[OCRecord], acceptable: Sequence[int]
) -> Tuple[Optional[int], Tuple[float, ...]]:
    """Acceptable index with minimal efficiency distance, plus all distances.

    The distances tuple aligns with ``records`` (NaN outside the acceptable
    set).  Ties break toward smaller average null N, then smaller posterior
    threshold, then smaller predictive threshold.
    """
    distances = [float("nan")] * len(records)
    if not acceptable:
        return None, tuple(distances)
    pool = [records[i] for i in acceptable]
    for i in acceptable:
        distances[i] = efficiency_distance(records[i], pool)
    best = min(
        acceptable,
        key=lambda i: (
            distances[i],
            records[i].avg_n_null,
            records[i].thresholds.posterior,
            records[i].thresholds.predictive,
        ),
    )
    return best, tuple(distances)


def calibrate(
    config: DesignConfig,
    grid: Optional[ThresholdGrid] = None,
    scenarios: Optional[Tuple[ScenarioRates, ScenarioRates]] = None,
    n_reps: int = 1000,
    policy: Optional[RngPolicy] = None,
    seed: int = 0,
    workers: int = 1,
    t1_min: float = 0.05,
    t1_max: float = 0.1,
    power_min: float = 0.8,
    bound_reps: Optional[int] = None,
) -> CalibrationResult:
    """Full calibration: sweep the grid, filter, and select the optimum."""
    grid = grid if grid is not None else ThresholdGrid()
    scenarios = scenarios if scenarios is not None else (null_scenario(), alternative_scenario())
    policy = policy if policy is not None else RngPolicy(master_seed=seed)
    records = sweep(config, grid, scenarios, n_reps, policy, workers=workers,
                    bound_reps=bound_reps)
    acceptable = filter_acceptable(records, t1_min, t1_max, power_min)
    optimal, distances = select_optimal(records, acceptable)
    return CalibrationResult(
        design=config.kind,
        records=tuple(records),
        acceptable=tuple(acceptable),
        optimal=optimal,
        distances=distances,
        t1_min=t1_min,
        t1_max=t1_max,
        power_min=power_min,
    )
