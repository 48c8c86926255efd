"""State machines for the three trial designs.

* Pooled control: three biomarker-subgroup treatment arms (50 patients
  each) share one concurrently randomized control arm (50), an overall 3:1
  ratio.  Each subgroup is monitored against the pooled control and stops
  on its own; the control stops accruing once all three treatment arms have
  stopped.
* Stratified control: three independent 50-vs-50 strata, each with its own
  control; a futility stop halts both arms of that stratum.
* Enrichment: stage 1 is the pooled design; at its end the surviving
  subgroup with the highest end-of-stage-1 predictive probability continues
  to stage 2 if that probability clears a pre-calibrated lower bound.
  Stage 2 enrolls 100 additional patients of the selected subgroup 1:1,
  carrying forward only that subgroup's stage-1 treatment data.

No design stops early for efficacy: a positive declaration requires full
enrollment of the compared arms and a final posterior comparison above the
posterior threshold.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional

from .bayes import (
    DEFAULT_PRIOR,
    ArmData,
    BetaParams,
    Decision,
    ThresholdPair,
    futility_decision,
    posterior,
    ppp_two_sample,
    prob_greater,
)
from .engine import (
    ARM_POOLED_CTL,
    ARM_STAGE2_CTL,
    SUBGROUPS,
    ReplicateStreams,
    RngPolicy,
    ScenarioRates,
    Subgroup,
    TrialDraws,
    arm_pooled_trt,
    arm_stage2_trt,
    arm_stratified_ctl,
    arm_stratified_trt,
)
from .tables import DecisionTable, build_table, stage2_states


class DesignKind(str, Enum):
    POOLED = "pooled"
    STRATIFIED = "stratified"
    ENRICHMENT = "enrichment"


class Outcome(Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    STOPPED_FUTILITY = "stopped_futility"


@dataclass(frozen=True)
class DesignConfig:
    """Structure of one design variant.

    ``max_per_arm`` is the cap for every treatment arm and every control
    arm (50 throughout the validated scenario).  ``lower_bound`` is the
    enrichment stage-1 selection bound and must be calibrated before an
    enrichment trial can run.  ``subgroup_prevalence`` converts stage-2
    enrollment into screened-patient counts for the tested-patient
    accounting (equal prevalence of 1/3 in this scenario).
    """

    kind: DesignKind
    block_size: int = 10
    max_per_arm: int = 50
    stage2_new_per_arm: int = 50
    prior: BetaParams = DEFAULT_PRIOR
    lower_bound: Optional[float] = None
    subgroup_prevalence: float = 1.0 / 3.0

    def __post_init__(self):
        if self.max_per_arm % self.block_size != 0:
            raise ValueError("max_per_arm must be a multiple of block_size")
        if self.stage2_new_per_arm % self.block_size != 0:
            raise ValueError("stage2_new_per_arm must be a multiple of block_size")
        if not (0.0 < self.subgroup_prevalence <= 1.0):
            raise ValueError("subgroup_prevalence must lie in (0,1]")

    @property
    def n_looks(self) -> int:
        return self.max_per_arm // self.block_size

    @property
    def stage2_n_looks(self) -> int:
        return self.stage2_new_per_arm // self.block_size

    @property
    def randomization_ratio(self) -> str:
        return "1:1" if self.kind is DesignKind.STRATIFIED else "3:1"

    @property
    def max_total_enrolled(self) -> int:
        if self.kind is DesignKind.POOLED:
            return 4 * self.max_per_arm
        if self.kind is DesignKind.STRATIFIED:
            return 6 * self.max_per_arm
        return 4 * self.max_per_arm + 2 * self.stage2_new_per_arm

    @property
    def max_tested(self) -> int:
        if self.kind is DesignKind.POOLED:
            return 3 * self.max_per_arm
        if self.kind is DesignKind.STRATIFIED:
            return 6 * self.max_per_arm
        stage2 = 2 * self.stage2_new_per_arm
        return 3 * self.max_per_arm + int(round(stage2 / self.subgroup_prevalence))

    @classmethod
    def pooled(cls, **kw) -> "DesignConfig":
        return cls(kind=DesignKind.POOLED, **kw)

    @classmethod
    def stratified(cls, **kw) -> "DesignConfig":
        return cls(kind=DesignKind.STRATIFIED, **kw)

    @classmethod
    def enrichment(cls, lower_bound: Optional[float] = None, **kw) -> "DesignConfig":
        return cls(kind=DesignKind.ENRICHMENT, lower_bound=lower_bound, **kw)


@dataclass(frozen=True)
class TrialOutcome:
    """Result of one simulated trial.

    ``decisions`` is indexed by Subgroup.  ``arms`` maps enrollment-segment
    names to final accrued data; segments partition the enrolled patients,
    so their n's sum to ``n_enrolled``.  ``stage1_ppp`` (enrichment) holds
    each subgroup's end-of-stage-1 predictive probability -- degenerate 0/1
    at full stage-1 data -- or None for subgroups stopped early.
    """

    design: DesignKind
    decisions: tuple[Outcome, Outcome, Outcome]
    arms: Dict[str, ArmData]
    stop_looks: Dict[str, Optional[int]]
    n_enrolled: int
    n_tested: int
    selected: Optional[Subgroup] = None
    stage1_ppp: Optional[tuple] = None
    stage2_decision: Optional[Outcome] = None
    stage2_stop_look: Optional[int] = None


# ---------------------------------------------------------------------------
# Monitors: the per-look stop rule and the final efficacy rule, either
# computed live from the Bayesian core or read from a pre-built table.
# ---------------------------------------------------------------------------


class LiveMonitor:
    """Evaluates PPP and the final comparison directly."""

    def __init__(
        self,
        thresholds: ThresholdPair,
        prior: BetaParams,
        n_trt_max: int,
        n_ctl_max: int,
    ):
        self.thresholds = thresholds
        self.prior = prior
        self.n_trt_max = n_trt_max
        self.n_ctl_max = n_ctl_max

    def interim_stop(self, look: int, n_trt: int, n_ctl: int, x_trt: int, x_ctl: int) -> bool:
        val = ppp_two_sample(
            ArmData(n_trt, x_trt),
            ArmData(n_ctl, x_ctl),
            self.n_trt_max,
            self.n_ctl_max,
            self.prior,
            self.thresholds.posterior,
        )
        return futility_decision(val, self.thresholds) is Decision.STOP

    def final_positive(self, x_trt: int, x_ctl: int) -> bool:
        pg = prob_greater(
            posterior(self.prior, ArmData(self.n_trt_max, x_trt)),
            posterior(self.prior, ArmData(self.n_ctl_max, x_ctl)),
        )
        return pg > self.thresholds.posterior


class TableMonitor:
    """Reads the same decisions from a pre-built DecisionTable."""

    def __init__(self, table: DecisionTable):
        self.table = table
        self._final = table.stop[-1]
        if not table.states[-1].is_final:
            raise ValueError("table's last state must be the final look")

    def interim_stop(self, look: int, n_trt: int, n_ctl: int, x_trt: int, x_ctl: int) -> bool:
        i = self.table.state_index(look)
        st = self.table.states[i]
        if (st.n_ctl, st.n_trt) != (n_ctl, n_trt):
            raise ValueError(f"state mismatch at look {look}: {(n_ctl, n_trt)} vs {st}")
        return bool(self.table.stop[i][x_ctl, x_trt])

    def final_positive(self, x_trt: int, x_ctl: int) -> bool:
        return not self._final[x_ctl, x_trt]


def build_monitors(
    config: DesignConfig,
    thresholds: ThresholdPair,
    pg_cache: Optional[dict] = None,
) -> Dict[str, TableMonitor]:
    """Pre-build table monitors for every comparison the design performs.

    ``pg_cache`` may carry prob_greater matrices keyed by (n_trt_max,
    n_ctl_max) to share the expensive part across threshold pairs.
    """
    from .bayes import prob_greater_table

    pg_cache = pg_cache if pg_cache is not None else {}
    m = config.max_per_arm

    def pg_for(nt, nc):
        key = (nt, nc)
        if key not in pg_cache:
            pg_cache[key] = prob_greater_table(nt, nc, config.prior)
        return pg_cache[key]

    monitors = {
        "main": TableMonitor(
            build_table(
                m,
                m,
                thresholds,
                config.prior,
                block_size=config.block_size,
                design=f"{config.kind.value}-subgroup-vs-control",
                method="fast",
                _pg_table=pg_for(m, m),
            )
        )
    }
    if config.kind is DesignKind.ENRICHMENT:
        nt2 = m + config.stage2_new_per_arm
        nc2 = config.stage2_new_per_arm
        monitors["stage2"] = TableMonitor(
            build_table(
                nt2,
                nc2,
                thresholds,
                config.prior,
                states=stage2_states(m, config.block_size, config.stage2_new_per_arm),
                block_size=config.block_size,
                design="enrichment-stage2",
                method="fast",
                _pg_table=pg_for(nt2, nc2),
            )
        )
    return monitors


# ---------------------------------------------------------------------------
# Data access: precomputed draws or live streams.
# ---------------------------------------------------------------------------


def draw_for_design(
    config: DesignConfig, scenario: ScenarioRates, policy: RngPolicy, rep: int
) -> TrialDraws:
    """Draw every block the design could consume, plus the tie-break uniform."""
    streams = ReplicateStreams(policy, rep)
    bs = config.block_size
    blocks: Dict[int, tuple] = {}

    def fill(arm: int, rate: float, n_blocks: int):
        blocks[arm] = tuple(
            streams.block_responses(arm, b, rate, bs) for b in range(n_blocks)
        )

    if config.kind is DesignKind.STRATIFIED:
        for s in SUBGROUPS:
            fill(arm_stratified_ctl(s), scenario.control_rate, config.n_looks)
            fill(arm_stratified_trt(s), scenario.trt_rate(s), config.n_looks)
        tie = 0.0
    else:
        fill(ARM_POOLED_CTL, scenario.control_rate, config.n_looks)
        for s in SUBGROUPS:
            fill(arm_pooled_trt(s), scenario.trt_rate(s), config.n_looks)
        tie = 0.0
        if config.kind is DesignKind.ENRICHMENT:
            fill(ARM_STAGE2_CTL, scenario.control_rate, config.stage2_n_looks)
            for s in SUBGROUPS:
                fill(arm_stage2_trt(s), scenario.trt_rate(s), config.stage2_n_looks)
            tie = streams.tiebreak_uniform()
    return TrialDraws(blocks=blocks, tiebreak=tie)


class _BlockSource:
    """Uniform access to block draws from either TrialDraws or live streams."""

    def __init__(self, config, scenario, streams: Optional[ReplicateStreams], draws):
        if (streams is None) == (draws is None):
            raise ValueError("provide exactly one of streams or draws")
        self.config = config
        self.scenario = scenario
        self.streams = streams
        self.draws = draws

    def block(self, arm: int, block_idx: int, rate: float) -> int:
        if self.draws is not None:
            return self.draws.arm_blocks(arm)[block_idx]
        return self.streams.block_responses(arm, block_idx, rate, self.config.block_size)

    def tiebreak(self) -> float:
        if self.draws is not None:
            return self.draws.tiebreak
        return self.streams.tiebreak_uniform()


# ---------------------------------------------------------------------------
# The three designs.
# ---------------------------------------------------------------------------


def _pooled_stage(config, thresholds, src: _BlockSource, monitor):
    """Shared pooled-stage mechanics (the pooled design and enrichment stage 1).

    Returns control data, per-subgroup data, per-subgroup stop look (None if
    the arm completed), and -- for completed subgroups -- the final
    positive-comparison indicator.
    """
    if monitor is None:
        monitor = LiveMonitor(thresholds, config.prior, config.max_per_arm, config.max_per_arm)
    bs = config.block_size
    x_ctl = n_ctl = 0
    x = [0, 0, 0]
    n = [0, 0, 0]
    stop_look: list = [None, None, None]
    final_pos: list = [None, None, None]
    active = [True, True, True]

    for t in range(1, config.n_looks + 1):
        if not any(active):
            break
        x_ctl += src.block(ARM_POOLED_CTL, t - 1, src.scenario.control_rate)
        n_ctl += bs
        for s in SUBGROUPS:
            if active[s]:
                x[s] += src.block(arm_pooled_trt(s), t - 1, src.scenario.trt_rate(s))
                n[s] += bs
        is_final = t == config.n_looks
        for s in SUBGROUPS:
            if not active[s]:
                continue
            if is_final:
                final_pos[s] = monitor.final_positive(x[s], x_ctl)
            elif monitor.interim_stop(t, n[s], n_ctl, x[s], x_ctl):
                active[s] = False
                stop_look[s] = t

    return ArmData(n_ctl, x_ctl), [ArmData(n[s], x[s]) for s in SUBGROUPS], stop_look, final_pos


STAGE1_ALL_STOPPED = -1.0
"""Selection statistic reported when every subgroup stops in stage 1 --
strictly below any probability, so it can never clear a selection bound."""


def run_stage1_selection_stat(
    config: DesignConfig,
    thresholds: ThresholdPair,
    scenario: ScenarioRates,
    streams: Optional[ReplicateStreams] = None,
    *,
    draws: Optional[TrialDraws] = None,
    monitor=None,
) -> float:
    """Max end-of-stage-1 PPP over non-stopped subgroups (stage-1-only run).

    Used by the enrichment lower-bound calibration: at full stage-1 data the
    PPP is the 0/1 indicator of the final comparison, and replicates where
    every subgroup stopped report ``STAGE1_ALL_STOPPED``.
    """
    src = _BlockSource(config, scenario, streams, draws)
    _, _, stop_look, final_pos = _pooled_stage(config, thresholds, src, monitor)
    vals = [1.0 if final_pos[s] else 0.0 for s in SUBGROUPS if stop_look[s] is None]
    return max(vals) if vals else STAGE1_ALL_STOPPED


def run_pooled(
    config: DesignConfig,
    thresholds: ThresholdPair,
    scenario: ScenarioRates,
    streams: Optional[ReplicateStreams] = None,
    *,
    draws: Optional[TrialDraws] = None,
    monitor=None,
) -> TrialOutcome:
    """One pooled-control trial: three subgroup arms vs one shared control."""
    if config.kind is not DesignKind.POOLED:
        raise ValueError("config.kind must be POOLED")
    src = _BlockSource(config, scenario, streams, draws)
    ctl, subs, stop_look, final_pos = _pooled_stage(config, thresholds, src, monitor)

    decisions = []
    for s in SUBGROUPS:
        if stop_look[s] is not None:
            decisions.append(Outcome.STOPPED_FUTILITY)
        else:
            decisions.append(Outcome.POSITIVE if final_pos[s] else Outcome.NEGATIVE)
    arms = {"control": ctl}
    for s in SUBGROUPS:
        arms[s.label] = subs[s]
    n_ctl_and_subs = ctl.n + sum(a.n for a in subs)
    return TrialOutcome(
        design=config.kind,
        decisions=tuple(decisions),
        arms=arms,
        stop_looks={s.label: stop_look[s] for s in SUBGROUPS},
        n_enrolled=n_ctl_and_subs,
        n_tested=sum(a.n for a in subs),
    )


def run_stratified(
    config: DesignConfig,
    thresholds: ThresholdPair,
    scenario: ScenarioRates,
    streams: Optional[ReplicateStreams] = None,
    *,
    draws: Optional[TrialDraws] = None,
    monitor=None,
) -> TrialOutcome:
    """One stratified trial: three independent 1:1 two-arm comparisons."""
    if config.kind is not DesignKind.STRATIFIED:
        raise ValueError("config.kind must be STRATIFIED")
    src = _BlockSource(config, scenario, streams, draws)
    if monitor is None:
        monitor = LiveMonitor(thresholds, config.prior, config.max_per_arm, config.max_per_arm)
    bs = config.block_size

    decisions = []
    arms: Dict[str, ArmData] = {}
    stop_looks: Dict[str, Optional[int]] = {}
    for s in SUBGROUPS:
        x_c = n_c = x_t = n_t = 0
        stop_at: Optional[int] = None
        decision = None
        for t in range(1, config.n_looks + 1):
            x_c += src.block(arm_stratified_ctl(s), t - 1, scenario.control_rate)
            n_c += bs
            x_t += src.block(arm_stratified_trt(s), t - 1, scenario.trt_rate(s))
            n_t += bs
            if t == config.n_looks:
                pos = monitor.final_positive(x_t, x_c)
                decision = Outcome.POSITIVE if pos else Outcome.NEGATIVE
            elif monitor.interim_stop(t, n_t, n_c, x_t, x_c):
                stop_at = t
                decision = Outcome.STOPPED_FUTILITY
                break
        decisions.append(decision)
        arms[f"{s.label}_control"] = ArmData(n_c, x_c)
        arms[f"{s.label}_treatment"] = ArmData(n_t, x_t)
        stop_looks[s.label] = stop_at

    total = sum(a.n for a in arms.values())
    return TrialOutcome(
        design=config.kind,
        decisions=tuple(decisions),
        arms=arms,
        stop_looks=stop_looks,
        n_enrolled=total,
        n_tested=total,
    )


def run_enrichment(
    config: DesignConfig,
    thresholds: ThresholdPair,
    scenario: ScenarioRates,
    streams: Optional[ReplicateStreams] = None,
    *,
    draws: Optional[TrialDraws] = None,
    monitors: Optional[Dict[str, TableMonitor]] = None,
) -> TrialOutcome:
    """One two-stage enrichment trial.

    Stage 1 runs the pooled mechanics.  If every subgroup stops, the trial
    is Negative with no selection.  Otherwise the surviving subgroup with
    the highest end-of-stage-1 predictive probability is selected when that
    probability strictly exceeds ``config.lower_bound`` (ties break toward
    the higher observed response count, then uniformly from the replicate's
    tie-break stream).  Stage 2 re-monitors the selected subgroup's carried
    treatment data plus 100 new 1:1 patients against stage-2 maxima.
    """
    if config.kind is not DesignKind.ENRICHMENT:
        raise ValueError("config.kind must be ENRICHMENT")
    if config.lower_bound is None:
        raise ValueError("enrichment requires a calibrated lower_bound")
    src = _BlockSource(config, scenario, streams, draws)
    mon_main = monitors.get("main") if monitors else None
    mon_s2 = monitors.get("stage2") if monitors else None

    ctl, subs, stop_look, final_pos = _pooled_stage(config, thresholds, src, mon_main)
    stage1_ppp = tuple(
        None if stop_look[s] is not None else (1.0 if final_pos[s] else 0.0) for s in SUBGROUPS
    )

    decisions: list = [
        Outcome.STOPPED_FUTILITY if stop_look[s] is not None else Outcome.NEGATIVE
        for s in SUBGROUPS
    ]
    arms = {"control": ctl}
    for s in SUBGROUPS:
        arms[s.label] = subs[s]
    n_enrolled = ctl.n + sum(a.n for a in subs)
    n_stage1_trt = sum(a.n for a in subs)

    survivors = [s for s in SUBGROUPS if stop_look[s] is None]
    selected: Optional[Subgroup] = None
    stage2_decision: Optional[Outcome] = None
    stage2_stop_look: Optional[int] = None
    n_tested = n_stage1_trt

    if survivors:
        best = max(stage1_ppp[s] for s in survivors)
        if best > config.lower_bound:
            top = [s for s in survivors if stage1_ppp[s] == best]
            if len(top) > 1:
                most = max(subs[s].x for s in top)
                top = [s for s in top if subs[s].x == most]
            if len(top) > 1:
                u = src.tiebreak()
                top = [top[min(int(u * len(top)), len(top) - 1)]]
            selected = top[0]

    if selected is not None:
        if mon_s2 is None:
            mon_s2 = LiveMonitor(
                thresholds,
                config.prior,
                config.max_per_arm + config.stage2_new_per_arm,
                config.stage2_new_per_arm,
            )
        carried = subs[selected]
        bs = config.block_size
        x_c2 = n_c2 = x_t2 = n_t2 = 0
        for k in range(1, config.stage2_n_looks + 1):
            x_c2 += src.block(ARM_STAGE2_CTL, k - 1, scenario.control_rate)
            n_c2 += bs
            x_t2 += src.block(arm_stage2_trt(selected), k - 1, scenario.trt_rate(selected))
            n_t2 += bs
            x_tot = carried.x + x_t2
            n_tot = carried.n + n_t2
            if k == config.stage2_n_looks:
                pos = mon_s2.final_positive(x_tot, x_c2)
                stage2_decision = Outcome.POSITIVE if pos else Outcome.NEGATIVE
            elif mon_s2.interim_stop(k, n_tot, n_c2, x_tot, x_c2):
                stage2_decision = Outcome.STOPPED_FUTILITY
                stage2_stop_look = k
                break
        arms["stage2_control"] = ArmData(n_c2, x_c2)
        arms["stage2_treatment"] = ArmData(n_t2, x_t2)
        decisions[selected] = stage2_decision
        n_enrolled += n_c2 + n_t2
        n_tested += int(round((n_c2 + n_t2) / config.subgroup_prevalence))

    return TrialOutcome(
        design=config.kind,
        decisions=tuple(decisions),
        arms=arms,
        stop_looks={s.label: stop_look[s] for s in SUBGROUPS},
        n_enrolled=n_enrolled,
        n_tested=n_tested,
        selected=selected,
        stage1_ppp=stage1_ppp,
        stage2_decision=stage2_decision,
        stage2_stop_look=stage2_stop_look,
    )


def run_design(
    config: DesignConfig,
    thresholds: ThresholdPair,
    scenario: ScenarioRates,
    streams: Optional[ReplicateStreams] = None,
    *,
    draws: Optional[TrialDraws] = None,
    monitors: Optional[Dict[str, TableMonitor]] = None,
) -> TrialOutcome:
    """Dispatch one replicate to the configured design."""
    mon_main = monitors.get("main") if monitors else None
    if config.kind is DesignKind.POOLED:
        return run_pooled(config, thresholds, scenario, streams, draws=draws, monitor=mon_main)
    if config.kind is DesignKind.STRATIFIED:
        return run_stratified(config, thresholds, scenario, streams, draws=draws, monitor=mon_main)
    return run_enrichment(config, thresholds, scenario, streams, draws=draws, monitors=monitors)
