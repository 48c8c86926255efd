"""Reproducible Monte Carlo generation of trial data.

Every random quantity in a simulated trial is drawn from its own
counter-based substream, keyed by (domain, replicate, arm, block) under a
single master seed.  A replicate's data therefore depends only on the master
seed and its own index -- never on worker count, execution order, or which
thresholds are being evaluated -- which is what makes matched-seed
comparisons across threshold pairs and byte-identical parallel runs
possible.  Separate stream domains keep calibration passes (e.g. the
enrichment lower-bound pass) statistically disjoint from evaluation runs
without a second seed.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Dict, Optional

import numpy as np


class Subgroup(IntEnum):
    IC0 = 0
    IC1 = 1
    IC23 = 2

    @property
    def label(self) -> str:
        return {Subgroup.IC0: "IC0", Subgroup.IC1: "IC1", Subgroup.IC23: "IC23"}[self]


SUBGROUPS = (Subgroup.IC0, Subgroup.IC1, Subgroup.IC23)

# Arm identifiers inside the RNG key space.  Pooled and enrichment stage 1
# share a control (arm 0) and one treatment arm per subgroup; stratified
# trials use one control/treatment pair per stratum; enrichment stage 2 has
# its own control and one potential treatment stream per selectable
# subgroup, so the carried-forward comparison is reproducible no matter
# which subgroup wins selection.
ARM_POOLED_CTL = 0


def arm_pooled_trt(s: Subgroup) -> int:
    return 1 + int(s)


def arm_stratified_ctl(s: Subgroup) -> int:
    return 2 * int(s)


def arm_stratified_trt(s: Subgroup) -> int:
    return 2 * int(s) + 1


ARM_STAGE2_CTL = 4


def arm_stage2_trt(s: Subgroup) -> int:
    return 5 + int(s)


ARM_TIEBREAK = 9

MAIN_STREAM_DOMAIN = 0
BOUND_STREAM_DOMAIN = 1


@dataclass(frozen=True)
class ScenarioRates:
    """True response rates: one control rate, one treatment rate per subgroup."""

    control_rate: float
    subgroup_trt_rates: tuple[float, float, float]

    def __post_init__(self):
        for r in (self.control_rate, *self.subgroup_trt_rates):
            if not (0.0 <= r <= 1.0):
                raise ValueError(f"rates must lie in [0,1], got {r}")

    def trt_rate(self, s: Subgroup) -> float:
        return self.subgroup_trt_rates[int(s)]


def null_scenario(rate: float = 0.1) -> ScenarioRates:
    """Global null: every arm responds at the control rate."""
    return ScenarioRates(rate, (rate, rate, rate))


def alternative_scenario(
    control: float = 0.1, ic0: float = 0.1, ic1: float = 0.2, ic23: float = 0.3
) -> ScenarioRates:
    """The graded-effect alternative used throughout calibration."""
    return ScenarioRates(control, (ic0, ic1, ic23))


@dataclass(frozen=True)
class LookSchedule:
    """Interim-look cadence: a look after every ``block_size`` patients per arm."""

    block_size: int = 10
    max_per_arm: int = 50

    def __post_init__(self):
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")
        if self.max_per_arm % self.block_size != 0:
            raise ValueError("max_per_arm must be a multiple of block_size")

    @property
    def n_looks(self) -> int:
        return self.max_per_arm // self.block_size


@dataclass(frozen=True)
class RngPolicy:
    """Master seed plus the substream derivation rule.

    ``stream(rep, arm, block)`` returns an independent generator seeded by
    SeedSequence(master_seed, spawn_key=(domain, rep, arm, block)).
    """

    master_seed: int
    domain: int = MAIN_STREAM_DOMAIN

    def stream(self, rep: int, arm: int, block: int) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=self.master_seed, spawn_key=(self.domain, rep, arm, block)
        )
        return np.random.default_rng(ss)

    def with_domain(self, domain: int) -> "RngPolicy":
        return replace(self, domain=domain)


def generate_block(rate: float, block_size: int, stream: np.random.Generator) -> int:
    """Number of responses among one block of patients."""
    if not (0.0 <= rate <= 1.0):
        raise ValueError(f"rate must lie in [0,1], got {rate}")
    return int(stream.binomial(block_size, rate))


class ReplicateStreams:
    """Substream access for a single replicate."""

    def __init__(self, policy: RngPolicy, rep: int):
        self.policy = policy
        self.rep = rep

    def block_responses(self, arm: int, block: int, rate: float, block_size: int) -> int:
        return generate_block(rate, block_size, self.policy.stream(self.rep, arm, block))

    def tiebreak_uniform(self) -> float:
        return float(self.policy.stream(self.rep, ARM_TIEBREAK, 0).random())


@dataclass(frozen=True)
class TrialDraws:
    """All block draws one replicate could ever need, drawn up front.

    ``blocks[arm]`` holds per-block response counts over the full horizon of
    that arm, whether or not the trial ends up using them; ``tiebreak`` is
    the selection tie-break uniform.  Because the draws cover every arm and
    block unconditionally, the same TrialDraws can be replayed against any
    threshold pair (the data a trial observes never depends on the
    monitoring rule).
    """

    blocks: Dict[int, tuple[int, ...]]
    tiebreak: float

    def arm_blocks(self, arm: int) -> tuple[int, ...]:
        return self.blocks[arm]


def run_replicates(
    design,
    thresholds,
    scenario: ScenarioRates,
    n_reps: int,
    policy: RngPolicy,
    workers: int = 1,
    use_tables: bool = True,
):
    """Simulate ``n_reps`` independent trials; output order is by replicate.

    The list returned is identical for any ``workers`` value: replicate i's
    path depends only on (master seed, i), and results are merged in index
    order.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    if workers < 1:
        raise ValueError("workers must be >= 1")

    if workers == 1:
        return _run_range(design, thresholds, scenario, 0, n_reps, policy, use_tables)

    bounds = np.linspace(0, n_reps, workers + 1).astype(int)
    chunks = [(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    outcomes = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(_run_range, design, thresholds, scenario, lo, hi, policy, use_tables)
            for lo, hi in chunks
        ]
        for fut in futures:
            outcomes.extend(fut.result())
    return outcomes


def _run_range(design, thresholds, scenario, rep_start, rep_stop, policy, use_tables):
    from . import designs

    monitors = designs.build_monitors(design, thresholds) if use_tables else None
    out = []
    for rep in range(rep_start, rep_stop):
        draws = designs.draw_for_design(design, scenario, policy, rep)
        out.append(designs.run_design(design, thresholds, scenario, draws=draws, monitors=monitors))
    return out
