"""Pre-computed stop/continue futility boundaries.

A :class:`DecisionTable` stores, for every look of one two-arm comparison
and every feasible (control responses, treatment responses) pair, whether
the trial stops for futility at that look (or, at the final look, whether
it fails the efficacy rule).  Tables are keyed by both arms' enrollment so
the same machinery covers synchronized looks (pooled, stratified) and the
unequal-n looks of an enrichment stage 2 that carries treatment data
forward.

Tables can be built two ways: ``method="direct"`` calls the scalar
``ppp_two_sample`` for every entry (bit-for-bit the live monitoring rule),
while ``method="fast"`` evaluates whole looks at once through the batched
kernel.  The two agree entry-for-entry; the fast path exists because a
calibration sweep builds hundreds of tables.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _backend
from .bayes import (
    DEFAULT_PRIOR,
    ArmData,
    BetaParams,
    Decision,
    ThresholdPair,
    betabinom_pmf_matrix,
    futility_decision,
    ppp_two_sample,
    prob_greater,
    prob_greater_table,
    posterior,
)

TEXT_HEADER = "# ppfutility decision table v1"


@dataclass(frozen=True)
class LookState:
    """Enrollment state of one look: look index and both arms' n."""

    look: int
    n_ctl: int
    n_trt: int
    is_final: bool


def synchronized_states(block_size: int, max_per_arm: int) -> tuple[LookState, ...]:
    """Look states when both arms accrue one block per look (50 vs 50 etc.)."""
    if max_per_arm % block_size != 0:
        raise ValueError("max_per_arm must be a multiple of block_size")
    n_looks = max_per_arm // block_size
    return tuple(
        LookState(t, t * block_size, t * block_size, t == n_looks) for t in range(1, n_looks + 1)
    )


def stage2_states(carried_n: int, block_size: int, new_per_arm: int) -> tuple[LookState, ...]:
    """Look states for an enrichment stage 2 carrying ``carried_n`` treatment patients."""
    if new_per_arm % block_size != 0:
        raise ValueError("new_per_arm must be a multiple of block_size")
    n_looks = new_per_arm // block_size
    return tuple(
        LookState(t, t * block_size, carried_n + t * block_size, t == n_looks)
        for t in range(1, n_looks + 1)
    )


@dataclass(frozen=True)
class DecisionTable:
    """Futility boundaries for one comparison.

    ``stop[i][x_ctl, x_trt]`` is True when the trial stops at ``states[i]``
    with those response counts; at the final state True means the efficacy
    rule failed (the complement of a positive declaration).
    """

    design: str
    thresholds: ThresholdPair
    prior: BetaParams
    n_trt_max: int
    n_ctl_max: int
    block_size: int
    states: tuple[LookState, ...]
    stop: tuple[np.ndarray, ...] = field(repr=False)

    def __post_init__(self):
        if len(self.states) != len(self.stop):
            raise ValueError("one stop matrix per look state required")
        if not self.states or not self.states[-1].is_final:
            raise ValueError("the last look state must be the final analysis")
        if any(st.is_final for st in self.states[:-1]):
            raise ValueError("only the last look state may be final")
        for st, mat in zip(self.states, self.stop):
            if mat.shape != (st.n_ctl + 1, st.n_trt + 1):
                raise ValueError(f"matrix shape {mat.shape} does not match state {st}")

    def state_index(self, look: int) -> int:
        for i, st in enumerate(self.states):
            if st.look == look:
                return i
        raise KeyError(f"no look {look} in table")


def build_table(
    n_trt_max: int,
    n_ctl_max: int,
    thresholds: ThresholdPair,
    prior: BetaParams = DEFAULT_PRIOR,
    states: Optional[Sequence[LookState]] = None,
    block_size: int = 10,
    design: str = "two-arm",
    method: str = "direct",
    _pg_table: Optional[np.ndarray] = None,
) -> DecisionTable:
    """Compute the full stop/continue table for one comparison.

    ``states`` defaults to synchronized looks every ``block_size`` patients
    per arm up to the maxima.  ``method="direct"`` evaluates each entry with
    the scalar PPP (bit-identical to live monitoring); ``method="fast"``
    uses the batched kernel.
    """
    if states is None:
        if n_trt_max != n_ctl_max:
            raise ValueError("default synchronized schedule needs equal maxima")
        states = synchronized_states(block_size, n_trt_max)
    states = tuple(states)
    if method not in ("direct", "fast"):
        raise ValueError(f"unknown build method {method!r}")

    mats: list[np.ndarray] = []
    if method == "fast":
        pg = _pg_table if _pg_table is not None else prob_greater_table(n_trt_max, n_ctl_max, prior)
        success = (pg > thresholds.posterior).astype(np.float64)
        for st in states:
            if st.is_final:
                if (st.n_ctl, st.n_trt) != (n_ctl_max, n_trt_max):
                    raise ValueError("final state must be at full enrollment")
                mats.append(np.ascontiguousarray(success.T == 0.0))
                continue
            pmf_t = betabinom_pmf_matrix(st.n_trt, n_trt_max - st.n_trt, prior)
            pmf_c = betabinom_pmf_matrix(st.n_ctl, n_ctl_max - st.n_ctl, prior)
            ppp = _backend.ppp_grid(success, pmf_t, pmf_c)
            mats.append(np.ascontiguousarray(ppp.T < thresholds.predictive))
    else:
        for st in states:
            mat = np.empty((st.n_ctl + 1, st.n_trt + 1), dtype=bool)
            for x_c in range(st.n_ctl + 1):
                for x_t in range(st.n_trt + 1):
                    if st.is_final:
                        pg_val = prob_greater(
                            posterior(prior, ArmData(st.n_trt, x_t)),
                            posterior(prior, ArmData(st.n_ctl, x_c)),
                        )
                        mat[x_c, x_t] = not (pg_val > thresholds.posterior)
                    else:
                        val = ppp_two_sample(
                            ArmData(st.n_trt, x_t),
                            ArmData(st.n_ctl, x_c),
                            n_trt_max,
                            n_ctl_max,
                            prior,
                            thresholds.posterior,
                        )
                        mat[x_c, x_t] = futility_decision(val, thresholds) is Decision.STOP
            mats.append(mat)

    return DecisionTable(
        design=design,
        thresholds=thresholds,
        prior=prior,
        n_trt_max=n_trt_max,
        n_ctl_max=n_ctl_max,
        block_size=block_size,
        states=states,
        stop=tuple(mats),
    )


def lookup(table: DecisionTable, look: int, x_ctl: int, x_trt: int) -> Decision:
    """Constant-time read of one entry; indices must be in range."""
    i = table.state_index(look)
    st = table.states[i]
    if not (0 <= x_ctl <= st.n_ctl and 0 <= x_trt <= st.n_trt):
        raise IndexError(
            f"(x_ctl={x_ctl}, x_trt={x_trt}) out of range for look {look} "
            f"with n_ctl={st.n_ctl}, n_trt={st.n_trt}"
        )
    return Decision.STOP if table.stop[i][x_ctl, x_trt] else Decision.CONTINUE


def min_continue_boundaries(table: DecisionTable) -> list[np.ndarray]:
    """Per look: minimal continuing treatment count for each control count.

    Entry ``[x_ctl]`` is the smallest ``x_trt`` with a Continue decision
    (``n_trt + 1`` when every treatment count stops).  The stop region is a
    down-set in ``x_trt``, so this is a complete summary of each matrix.
    """
    out = []
    for st, mat in zip(table.states, table.stop):
        cont = ~mat
        any_cont = cont.any(axis=1)
        first = np.argmax(cont, axis=1)
        first[~any_cont] = st.n_trt + 1
        out.append(first.astype(np.int64))
    return out


# ---------------------------------------------------------------------------
# Serialization: a documented text table and a compact binary cache.
# ---------------------------------------------------------------------------


def to_text(table: DecisionTable) -> str:
    buf = io.StringIO()
    buf.write(TEXT_HEADER + "\n")
    buf.write(f"# design: {table.design}\n")
    buf.write(f"# theta: {table.thresholds.posterior!r}\n")
    buf.write(f"# theta_star: {table.thresholds.predictive!r}\n")
    buf.write(f"# prior_a: {table.prior.a!r}\n")
    buf.write(f"# prior_b: {table.prior.b!r}\n")
    buf.write(f"# n_trt_max: {table.n_trt_max}\n")
    buf.write(f"# n_ctl_max: {table.n_ctl_max}\n")
    buf.write(f"# block_size: {table.block_size}\n")
    buf.write(f"# final_look: {table.states[-1].look}\n")
    buf.write("look,n_ctl,x_ctl,n_trt,x_trt,decision\n")
    for st, mat in zip(table.states, table.stop):
        for x_c in range(st.n_ctl + 1):
            for x_t in range(st.n_trt + 1):
                word = "stop" if mat[x_c, x_t] else "continue"
                buf.write(f"{st.look},{st.n_ctl},{x_c},{st.n_trt},{x_t},{word}\n")
    return buf.getvalue()


def from_text(text: str) -> DecisionTable:
    meta: dict[str, str] = {}
    rows: list[tuple[int, int, int, int, int, bool]] = []
    lines = text.splitlines()
    if not lines or lines[0] != TEXT_HEADER:
        raise ValueError("not a ppfutility decision table")
    for line in lines[1:]:
        if not line.strip():
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            meta[key.strip()] = value.strip()
            continue
        if line.startswith("look,"):
            continue
        parts = line.split(",")
        if len(parts) != 6:
            raise ValueError(f"bad table row: {line!r}")
        look, n_ctl, x_c, n_trt, x_t = (int(p) for p in parts[:5])
        if parts[5] not in ("stop", "continue"):
            raise ValueError(f"bad decision word: {parts[5]!r}")
        rows.append((look, n_ctl, x_c, n_trt, x_t, parts[5] == "stop"))

    final_look = int(meta["final_look"])
    by_state: dict[tuple[int, int, int], dict[tuple[int, int], bool]] = {}
    for look, n_ctl, x_c, n_trt, x_t, stop_flag in rows:
        by_state.setdefault((look, n_ctl, n_trt), {})[(x_c, x_t)] = stop_flag
    states = []
    mats = []
    for (look, n_ctl, n_trt), entries in sorted(by_state.items()):
        mat = np.empty((n_ctl + 1, n_trt + 1), dtype=bool)
        for (x_c, x_t), stop_flag in entries.items():
            mat[x_c, x_t] = stop_flag
        states.append(LookState(look, n_ctl, n_trt, look == final_look))
        mats.append(mat)
    return DecisionTable(
        design=meta["design"],
        thresholds=ThresholdPair(float(meta["theta"]), float(meta["theta_star"])),
        prior=BetaParams(float(meta["prior_a"]), float(meta["prior_b"])),
        n_trt_max=int(meta["n_trt_max"]),
        n_ctl_max=int(meta["n_ctl_max"]),
        block_size=int(meta["block_size"]),
        states=tuple(states),
        stop=tuple(mats),
    )


def save_npz(table: DecisionTable, path) -> None:
    meta = {
        "design": table.design,
        "theta": repr(table.thresholds.posterior),
        "theta_star": repr(table.thresholds.predictive),
        "prior_a": repr(table.prior.a),
        "prior_b": repr(table.prior.b),
        "n_trt_max": table.n_trt_max,
        "n_ctl_max": table.n_ctl_max,
        "block_size": table.block_size,
    }
    arrays = {
        "meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
        "states": np.array(
            [[st.look, st.n_ctl, st.n_trt, int(st.is_final)] for st in table.states],
            dtype=np.int64,
        ),
    }
    for i, mat in enumerate(table.stop):
        arrays[f"stop_{i}"] = mat
    np.savez_compressed(path, **arrays)


def load_npz(path) -> DecisionTable:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        states = tuple(
            LookState(int(r[0]), int(r[1]), int(r[2]), bool(r[3])) for r in data["states"]
        )
        mats = tuple(data[f"stop_{i}"] for i in range(len(states)))
    return DecisionTable(
        design=meta["design"],
        thresholds=ThresholdPair(float(meta["theta"]), float(meta["theta_star"])),
        prior=BetaParams(float(meta["prior_a"]), float(meta["prior_b"])),
        n_trt_max=int(meta["n_trt_max"]),
        n_ctl_max=int(meta["n_ctl_max"]),
        block_size=int(meta["block_size"]),
        states=states,
        stop=mats,
    )
