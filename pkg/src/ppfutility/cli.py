"""Command-line interface.

Subcommands::

    ppfutility calibrate   sweep the threshold grid and select the optimum
    ppfutility simulate    per-replicate trial outcomes at one threshold pair
    ppfutility table       emit stop/continue decision tables
    ppfutility ppp         evaluate one posterior predictive probability

Every output file starts with a ``#`` header block recording the artifact
version, seed, replicate count, and grid, so reruns are comparable and a
rerun with an identical configuration is byte-identical.  Exit codes:
0 success (including an empty acceptable set), 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from functools import partial
from typing import Dict, List, Optional, Sequence

from . import __version__
from .bayes import (
    ArmData,
    BetaParams,
    NumericalError,
    ThresholdPair,
    posterior,
    ppp_two_sample,
    prob_greater,
)
from .calibration import (
    CalibrationResult,
    OCRecord,
    _record_from_tally,
    _Tally,
    calibrate,
    calibrate_enrichment_bound,
)
from .config import ConfigError, RunConfig, apply_overrides, load_config
from .designs import DesignConfig, DesignKind, build_monitors, run_design
from .engine import SUBGROUPS, RngPolicy, run_replicates
from .tables import save_npz, to_text

_SCENARIO_NAMES = ("null", "alternative")


# ---------------------------------------------------------------------------
# Formatting helpers.  Floats are rendered with repr for exact round-trips;
# None renders as an empty cell.
# ---------------------------------------------------------------------------


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _csv_text(header_lines: Sequence[str], columns: Sequence[str],
              rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _header_lines(config: RunConfig, **extra) -> List[str]:
    lines = [
        f"ppfutility {__version__}",
        f"design = {config.design.value}",
        f"seed = {config.seed}",
        f"reps = {config.reps}",
        f"posterior_grid = {','.join(repr(v) for v in config.posterior_grid)}",
        f"predictive_grid = {','.join(repr(v) for v in config.predictive_grid)}",
        (
            "scenario rates: null all-arms = "
            f"{config.null_rate!r}; alternative control = {config.control_rate!r}, "
            f"IC0/IC1/IC23 = {config.ic0_rate!r}/{config.ic1_rate!r}/{config.ic23_rate!r}"
        ),
    ]
    for key, value in extra.items():
        lines.append(f"{key} = {value}")
    return lines


_OC_COLUMNS = [
    "theta", "theta_star", "n_reps",
    "t1_IC0", "t1_IC1", "t1_IC23",
    "power_IC0", "power_IC1", "power_IC23",
    "stop_null_IC0", "stop_null_IC1", "stop_null_IC23",
    "stop_alt_IC0", "stop_alt_IC1", "stop_alt_IC23",
    "avg_n_null", "avg_n_alt", "avg_ctl_null", "avg_ctl_alt",
    "avg_trt_null", "avg_trt_alt", "avg_tested_null", "avg_tested_alt",
    "calibration_t1", "calibration_power",
    "lower_bound", "entry_rate_null", "entry_rate_alt",
    "entry_null_IC0", "entry_null_IC1", "entry_null_IC23",
    "entry_alt_IC0", "entry_alt_IC1", "entry_alt_IC23",
    "stage1_power", "stage2_t1", "stage2_power",
    "stage2_t1_unconditional", "stage2_power_unconditional",
]


def _oc_row(rec: OCRecord) -> List:
    row = [
        rec.thresholds.posterior, rec.thresholds.predictive, rec.n_reps,
        *rec.t1_by_subgroup, *rec.power_by_subgroup,
        *rec.stop_rate_null, *rec.stop_rate_alt,
        rec.avg_n_null, rec.avg_n_alt, rec.avg_ctl_null, rec.avg_ctl_alt,
        rec.avg_trt_null, rec.avg_trt_alt, rec.avg_tested_null, rec.avg_tested_alt,
        rec.calibration_t1, rec.calibration_power,
        rec.lower_bound, rec.entry_rate_null, rec.entry_rate_alt,
        *(rec.entry_split_null or (None, None, None)),
        *(rec.entry_split_alt or (None, None, None)),
        rec.stage1_power, rec.stage2_t1, rec.stage2_power,
        rec.stage2_t1_unconditional, rec.stage2_power_unconditional,
    ]
    return row


def _write_all(out_dir: str, files: Dict[str, object]) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for name, content in files.items():
        path = os.path.join(out_dir, name)
        if isinstance(content, str):
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(content)
        else:
            content(path)


# ---------------------------------------------------------------------------
# Subcommands.
# ---------------------------------------------------------------------------


def cmd_calibrate(config: RunConfig) -> int:
    result: CalibrationResult = calibrate(
        config.design_config(),
        grid=config.grid(),
        scenarios=config.scenarios(),
        n_reps=config.reps,
        policy=RngPolicy(master_seed=config.seed),
        workers=config.workers,
        t1_min=config.t1_min,
        t1_max=config.t1_max,
        power_min=config.power_min,
        bound_reps=config.bound_reps,
    )
    head = _header_lines(
        config,
        constraints=f"t1 in [{config.t1_min!r}, {config.t1_max!r}], power >= {config.power_min!r}",
    )
    records_csv = _csv_text(head, _OC_COLUMNS, [_oc_row(r) for r in result.records])
    acc_cols = _OC_COLUMNS + ["efficiency_distance"]
    acc_rows = [
        _oc_row(result.records[i]) + [result.distances[i]] for i in result.acceptable
    ]
    acceptable_csv = _csv_text(head, acc_cols, acc_rows)

    opt_head = list(head)
    if result.optimal is None:
        opt_head.append("no acceptable design")
        opt_rows = []
    else:
        opt_rows = [_oc_row(result.optimal_record) + [result.distances[result.optimal]]]
    optimal_csv = _csv_text(opt_head, acc_cols, opt_rows)

    accuracy_csv = _csv_text(
        head,
        ["theta", "theta_star", "type1_error", "power"],
        [
            [r.thresholds.posterior, r.thresholds.predictive,
             r.calibration_t1, r.calibration_power]
            for r in result.records
        ],
    )
    efficiency_csv = _csv_text(
        head,
        ["theta", "theta_star", "avg_n_null", "avg_n_alt"],
        [
            [r.thresholds.posterior, r.thresholds.predictive, r.avg_n_null, r.avg_n_alt]
            for r in result.records
        ],
    )
    _write_all(config.out, {
        "records.csv": records_csv,
        "acceptable.csv": acceptable_csv,
        "optimal.csv": optimal_csv,
        "accuracy.csv": accuracy_csv,
        "efficiency.csv": efficiency_csv,
    })
    return 0


_REPLICATE_COLUMNS = [
    "scenario", "rep",
    "decision_IC0", "decision_IC1", "decision_IC23",
    "stop_look_IC0", "stop_look_IC1", "stop_look_IC23",
    "selected", "stage2_decision", "stage2_stop_look",
    "n_enrolled", "n_tested",
]


def _arm_segments(kind: DesignKind) -> List[str]:
    if kind is DesignKind.STRATIFIED:
        return [f"{s.label}_{side}" for s in SUBGROUPS for side in ("control", "treatment")]
    segments = ["control"] + [s.label for s in SUBGROUPS]
    if kind is DesignKind.ENRICHMENT:
        segments += ["stage2_control", "stage2_treatment"]
    return segments


def cmd_simulate(config: RunConfig, thresholds: ThresholdPair) -> int:
    lower_bound = None
    if config.design is DesignKind.ENRICHMENT:
        lower_bound = calibrate_enrichment_bound(
            thresholds,
            config.scenarios()[0],
            config.bound_reps or config.reps,
            RngPolicy(master_seed=config.seed),
            workers=config.workers,
        )
    design = config.design_config(lower_bound)
    policy = RngPolicy(master_seed=config.seed)

    segments = _arm_segments(config.design)
    columns = _REPLICATE_COLUMNS + [f"{seg}_{v}" for seg in segments for v in ("n", "x")]
    rows = []
    tally = _Tally()
    for scn, scenario in enumerate(config.scenarios()):
        outcomes = run_replicates(
            design, thresholds, scenario, config.reps, policy, workers=config.workers
        )
        for rep, out in enumerate(outcomes):
            tally.add(scn, out)
            row = [
                _SCENARIO_NAMES[scn], rep,
                *(d.value for d in out.decisions),
                *(out.stop_looks[s.label] for s in SUBGROUPS),
                None if out.selected is None else out.selected.label,
                None if out.stage2_decision is None else out.stage2_decision.value,
                out.stage2_stop_look,
                out.n_enrolled, out.n_tested,
            ]
            for seg in segments:
                arm = out.arms.get(seg)
                row += [None, None] if arm is None else [arm.n, arm.x]
            rows.append(row)

    record = _record_from_tally(design, thresholds, tally, lower_bound)
    head = _header_lines(
        config,
        theta=repr(thresholds.posterior),
        theta_star=repr(thresholds.predictive),
        **({"lower_bound": repr(lower_bound)} if lower_bound is not None else {}),
    )
    _write_all(config.out, {
        "replicates.csv": _csv_text(head, columns, rows),
        "aggregate.csv": _csv_text(head, _OC_COLUMNS, [_oc_row(record)]),
    })
    return 0


def cmd_table(config: RunConfig, thresholds: ThresholdPair) -> int:
    monitors = build_monitors(config.design_config(), thresholds)
    files: Dict[str, object] = {}
    names = {"main": "decision_table", "stage2": "decision_table_stage2"}
    for key, monitor in monitors.items():
        table = monitor.table
        files[f"{names[key]}.txt"] = to_text(table)
        files[f"{names[key]}.npz"] = partial(save_npz, table)
    _write_all(config.out, files)
    return 0


def cmd_ppp(args) -> int:
    prior = BetaParams(args.prior_a, args.prior_b)
    trt = ArmData(args.n_trt, args.x_trt)
    ctl = ArmData(args.n_ctl, args.x_ctl)
    val = ppp_two_sample(trt, ctl, args.n_trt_max, args.n_ctl_max, prior, args.theta)
    pg = prob_greater(posterior(prior, trt), posterior(prior, ctl))
    print(f"ppp = {val!r}")
    print(f"prob_greater = {pg!r}")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing and dispatch.
# ---------------------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="key-value configuration file")
    parser.add_argument("--seed", type=int, help="master seed (default 0)")
    parser.add_argument("--reps", type=int, help="replicates per scenario")
    parser.add_argument("--workers", type=int, help="parallel worker processes")
    parser.add_argument("--out", metavar="DIR", help="output directory")
    parser.add_argument(
        "--design", choices=[k.value for k in DesignKind], help="design to run"
    )


def _add_thresholds(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--theta", type=float, required=True, help="posterior threshold")
    parser.add_argument(
        "--theta-star", type=float, required=True, help="predictive futility threshold"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ppfutility",
        description="Randomized biomarker-subgroup trial designs with "
                    "posterior-predictive futility monitoring.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="sweep the threshold grid")
    _add_common(p)

    p = sub.add_parser("simulate", help="simulate one threshold pair")
    _add_common(p)
    _add_thresholds(p)

    p = sub.add_parser("table", help="emit decision tables")
    _add_common(p)
    _add_thresholds(p)

    p = sub.add_parser("ppp", help="evaluate one predictive probability")
    p.add_argument("--x-trt", type=int, required=True)
    p.add_argument("--n-trt", type=int, required=True)
    p.add_argument("--x-ctl", type=int, required=True)
    p.add_argument("--n-ctl", type=int, required=True)
    p.add_argument("--n-trt-max", type=int, required=True)
    p.add_argument("--n-ctl-max", type=int, required=True)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--prior-a", type=float, default=0.5)
    p.add_argument("--prior-b", type=float, default=0.5)
    return parser


def _run_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    design = DesignKind(args.design) if args.design else None
    return apply_overrides(
        config,
        design=design,
        seed=args.seed,
        reps=args.reps,
        workers=args.workers,
        out=args.out,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "ppp":
            return cmd_ppp(args)
        config = _run_config(args)
        if args.command == "calibrate":
            return cmd_calibrate(config)
        thresholds = ThresholdPair(posterior=args.theta, predictive=args.theta_star)
        if args.command == "simulate":
            return cmd_simulate(config, thresholds)
        return cmd_table(config, thresholds)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
