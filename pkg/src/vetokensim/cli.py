"""Command-line front door: validate scenarios, run simulations, export metrics.

Exit codes: 0 success, 1 usage/validation error, 2 runtime error.  Output is
plain text (no colour, so NO_COLOR needs no special handling).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import metrics
from .errors import ScenarioError, VeTokenSimError
from .sim import MAX_SEED, SimTrace, load_scenario, packaged_scenarios, run_scenario

REPORT_METRICS = (
    "participation",
    "share_table",
    "pearson",
    "outliers",
    "diff_matrix",
    "cost_per_vote",
    "snapshots",
    "round_results",
    "settlements",
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="vetokensim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    validate = sub.add_parser("validate", help="check a scenario file and exit")
    validate.add_argument("scenario", help="scenario path or packaged name")

    run = sub.add_parser("run", help="run a scenario and write trace plus summary")
    run.add_argument("scenario", help="scenario path or packaged name")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int, default=None, help="override the scenario rng seed")

    report = sub.add_parser("report", help="compute a metric from a trace file")
    report.add_argument("trace", help="path to a trace.ndjson file")
    report.add_argument("--metric", required=True, choices=REPORT_METRICS)
    report.add_argument("--round", default=None, metavar="A..B", help="restrict to rounds A..B inclusive")
    report.add_argument("--actor", default=None, help="account for cost_per_vote")
    report.add_argument("--avenue", default=None, choices=metrics.AVENUES, help="avenue for cost_per_vote")
    report.add_argument("--out", required=True, help="output file")
    report.add_argument("--format", default="csv", choices=("csv", "json"))

    sub.add_parser("scenarios", help="list packaged scenarios")
    return parser


def _parse_round_range(text: str) -> tuple[int, int]:
    try:
        start, _, end = text.partition("..")
        lo, hi = int(start), int(end)
    except ValueError:
        raise _UsageError(f"--round expects A..B, got {text!r}") from None
    if hi < lo:
        raise _UsageError(f"--round range {text!r} is empty")
    return lo, hi


def _phase_pearson(table: metrics.ShareTable, bootstrap_rounds: int) -> dict:
    def safe(rows):
        if len(rows) < 2:
            return None
        try:
            return metrics.pearson([(r.bribe_share, r.vote_share) for r in rows])
        except VeTokenSimError:
            return None

    out = {"overall": safe(table.rows)}
    if bootstrap_rounds > 0:
        out["bootstrap"] = safe([r for r in table.rows if r.round_id < bootstrap_rounds])
        out["mature"] = safe([r for r in table.rows if r.round_id >= bootstrap_rounds])
    return out


def _fmt(value) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def _summarize(config, trace: SimTrace) -> dict:
    settled = sum(1 for row in trace if row.get("settlement"))
    summary: dict = {
        "scenario": config.name,
        "epochs": len(trace),
        "rounds_settled": settled,
        "pearson": {"overall": None},
        "participation": None,
        "cost_per_vote": {},
    }
    if settled:
        table = metrics.share_table(trace)
        summary["pearson"] = _phase_pearson(table, config.bootstrap_rounds)
    stats = metrics.participation_stats(trace)
    summary["participation"] = {
        "unique_lockers": stats.unique_lockers,
        "unique_voters": stats.unique_voters,
        "voter_fraction": stats.voter_fraction,
        "weight_voting_fraction": stats.weight_voting_fraction,
        "mean_voters_by_proposal_type": stats.mean_voters_by_proposal_type,
    }
    for spec in config.agents:
        per_avenue = {}
        for avenue in metrics.AVENUES:
            try:
                series = metrics.cost_per_vote_series(trace, spec.account, avenue)
            except VeTokenSimError:
                continue
            per_avenue[avenue] = series.final_usd_per_vote()
        if per_avenue:
            summary["cost_per_vote"][spec.account] = per_avenue
    return summary


def _print_summary(summary: dict) -> None:
    print(
        f"scenario {summary['scenario']}: {summary['epochs']} epochs, "
        f"{summary['rounds_settled']} rounds settled"
    )
    pear = summary["pearson"]
    print(f"pearson(bribe share, vote share): overall {_fmt(pear.get('overall'))}")
    if "bootstrap" in pear:
        print(f"  bootstrap phase: {_fmt(pear.get('bootstrap'))}")
        print(f"  mature phase: {_fmt(pear.get('mature'))}")
    part = summary["participation"]
    print(
        f"participation: {part['unique_voters']}/{part['unique_lockers']} lockers ever vote "
        f"(fraction {part['voter_fraction']:.4f}), weight-voting fraction "
        f"{part['weight_voting_fraction']:.4f}"
    )
    if summary["cost_per_vote"]:
        print("cost per vote (final USD per weight unit):")
        for account, per_avenue in summary["cost_per_vote"].items():
            joined = ", ".join(f"{avenue} {_fmt(value)}" for avenue, value in per_avenue.items())
            print(f"  {account}: {joined}")


def _cmd_validate(args) -> int:
    load_scenario(args.scenario)
    print("OK")
    return 0


def _cmd_run(args) -> int:
    config = load_scenario(args.scenario)
    if args.seed is not None:
        if not 0 <= args.seed <= MAX_SEED:
            raise _UsageError(f"--seed must be a 64-bit unsigned integer, got {args.seed}")
        config.rng_seed = args.seed
    trace = run_scenario(config)
    os.makedirs(args.out, exist_ok=True)
    trace_path = os.path.join(args.out, "trace.ndjson")
    summary_path = os.path.join(args.out, "summary.json")
    trace.write_ndjson(trace_path)
    summary = _summarize(config, trace)
    with open(summary_path, "w", encoding="utf-8") as handle:
        json.dump(summary, handle, sort_keys=True, indent=2)
        handle.write("\n")
    _print_summary(summary)
    print(f"wrote {trace_path} and {summary_path}")
    return 0


def _cmd_report(args) -> int:
    trace = SimTrace.read_ndjson(args.trace)
    round_range = _parse_round_range(args.round) if args.round else None

    def filtered_table() -> metrics.ShareTable:
        table = metrics.share_table(trace)
        if round_range:
            lo, hi = round_range
            table = metrics.ShareTable([r for r in table.rows if lo <= r.round_id <= hi])
            if not table.rows:
                raise VeTokenSimError(f"no share rows in rounds {lo}..{hi}")
        return table

    if args.metric == "participation":
        if round_range:
            raise _UsageError("--round does not apply to participation")
        obj = metrics.participation_stats(trace)
    elif args.metric == "snapshots":
        if round_range:
            raise _UsageError("--round does not apply to snapshots (epoch-keyed)")
        obj = metrics.gauge_snapshots(trace)
    elif args.metric == "round_results":
        obj = metrics.round_results(trace)
        if round_range:
            lo, hi = round_range
            obj = metrics.RoundResultTable([r for r in obj.rows if lo <= r[0] <= hi])
    elif args.metric == "settlements":
        obj = metrics.settlements(trace)
        if round_range:
            lo, hi = round_range
            obj = metrics.SettlementTable([r for r in obj.rows if lo <= r[0] <= hi])
    elif args.metric == "share_table":
        obj = filtered_table()
    elif args.metric == "outliers":
        obj = metrics.outlier_table(filtered_table())
    elif args.metric == "diff_matrix":
        obj = metrics.diff_matrix(filtered_table())
    elif args.metric == "pearson":
        value = metrics.pearson(filtered_table().pairs())
        with open(args.out, "w", encoding="utf-8") as handle:
            if args.format == "csv":
                handle.write(f"pearson\n{value:.10g}\n")
            else:
                json.dump({"pearson": float(f'{value:.10g}')}, handle, sort_keys=True)
                handle.write("\n")
        print(f"wrote {args.out}")
        return 0
    else:  # cost_per_vote
        if not args.actor or not args.avenue:
            raise _UsageError("cost_per_vote needs --actor and --avenue")
        if round_range:
            raise _UsageError("--round does not apply to cost_per_vote")
        obj = metrics.cost_per_vote_series(trace, args.actor, args.avenue)
    metrics.export(obj, args.format, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_scenarios(args) -> int:
    for name, description in packaged_scenarios().items():
        print(f"{name}: {description}" if description else name)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError:
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    handlers = {
        "validate": _cmd_validate,
        "run": _cmd_run,
        "report": _cmd_report,
        "scenarios": _cmd_scenarios,
    }
    try:
        return handlers[args.command](args)
    except _UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except ScenarioError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except VeTokenSimError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
