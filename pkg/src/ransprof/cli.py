"""Command line entry point.

Every subcommand is scriptable: diagnostics go to stderr, artifact paths
(or the artifact itself when no --out is given) go to stdout, and the exit
code is 0 on success, 1 on a domain error, 2 on a usage error.  The result
store location comes from --store or the RANSPROF_STORE environment
variable.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Any, Sequence

from ransprof import jsonio
from ransprof.attack import attack_from_obj
from ransprof.charts import CHART_KINDS, ChartSpec, emit_chart, parse_facet
from ransprof.errors import RansprofError, ValidationError
from ransprof.flood import build_backup_archive, flood_from_obj
from ransprof.oplog import write_oplog
from ransprof.orchestrator import MockBackend, experiment_spec_from_obj, run_battery
from ransprof.orchestrator.backends import ShellBackend
from ransprof.profiler import (
    ExperimentContext,
    aggregate,
    build_hierarchy,
    classify,
    read_summary,
    summarize,
)
from ransprof.report import ScanOptions, read_report, scan_directory, write_report
from ransprof.scenario import run_attack_scenario, timeline_from_obj
from ransprof.storage import ResultStore

STORE_ENV = "RANSPROF_STORE"


def _say(text: str) -> None:
    print(text, file=sys.stderr)


def _emit(path: Path) -> None:
    print(path)


def _load_json(path: str) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON: {exc}") from exc


def _store_path(args: argparse.Namespace) -> Path:
    store = args.store or os.environ.get(STORE_ENV)
    if not store:
        raise ValidationError(
            f"no result store configured: pass --store or set {STORE_ENV}"
        )
    return Path(store)


def _cli_context(reference, post) -> ExperimentContext:
    return ExperimentContext(
        experiment="adhoc",
        ransomware="unspecified",
        countermeasure=None,
        root=reference.root,
        timestamp=post.created_at,
    )


# -- subcommands ---------------------------------------------------------------


def cmd_scan(args: argparse.Namespace) -> int:
    options = ScanOptions(algorithm=args.algorithm) if args.algorithm else None
    report = scan_directory(args.root, options)
    if args.out:
        _emit(write_report(report, args.out))
    else:
        print(report.to_json_text(), end="")
    _say(f"scanned {len(report.entries)} entries under {args.root}")
    return 0


def cmd_diff(args: argparse.Namespace) -> int:
    reference = read_report(args.ref)
    post = read_report(args.post)
    diff = classify(reference, post)
    hierarchy = build_hierarchy(diff, _cli_context(reference, post))
    if args.out:
        Path(args.out).write_text(hierarchy.to_json_text(), encoding="utf-8")
        _emit(Path(args.out))
    else:
        print(hierarchy.to_json_text(), end="")
    counts = diff.counts()
    _say(
        "classified: "
        + ", ".join(f"{k} {counts[k]}" for k in ("pristine", "lost", "replica", "foreign"))
    )
    return 0


def cmd_summarize(args: argparse.Namespace) -> int:
    reference = read_report(args.ref)
    post = read_report(args.post)
    diff = classify(reference, post)
    hierarchy = build_hierarchy(diff, _cli_context(reference, post))
    summary = summarize(hierarchy)
    if args.hier:
        Path(args.hier).write_text(hierarchy.to_json_text(), encoding="utf-8")
        _emit(Path(args.hier))
    if args.out:
        Path(args.out).write_text(summary.to_json_text(), encoding="utf-8")
        _emit(Path(args.out))
    else:
        print(summary.to_json_text(), end="")
    return 0


def cmd_aggregate(args: argparse.Namespace) -> int:
    if args.battery:
        store = ResultStore(_store_path(args))
        summaries = store.load_summaries(args.battery)
        if not summaries:
            raise ValidationError(f"battery '{args.battery}' has no valid sessions")
    else:
        if not args.summaries:
            raise ValidationError("aggregate needs summary files or --battery")
        summaries = [read_summary(path) for path in args.summaries]
    combined = aggregate(summaries)
    if args.out:
        Path(args.out).write_text(combined.to_json_text(), encoding="utf-8")
        _emit(Path(args.out))
    else:
        print(combined.to_json_text(), end="")
    _say(f"aggregated {combined.n} summaries")
    return 0


def cmd_simulate_attack(args: argparse.Namespace) -> int:
    obj = _load_json(args.spec)
    if not isinstance(obj, dict):
        raise ValidationError(f"{args.spec}: scenario spec must be a JSON object")
    known = {"attack", "flood", "timeline", "seed", "flood_stop_at_s"}
    extras = set(obj) - known
    if extras:
        raise ValidationError(f"{args.spec}: unknown fields: {', '.join(sorted(extras))}")
    attack = attack_from_obj(obj["attack"], where="spec: attack") if obj.get("attack") else None
    flood = flood_from_obj(obj["flood"], where="spec: flood") if obj.get("flood") else None
    timeline = timeline_from_obj(obj.get("timeline") or {}, where="spec: timeline")
    if args.timeout_s is not None:
        timeline = dataclasses.replace(timeline, timeout_s=args.timeout_s)
    seed = args.seed if args.seed is not None else obj.get("seed")

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    reference = scan_directory(args.root, ScanOptions(created_at=jsonio.SIM_EPOCH))

    backup = Path(args.backup) if args.backup else None
    if backup is None and flood is not None and flood.needs_backup:
        backup = out_dir / "backup.zip"
        build_backup_archive(args.root, backup)
        _emit(backup)

    result = run_attack_scenario(
        reference,
        args.root,
        attack=attack,
        flood=flood,
        timeline=timeline,
        seed=seed,
        backup=backup,
        flood_stop_at_s=obj.get("flood_stop_at_s"),
    )
    pre_path = write_report(reference, out_dir / "report_pre.json")
    log_path = write_oplog(result.logged, out_dir / "oplog.jsonl")
    scanned_at = jsonio.sim_time_rfc3339(timeline.timeout_s / timeline.time_compression)
    post = scan_directory(args.root, ScanOptions(created_at=scanned_at))
    post_path = write_report(post, out_dir / "report_post.json")
    _emit(pre_path)
    _emit(log_path)
    _emit(post_path)
    _say(
        f"executed {len(result.executed)} operations "
        f"({len(result.skipped)} skipped, {result.truncated} past timeout)"
    )
    return 0


def cmd_run_battery(args: argparse.Namespace) -> int:
    spec = experiment_spec_from_obj(_load_json(args.spec))
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed_base=args.seed)
    if args.parallelism is not None:
        spec = dataclasses.replace(spec, parallelism=args.parallelism)
    if args.timeout_s is not None:
        spec = dataclasses.replace(
            spec, timeline=dataclasses.replace(spec.timeline, timeout_s=args.timeout_s)
        )
    store = ResultStore(_store_path(args))
    if args.backend == "shell":
        result = run_battery(spec, store, ShellBackend())
    else:
        with tempfile.TemporaryDirectory(prefix="ransprof-vms-") as vm_dir:
            result = run_battery(spec, store, MockBackend(vm_dir))
    _emit(store.base / result.battery_id / "manifest.json")
    _say(
        f"battery {result.battery_id}: {result.valid_count}/{spec.repetitions} valid, "
        f"peak parallelism {result.peak_parallel}, {result.wall_s:.1f}s"
    )
    return 0 if result.valid_count > 0 else 1


def cmd_plot(args: argparse.Namespace) -> int:
    spec = ChartSpec(
        kind=args.kind,
        source=args.source,
        output=args.out,
        facet=parse_facet(args.facet) if args.facet else None,
    )
    svg_path, csv_path = emit_chart(spec)
    _emit(svg_path)
    _emit(csv_path)
    return 0


def cmd_rebuild_index(args: argparse.Namespace) -> int:
    store = ResultStore(_store_path(args))
    outcome = store.rebuild_index()
    _emit(store.base / "index.json")
    _say(
        f"indexed {outcome['batteries']} batteries, {outcome['sessions']} sessions, "
        f"quarantined {len(outcome['quarantined'])}"
    )
    for moved in outcome["quarantined"]:
        _say(f"quarantined: {moved}")
    return 0


# -- wiring ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ransprof",
        description="Profile ransomware impact on file trees and run isolated experiment batteries.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", help="checksum a directory into a report")
    p.add_argument("--root", required=True, help="directory to scan")
    p.add_argument("--out", help="report path (stdout when omitted)")
    p.add_argument("--algorithm", help="digest algorithm (default md5)")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("diff", help="classify a report pair into a hierarchical profile")
    p.add_argument("--ref", required=True, help="pristine report")
    p.add_argument("--post", required=True, help="post-attack report")
    p.add_argument("--out", help="profile path (stdout when omitted)")
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("summarize", help="classify a report pair and roll up counters")
    p.add_argument("--ref", required=True, help="pristine report")
    p.add_argument("--post", required=True, help="post-attack report")
    p.add_argument("--out", help="summary path (stdout when omitted)")
    p.add_argument("--hier", help="also write the hierarchical profile here")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("aggregate", help="statistics across summary profiles")
    p.add_argument("summaries", nargs="*", help="summary profile files")
    p.add_argument("--battery", help="aggregate a stored battery's valid sessions instead")
    p.add_argument("--store", help=f"result store (default ${STORE_ENV})")
    p.add_argument("--out", help="aggregate path (stdout when omitted)")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser(
        "simulate-attack",
        help="run a seeded attack/flooding scenario against a directory, in place",
    )
    p.add_argument("--root", required=True, help="tree to mutate (no copy is taken)")
    p.add_argument("--spec", required=True, help="scenario spec JSON (attack/flood/timeline/seed)")
    p.add_argument("--out", required=True, help="directory for reports and the operation log")
    p.add_argument("--seed", type=int, help="override the spec's seed")
    p.add_argument("--timeout-s", type=float, help="override the timeline's timeout")
    p.add_argument("--backup", help="backup archive for shadow flooding (default: built fresh)")
    p.set_defaults(func=cmd_simulate_attack)

    p = sub.add_parser("run-battery", help="run an experiment battery against a backend")
    p.add_argument("--spec", required=True, help="experiment spec JSON")
    p.add_argument("--backend", choices=("mock", "shell"), default="mock")
    p.add_argument("--store", help=f"result store (default ${STORE_ENV})")
    p.add_argument("--seed", type=int, help="override seed_base")
    p.add_argument("--parallelism", type=int, help="override parallel session limit")
    p.add_argument("--timeout-s", type=float, help="override per-session timeout")
    p.set_defaults(func=cmd_run_battery)

    p = sub.add_parser("plot", help="emit an SVG chart plus CSV sidecar from a profile")
    p.add_argument("--kind", choices=CHART_KINDS, required=True)
    p.add_argument("--source", required=True, help="summary or aggregate profile")
    p.add_argument("--out", required=True, help="SVG output path (sidecar lands beside it)")
    p.add_argument("--facet", help="status:grouping for sunbursts, e.g. replica:folder")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("rebuild-index", help="re-derive the store index, quarantining wreckage")
    p.add_argument("--store", help=f"result store (default ${STORE_ENV})")
    p.set_defaults(func=cmd_rebuild_index)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage/help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except RansprofError as exc:
        _say(f"error: {exc}")
        return 1
    except OSError as exc:
        _say(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
