#!/usr/bin/env python3
"""
Georegistration command line.

Subcommands follow the registration progression:

    simulate -> filter-gps -> align-rigid / optimize --gps-priors -> optimize --anchors -> evaluate -> project

Every run is appended to an sqlite manifest with the sha256 of its inputs and
outputs; `replay` re-runs a manifest and reports any output that changed.
Errors are reported as one `georeg-error {json}` line on stderr and the exit
code says what went wrong: 2 input, 3 numerical, 4 configuration.
"""

import argparse
import json
import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

from errors import ConfigError, GeoregError, InputError, NumericalError
from evaluation import EvalConfig, evaluate_curve, match_labels, unmatched_labels
from fileio import (
    atomic_write_text,
    build_config,
    read_decisions_csv,
    read_gps_csv,
    read_labels_csv,
    read_odom_csv,
    read_origin,
    read_path_csv,
    read_pose_times_csv,
    write_decisions_csv,
    write_path_csv,
    write_table,
)
from geometry import MapOrigin, utm_to_map
from gps_filter import FilterConfig
from graph_io import read_graph, write_graph
from manifest import DEFAULT_MANIFEST, TOOL_VERSION, Invocation, hash_files, load_invocations, record_invocation
from optimizer import OptimizerConfig, optimize
from pipeline import align_rigid, filter_gps, register_anchors, register_loose
from pose_graph import DEFAULT_ANCHOR_SIGMA, DEFAULT_GPS_SIGMA, DEFAULT_GPS_SPACING
from projection import project_scans, rasterize, read_scans, write_points_csv
from simulator import SimConfig, generate, write_outputs

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'

# (inputs, outputs, config snapshot) of one subcommand run
RunRecord = Tuple[List[str], List[str], Dict[str, Any]]


def _origin(path: Optional[str]) -> MapOrigin:
    return read_origin(path) if path else MapOrigin()


def _emit_report(report: Dict[str, Any], path: Optional[str]) -> None:
    line = json.dumps(report, sort_keys=True)
    if path:
        atomic_write_text(path, line + "\n")
    else:
        print(line)


# -----------------------------
# Subcommands
# -----------------------------

def cmd_simulate(args: argparse.Namespace) -> RunRecord:
    config = build_config(SimConfig, args.config, {"seed": args.seed, "preset": args.preset})
    result = generate(config)
    paths = write_outputs(result, args.out)
    inputs = [args.config] if args.config else []
    return inputs, [str(p) for p in paths.values()], config.model_dump(mode="json")


def cmd_filter_gps(args: argparse.Namespace) -> RunRecord:
    config = build_config(FilterConfig, args.config, {
        "gate_confidence": args.gate_confidence,
        "gps_sigma": args.gps_sigma,
    })
    origin = _origin(args.origin)
    odom = read_odom_csv(args.odom)
    gps = read_gps_csv(args.gps)
    path, decisions = filter_gps(odom, gps, origin, config)
    write_path_csv(args.out_path, path)
    outputs = [args.out_path]
    if args.out_decisions:
        write_decisions_csv(args.out_decisions, decisions)
        outputs.append(args.out_decisions)
    inputs = [p for p in (args.odom, args.gps, args.origin, args.config) if p]
    return inputs, outputs, config.model_dump(mode="json")


def cmd_align_rigid(args: argparse.Namespace) -> RunRecord:
    origin = _origin(args.origin)
    graph = read_graph(args.graph)
    fixes = read_gps_csv(args.gps)
    pose_times = read_pose_times_csv(args.pose_times)
    decisions = read_decisions_csv(args.decisions, fixes) if args.decisions else None
    transform, chi2, pairs = align_rigid(graph, pose_times, fixes, origin, args.max_dt, decisions, args.gps_sigma)
    write_graph(graph, args.out)
    _emit_report({"theta": transform.theta, "tx": transform.x, "ty": transform.y, "chi2": chi2, "pairs": pairs},
                 args.report)
    inputs = [p for p in (args.graph, args.gps, args.pose_times, args.decisions, args.origin) if p]
    outputs = [args.out] + ([args.report] if args.report else [])
    return inputs, outputs, {"max_dt": args.max_dt, "gps_sigma": args.gps_sigma}


def cmd_optimize(args: argparse.Namespace) -> RunRecord:
    config = build_config(OptimizerConfig, args.config, {"max_iter": args.max_iter})
    origin = _origin(args.origin)
    graph = read_graph(args.graph)
    inputs = [p for p in (args.graph, args.config, args.origin) if p]
    snapshot: Dict[str, Any] = {"optimizer": config.model_dump(mode="json")}
    reports: Dict[str, Any] = {}

    if args.gps_priors:
        if not args.pose_times:
            raise ConfigError("--gps-priors needs --pose-times to place priors on pose vertices", key="pose_times")
        filtered = read_path_csv(args.gps_priors)
        pose_times = read_pose_times_csv(args.pose_times)
        report = register_loose(graph, filtered, pose_times, args.gps_spacing, args.gps_sigma,
                                rigid_init=not args.no_rigid_init, keep_fixed=args.keep_fixed, config=config)
        reports["gps"] = report.model_dump(mode="json")
        inputs += [args.gps_priors, args.pose_times]
        snapshot.update(gps_spacing=args.gps_spacing, gps_sigma=args.gps_sigma,
                        rigid_init=not args.no_rigid_init, keep_fixed=args.keep_fixed)

    if args.anchors:
        labels = [p for _, p in read_labels_csv(args.anchors)]
        matches, report = register_anchors(graph, labels, origin, args.anchor_sigma, args.match_radius, config)
        reports["anchors"] = report.model_dump(mode="json")
        reports["anchors"]["matched"] = len(matches)
        inputs.append(args.anchors)
        snapshot.update(anchor_sigma=args.anchor_sigma, match_radius=args.match_radius)

    if not args.gps_priors and not args.anchors:
        reports["plain"] = optimize(graph, config).model_dump(mode="json")

    write_graph(graph, args.out)
    outputs = [args.out]
    if args.report:
        atomic_write_text(args.report, json.dumps(reports, indent=2, sort_keys=True) + "\n")
        outputs.append(args.report)
    return inputs, outputs, snapshot


def cmd_evaluate(args: argparse.Namespace) -> RunRecord:
    config = build_config(EvalConfig, args.config, {
        "n_values": args.n_values,
        "max_combinations": args.max_combinations,
        "sample_seed": args.sample_seed,
        "mode": args.mode,
        "workers": args.workers,
        "match_radius": args.match_radius,
        "anchor_sigma": args.anchor_sigma,
    })
    origin = _origin(args.origin)
    graph = read_graph(args.graph)
    labels = [utm_to_map(p, origin) for _, p in read_labels_csv(args.labels)]
    matched = match_labels(graph, labels, config.match_radius)
    missing = unmatched_labels(labels, matched)
    if missing:
        logger.warning(f"{len(missing)} labels left unmatched")
    report = evaluate_curve(graph, matched, config, origin)
    write_table(args.out_curve, report.curve_frame())
    outputs = [args.out_curve]
    if args.out_residuals:
        write_table(args.out_residuals, report.residual_frame())
        outputs.append(args.out_residuals)
    inputs = [p for p in (args.graph, args.labels, args.origin, args.config) if p]
    return inputs, outputs, config.model_dump(mode="json")


def cmd_project(args: argparse.Namespace) -> RunRecord:
    origin = _origin(args.origin)
    graph = read_graph(args.graph)
    points = project_scans(graph, read_scans(args.scans), origin)
    write_points_csv(args.out_points, points)
    outputs = [args.out_points]
    if args.grid:
        outputs += [str(p) for p in rasterize(points, args.cell_size).write(args.grid).values()]
    inputs = [p for p in (args.graph, args.scans, args.origin) if p]
    return inputs, outputs, {"cell_size": args.cell_size}


def cmd_replay(args: argparse.Namespace) -> RunRecord:
    invocations = [inv for inv in load_invocations(args.manifest)
                   if inv.command != "replay" and inv.exit_code == 0]
    if not invocations:
        raise InputError(f"manifest {args.manifest} has no successful runs to replay", file=args.manifest)
    mismatches = []
    for inv in invocations:
        code = run(inv.argv, record=False)
        if code != 0:
            mismatches.append({"id": inv.id, "command": inv.command, "exit_code": code})
            continue
        current = hash_files(list(inv.outputs))
        for path, digest in inv.outputs.items():
            if current.get(path) != digest:
                mismatches.append({"id": inv.id, "command": inv.command, "file": path})
    logger.info(f"Replayed {len(invocations)} runs, {len(mismatches)} mismatches")
    if mismatches:
        raise NumericalError(f"replay produced {len(mismatches)} differing outputs", mismatches=mismatches)
    return [args.manifest], [], {"replayed": len(invocations)}


# -----------------------------
# Parser
# -----------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="georeg", description="Register a local landmark map into UTM")
    parser.add_argument(
        "--manifest",
        default=DEFAULT_MANIFEST,
        help=f"sqlite manifest recording every run (default: {DEFAULT_MANIFEST})"
    )
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging verbosity (default: INFO)"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Generate a synthetic world and its sensor streams")
    p.add_argument("--config", help="key=value simulator config file")
    p.add_argument("--preset", choices=["loop", "figure8", "campus", "line"], help="Path preset (default: loop)")
    p.add_argument("--seed", type=int, help="Random seed (default: 0)")
    p.add_argument("--out", required=True, help="Output directory")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("filter-gps", help="UKF-filter GPS against odometry with chi-square gating")
    p.add_argument("--odom", required=True, help="Odometry CSV t,v,omega")
    p.add_argument("--gps", required=True, help="GPS CSV t,easting,northing,sigma")
    p.add_argument("--origin", help="Map origin key=value file (default: zero offset)")
    p.add_argument("--config", help="key=value filter config file")
    p.add_argument("--gate-confidence", type=float, help="Chi-square gate confidence (default: 0.95)")
    p.add_argument("--gps-sigma", type=float, help=f"GPS sigma for fixes without one (default: {DEFAULT_GPS_SIGMA})")
    p.add_argument("--out-path", required=True, help="Filtered path CSV t,x,y,theta")
    p.add_argument("--out-decisions", help="Gate decisions CSV")
    p.set_defaults(handler=cmd_filter_gps)

    p = sub.add_parser("align-rigid", help="Rigidly align the local map to GPS")
    p.add_argument("--graph", required=True, help="Input graph file")
    p.add_argument("--gps", required=True, help="GPS CSV")
    p.add_argument("--pose-times", required=True, help="Pose timestamps CSV pose_id,t")
    p.add_argument("--decisions", help="Gate decisions CSV; rejected fixes get zero weight")
    p.add_argument("--origin", help="Map origin key=value file (default: zero offset)")
    p.add_argument("--max-dt", type=float, default=0.5, help="Max fix-to-pose time gap in seconds (default: 0.5)")
    p.add_argument("--gps-sigma", type=float, default=DEFAULT_GPS_SIGMA,
                   help=f"Sigma for fixes without one (default: {DEFAULT_GPS_SIGMA})")
    p.add_argument("--out", required=True, help="Transformed graph file")
    p.add_argument("--report", help="JSON report path (default: stdout)")
    p.set_defaults(handler=cmd_align_rigid)

    p = sub.add_parser("optimize", help="Optimise a graph, optionally adding GPS priors and aerial anchors")
    p.add_argument("--graph", required=True, help="Input graph file")
    p.add_argument("--out", required=True, help="Optimised graph file")
    p.add_argument("--config", help="key=value optimizer config file")
    p.add_argument("--max-iter", type=int, help="LM iteration cap (default: 100)")
    p.add_argument("--gps-priors", help="Filtered path CSV used for loose GPS priors")
    p.add_argument("--pose-times", help="Pose timestamps CSV pose_id,t (needed with --gps-priors)")
    p.add_argument("--gps-spacing", type=float, default=DEFAULT_GPS_SPACING,
                   help=f"Meters of travel between GPS priors (default: {DEFAULT_GPS_SPACING})")
    p.add_argument("--gps-sigma", type=float, default=DEFAULT_GPS_SIGMA,
                   help=f"GPS prior sigma in meters (default: {DEFAULT_GPS_SIGMA})")
    p.add_argument("--keep-fixed", action="store_true", help="Keep FIX vertices when adding GPS priors")
    p.add_argument("--no-rigid-init", action="store_true", help="Skip rigid pre-alignment before GPS priors")
    p.add_argument("--anchors", help="Aerial labels CSV pole_id,easting,northing")
    p.add_argument("--anchor-sigma", type=float, default=DEFAULT_ANCHOR_SIGMA,
                   help=f"Anchor prior sigma in meters (default: {DEFAULT_ANCHOR_SIGMA})")
    p.add_argument("--match-radius", type=float, default=3.0, help="Label matching radius (default: 3.0)")
    p.add_argument("--origin", help="Map origin key=value file (default: zero offset)")
    p.add_argument("--report", help="JSON optimisation report path")
    p.set_defaults(handler=cmd_optimize)

    p = sub.add_parser("evaluate", help="Leave-n-out anchor accuracy curve")
    p.add_argument("--graph", required=True, help="Registered graph file")
    p.add_argument("--labels", required=True, help="Aerial labels CSV")
    p.add_argument("--origin", help="Map origin key=value file (default: zero offset)")
    p.add_argument("--config", help="key=value evaluation config file")
    p.add_argument("--n-values", help="Comma-separated anchor counts (default: 0)")
    p.add_argument("--max-combinations", type=int, help="Subset cap per n (default: 1000)")
    p.add_argument("--sample-seed", type=int, help="Subset sampling seed (default: 0)")
    p.add_argument("--mode", choices=["auto", "exhaustive", "sampled"], help="Subset selection (default: auto)")
    p.add_argument("--workers", type=int, help="Parallel optimisations (default: 1)")
    p.add_argument("--match-radius", type=float, help="Label matching radius (default: 3.0)")
    p.add_argument("--anchor-sigma", type=float, help=f"Anchor sigma (default: {DEFAULT_ANCHOR_SIGMA})")
    p.add_argument("--out-curve", required=True, help="Curve CSV n,combos,mean_err,stddev,failures")
    p.add_argument("--out-residuals", help="Residual CSV of the all-anchored run")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("project", help="Project scans into UTM and rasterise")
    p.add_argument("--graph", required=True, help="Optimised graph file")
    p.add_argument("--scans", required=True, help="Scans CSV pose_id,x,y,intensity")
    p.add_argument("--origin", help="Map origin key=value file (default: zero offset)")
    p.add_argument("--out-points", required=True, help="Points CSV easting,northing,intensity")
    p.add_argument("--grid", help="Raster path stem; writes .pgm, .csv and .pgw")
    p.add_argument("--cell-size", type=float, default=0.5, help="Raster cell size in meters (default: 0.5)")
    p.set_defaults(handler=cmd_project)

    p = sub.add_parser("replay", help="Re-run every recorded invocation and compare output hashes")
    p.set_defaults(handler=cmd_replay)
    return parser


def _split_list(value: Optional[str]) -> Optional[List[str]]:
    if value is None:
        return None
    return [v.strip() for v in value.split(",") if v.strip()]


def run(argv: List[str], record: bool = True) -> int:
    """Parse and execute one subcommand; returns the exit code."""
    args = build_parser().parse_args(argv)
    if getattr(args, "n_values", None) is not None:
        args.n_values = _split_list(args.n_values)

    started_at = datetime.now().isoformat()
    handler: Callable[[argparse.Namespace], RunRecord] = args.handler
    inputs: List[str] = []
    outputs: List[str] = []
    snapshot: Dict[str, Any] = {}
    exit_code = 0
    try:
        inputs, outputs, snapshot = handler(args)
    except GeoregError as exc:
        exit_code = exc.exit_code
        print(f"georeg-error {json.dumps(exc.to_record(), sort_keys=True, default=str)}", file=sys.stderr)
        logger.error(str(exc))
    except Exception as exc:
        exit_code = 1
        logger.exception(f"{args.command} failed unexpectedly: {exc}")
        print(f"georeg-error {json.dumps({'error': 'internal', 'exit_code': 1, 'message': str(exc)})}",
              file=sys.stderr)

    if record and args.command != "replay":
        record_invocation(Invocation(
            command=args.command,
            argv=list(argv),
            config=snapshot,
            tool_version=TOOL_VERSION,
            inputs=hash_files(inputs),
            outputs=hash_files(outputs) if exit_code == 0 else {},
            started_at=started_at,
            exit_code=exit_code,
        ), args.manifest)
    return exit_code


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    known, _ = parser.parse_known_args(argv)
    logging.basicConfig(level=getattr(logging, known.log_level), format=LOG_FORMAT)
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
