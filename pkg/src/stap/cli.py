"""
Command-line entry point.

Exit codes: 0 success, 2 configuration or input error, 3 run completed with
at least one skipped window (or a mid-stream source error), 4 total failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .config import ConfigError, Mode, PipelineConfig, load_config_sections, resolve_backend_spec
from .evaluation import (
    GroundTruthSet,
    MissingLabel,
    ProfileError,
    class_profile_report,
    load_prediction_pairs,
    score_pairs,
)
from .ingest import SamplingPolicy, SourceError, expected_window_count, open_source
from .preprocess import PreprocessVariant
from .spatial import TraceFormatError, build_spatial_backend
from .temporal import build_temporal_backend

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARTIAL = 3
EXIT_FAILED = 4

log = logging.getLogger("stap")


def _configure_logging() -> None:
    level = os.environ.get("STAP_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stap", description="Spatio-temporal video anomaly pipeline")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the pipeline over a source")
    run.add_argument("--mode", choices=[m.value for m in Mode])
    run.add_argument("--config", type=Path)
    run.add_argument("--source", type=Path, required=True)
    run.add_argument("--out", type=Path, required=True)
    run.add_argument("--preprocess", choices=[v.value for v in PreprocessVariant])
    run.add_argument("--frame-interval", type=_positive_int)
    run.add_argument("--window-size", type=_positive_int)
    run.add_argument("--window-stride", type=_positive_int)
    run.add_argument("--spatial-frames", type=_positive_int,
                     help="analyze N evenly spaced frames per window")
    run.add_argument("--spatial-backend", help="trace:FILE | synthetic:SPEC | none")
    run.add_argument("--temporal-backend", help="trace:FILE | synthetic:SPEC | none")
    run.add_argument("--max-inflight", type=_positive_int)
    run.add_argument("--anomaly-threshold", type=float)
    run.add_argument("--single-thread", action="store_true", help="run branches sequentially")
    run.add_argument("--debug-dump", type=Path, help="write enriched serial windows here")
    run.add_argument("--no-figures", action="store_true")

    bench = sub.add_parser("bench", help="latency benchmark with synthetic backends")
    bench.add_argument("--modes", default="parallel,serial")
    bench.add_argument("--spatial-latency", type=float, default=50.0)
    bench.add_argument("--temporal-latency", type=float, default=100.0)
    bench.add_argument("--source", type=Path)
    bench.add_argument("--windows", type=_positive_int, default=20,
                       help="windows of the built-in constant source when --source is absent")
    bench.add_argument("--repeat", type=_positive_int, default=1)
    bench.add_argument("--window-size", type=_positive_int, default=15)
    bench.add_argument("--frame-interval", type=_positive_int, default=1)
    bench.add_argument("--spatial-frames", type=_positive_int, default=3)
    bench.add_argument("--max-inflight", type=_positive_int, default=2)
    bench.add_argument("--spatial-backend", help="only synthetic:SPEC is accepted")
    bench.add_argument("--temporal-backend", help="only synthetic:SPEC is accepted")
    bench.add_argument("--out", type=Path)
    bench.add_argument("--no-figures", action="store_true")

    ev = sub.add_parser("eval", help="score predictions against ground truth")
    ev.add_argument("--predictions", type=Path, required=True)
    ev.add_argument("--truth", type=Path, required=True)
    ev.add_argument("--profile", type=int, choices=[3, 4], default=4)
    ev.add_argument("--out", type=Path)
    ev.add_argument("--no-figures", action="store_true")

    ins = sub.add_parser("inspect", help="describe a source, trace or report")
    ins.add_argument("path", type=Path)
    ins.add_argument("--frame-interval", type=_positive_int, default=1)
    ins.add_argument("--window-size", type=_positive_int, default=15)
    ins.add_argument("--window-stride", type=_positive_int)

    gen = sub.add_parser("gen-fixtures", help="write the deterministic fixture set")
    gen.add_argument("--out", type=Path, required=True)
    gen.add_argument("--seed", type=int, default=0)
    return parser


# --------------------------------------------------------------------------


def effective_config(args: argparse.Namespace) -> PipelineConfig:
    """File config (if any) with command-line flags layered on top."""
    d: dict = {}
    base_dir = None
    if args.config:
        d, base_dir = load_config_sections(args.config)
    for name in ("pipeline", "sampling", "preprocess", "backends"):
        d.setdefault(name, {})
    if args.mode:
        d["pipeline"]["mode"] = args.mode
    samp = d["sampling"]
    if args.frame_interval:
        samp["frame_interval"] = args.frame_interval
    if args.window_size:
        old_size = samp.get("window_size", 15)
        if not args.window_stride and str(samp.get("window_stride", old_size)) == str(old_size):
            samp["window_stride"] = args.window_size
        samp["window_size"] = args.window_size
    if args.window_stride:
        samp["window_stride"] = args.window_stride
    if args.spatial_frames:
        d["spatial"] = {**d.get("spatial", {}), "frames_per_window": args.spatial_frames,
                        "frame_selection": "evenly-spaced"}
    if args.preprocess:
        d["preprocess"]["variant"] = args.preprocess
    if args.spatial_backend:
        d["backends"]["spatial"] = resolve_backend_spec(args.spatial_backend, Path.cwd())
    if args.temporal_backend:
        d["backends"]["temporal"] = resolve_backend_spec(args.temporal_backend, Path.cwd())
    if args.max_inflight:
        d["pipeline"]["max_inflight_windows"] = args.max_inflight
    if args.anomaly_threshold is not None:
        d["pipeline"]["anomaly_threshold"] = args.anomaly_threshold
    if args.single_thread:
        d["pipeline"]["threaded"] = False
    return PipelineConfig.from_dict(d, base_dir)


def cmd_run(args: argparse.Namespace) -> int:
    from .orchestrator import Pipeline

    try:
        cfg = effective_config(args)
        source = open_source(args.source)
        spatial = build_spatial_backend(cfg.spatial_backend)
        temporal = build_temporal_backend(cfg.temporal_backend)
    except (ConfigError, SourceError, TraceFormatError, ValueError, OSError) as exc:
        print(f"stap run: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = Pipeline(cfg, spatial, temporal, debug_dump=args.debug_dump).run(source)
    except Exception as exc:  # anything escaping the engine is a total failure
        log.exception("run failed")
        print(f"stap run: failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    out = args.out
    paths = report.write(out)
    (out / "config.ini").write_text(cfg.to_ini())
    if not args.no_figures:
        from .plots import plot_run_latencies

        plot_run_latencies(report, out / "latency.png")
    print(f"{len(report.predictions)} prediction(s), {report.skipped_windows} skipped window(s); "
          f"report: {paths['json']}")
    if report.windows_formed and not report.predictions:
        return EXIT_FAILED
    if report.source_error and not report.predictions:
        return EXIT_FAILED
    if report.gaps or report.source_error:
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    from .bench import format_bench_table, run_bench
    from .spatial import parse_synthetic_spec

    spatial_latency, temporal_latency = args.spatial_latency, args.temporal_latency
    spatial_rule, temporal_rule = "red-flame", "motion"
    for flag, spec in (("spatial", args.spatial_backend), ("temporal", args.temporal_backend)):
        if spec is None:
            continue
        kind, _, rest = spec.partition(":")
        if kind.strip().lower() != "synthetic":
            print(f"stap bench: {flag} backend must be synthetic (wall-clock latency of "
                  f"{kind or spec!r} backends is meaningless)", file=sys.stderr)
            return EXIT_CONFIG
        opts = parse_synthetic_spec(rest)
        if flag == "spatial":
            spatial_latency = float(opts.get("latency", spatial_latency))
            spatial_rule = opts.get("rule", spatial_rule)
        else:
            temporal_latency = float(opts.get("latency", temporal_latency))
            temporal_rule = opts.get("rule", temporal_rule)
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    try:
        source = open_source(args.source) if args.source else None
        result = run_bench(
            modes, spatial_latency, temporal_latency, source, args.repeat,
            args.window_size, args.frame_interval, args.spatial_frames, args.max_inflight,
            args.windows, spatial_rule, temporal_rule,
        )
    except (ValueError, SourceError, OSError) as exc:
        print(f"stap bench: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    table = format_bench_table(result)
    print(table, end="")
    for mode, s in result.summary().items():
        print(f"{mode}: mean {s['mean_ms']:.1f} ms, median {s['median_ms']:.1f} ms, "
              f"modeled {s['modeled_ms']:.1f} ms")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "bench.json").write_text(result.to_json())
        (args.out / "bench.txt").write_text(table)
        if not args.no_figures:
            from .plots import plot_bench

            plot_bench(result, args.out / "bench.png")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    try:
        truth = GroundTruthSet.from_csv(args.truth)
        pairs = load_prediction_pairs(args.predictions)
        report = score_pairs(pairs, truth, args.profile)
        excluded = len(truth.labels) - report.total
        report.excluded = max(excluded, 0)
        text, csv_text = class_profile_report(report, args.profile)
    except (ProfileError, MissingLabel, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"stap eval: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(text, end="")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "eval.txt").write_text(text)
        (args.out / "eval.csv").write_text(csv_text)
        doc = report.to_dict()
        doc["invocation"] = {
            "predictions": str(args.predictions),
            "truth": str(args.truth),
            "profile": args.profile,
        }
        (args.out / "eval.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        if not args.no_figures:
            from .plots import plot_confusion

            plot_confusion(report, args.out / "confusion.png")
    return EXIT_OK


def cmd_inspect(args: argparse.Namespace) -> int:
    path: Path = args.path
    try:
        if path.is_dir() or (path.is_file() and path.read_bytes()[:5] == b"STAP1"):
            src = open_source(path)
            info = src.describe()
            n = info.get("frame_count", 0)
            policy = SamplingPolicy(args.frame_interval, args.window_size, args.window_stride)
            info["duration_ms"] = n * 1000.0 / src.fps
            info["sampling"] = policy.to_dict()
            info["windows"] = expected_window_count(n, policy)
        elif path.suffix == ".jsonl":
            records = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
            kind = "temporal-trace" if records and "window" in records[0] else "spatial-trace"
            info = {"kind": kind, "records": len(records)}
            if kind == "spatial-trace":
                from .spatial import load_detection_trace

                table = load_detection_trace(path)
                counts: dict[str, int] = {}
                for dets in table.values():
                    for d in dets:
                        counts[d.object_class.value] = counts.get(d.object_class.value, 0) + 1
                info["detections_by_class"] = dict(sorted(counts.items()))
            else:
                from .temporal import load_score_trace

                table = load_score_trace(path)
                info["argmax"] = {str(k): v.argmax_class.value for k, v in sorted(table.items())}
        elif path.is_file():
            doc = json.loads(path.read_text())
            info = {
                "kind": "report",
                "mode": doc.get("mode"),
                "windows_formed": doc.get("windows_formed"),
                "predictions": len(doc.get("predictions", [])),
                "skipped_windows": doc.get("skipped_windows"),
                "stats": doc.get("stats"),
            }
        else:
            raise SourceError(f"no such path: {path}")
    except (SourceError, ValueError, OSError, KeyError) as exc:
        print(f"stap inspect: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(info, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_gen_fixtures(args: argparse.Namespace) -> int:
    from .fixtures import generate_fixtures

    try:
        manifest = generate_fixtures(args.out, args.seed)
    except OSError as exc:
        print(f"stap gen-fixtures: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"wrote {len(manifest['files'])} fixture files to {args.out}")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "bench": cmd_bench,
    "eval": cmd_eval,
    "inspect": cmd_inspect,
    "gen-fixtures": cmd_gen_fixtures,
}


def main(argv: Sequence[str] | None = None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
