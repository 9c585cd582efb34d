"""Command line entry points: run, resume, stats, validate-config."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ConfigError, PipelineConfig, load_config, validate_config
from .contentfilter import RuleConfigError
from .pipeline import rebuild_report, resume_pipeline, run_pipeline

EXIT_OK = 0
EXIT_STAGE_FAILURE = 1
EXIT_VALIDATION = 2


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", "-c", required=True, help="pipeline YAML config file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key, e.g. --set dedup.seed=42 (repeatable)",
    )
    parser.add_argument("--workers", type=int, help="override workers")
    parser.add_argument("--batch-size", type=int, help="override batch_size")
    parser.add_argument("--output-dir", help="override output_dir")
    parser.add_argument("--snapshot", help="override snapshot label")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corpusprep",
        description="Curate a web-text corpus: ingest WET shards, gate language, "
        "deduplicate, filter content and quality, and report per-stage statistics.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="verbose logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the pipeline (skips finished work)")
    _add_common(p_run)
    p_run.add_argument("--stop-after", metavar="STAGE", help="stop after the named stage")

    p_resume = sub.add_parser("resume", help="resume a previous run (manifests must exist)")
    _add_common(p_resume)
    p_resume.add_argument("--stop-after", metavar="STAGE", help="stop after the named stage")

    p_stats = sub.add_parser("stats", help="rebuild and print run statistics")
    _add_common(p_stats)
    p_stats.add_argument("--json", action="store_true", help="print the raw JSON report")

    p_val = sub.add_parser("validate-config", help="check a config file and exit")
    _add_common(p_val)
    return parser


def _load_and_validate(args: argparse.Namespace) -> PipelineConfig:
    overrides = list(args.overrides)
    if args.workers is not None:
        overrides.append(f"workers={args.workers}")
    if args.batch_size is not None:
        overrides.append(f"batch_size={args.batch_size}")
    if args.output_dir is not None:
        overrides.append(f"output_dir={args.output_dir}")
    if getattr(args, "snapshot", None) is not None:
        overrides.append(f"snapshot={args.snapshot}")
    cfg = load_config(args.config, overrides=overrides)
    problems = validate_config(cfg)
    if problems:
        for problem in problems:
            print(f"config error: {problem}", file=sys.stderr)
        raise ConfigError(f"{len(problems)} problem(s) in {args.config}")
    return cfg


def _print_report(report: dict) -> None:
    print(f"{'stage':<16} {'in':>8} {'out':>8} {'removed':>8} {'docs%':>7} {'bytes%':>7}  top reasons")
    for row in report["stages"]:
        reasons = ", ".join(
            f"{name}={count}" for name, count in list(row["removal_reasons"].items())[:3]
        )
        print(
            f"{row['stage']:<16} {row['input_docs']:>8} {row['output_docs']:>8} "
            f"{row['removed_docs']:>8} {row['reduction_docs_pct']:>6.1f}% "
            f"{row['reduction_bytes_pct']:>6.1f}%  {reasons}"
        )
    totals = report["totals"]
    print(
        f"\ntotals: ingested={totals['ingested_docs']} final={totals['final_docs']} "
        f"words={totals['final_words']} bytes={totals['final_bytes']} "
        f"removed={totals['removed_docs']}"
    )
    print(f"accounting identity holds: {report['accounting_identity_holds']}")
    if report["failed_shards"]:
        print(f"FAILED shards: {', '.join(report['failed_shards'])}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _load_and_validate(args)
    except (ConfigError, RuleConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    if args.command == "validate-config":
        print(f"config ok: {args.config}")
        return EXIT_OK

    try:
        if args.command == "run":
            report = run_pipeline(cfg, stop_after=args.stop_after)
        elif args.command == "resume":
            report = resume_pipeline(cfg, stop_after=args.stop_after)
        elif args.command == "stats":
            report = rebuild_report(cfg)
            if args.json:
                print(json.dumps(report, indent=2, sort_keys=True))
            else:
                _print_report(report)
            return EXIT_OK
        else:  # pragma: no cover
            raise AssertionError(args.command)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    _print_report(report)
    return EXIT_STAGE_FAILURE if report["failed_shards"] else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
