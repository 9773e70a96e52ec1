"""Command-line entry point: ``bilex <stage> --config run.yaml`` or ``bilex run-all ...``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline


def _common(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="YAML pipeline configuration")
    parser.add_argument("--stage", choices=pipeline.STAGES, default=default,
                        help="run a single stage (alternative to the subcommand)")
    parser.add_argument("--seed", type=int, default=default, help="override the configured seed")
    parser.add_argument("--threads", type=int, default=default,
                        help="embedding training threads (1 = deterministic)")
    parser.add_argument("--reset", action="store_true", default=default if suppress else False,
                        help="discard the manifest so every stage is rebuilt")
    parser.add_argument("--no-overwrite", action="store_true",
                        default=default if suppress else False,
                        help="refuse to replace stale stage outputs")
    parser.add_argument("-v", "--verbose", action="count", default=default if suppress else 0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bilex",
        description="Learn an orthogonal bilingual embedding mapping and evaluate word translation.",
    )
    _common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for name in pipeline.STAGES:
        _common(sub.add_parser(name, help=f"run the '{name}' stage"), suppress=True)
    _common(sub.add_parser("run-all", help="run every stage in order, reusing cached ones"),
            suppress=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose + 1, 2),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if args.command is None and args.stage is None:
        parser.error("give a subcommand or --stage")
    if args.command not in (None, "run-all") and args.stage not in (None, args.command):
        parser.error(f"--stage {args.stage} conflicts with subcommand {args.command}")
    if args.config is None:
        parser.error("--config is required")
    stages = list(pipeline.STAGES) if args.command == "run-all" else [args.command or args.stage]

    try:
        config = pipeline.load_config(args.config, seed=args.seed, threads=args.threads)
        pipe = pipeline.run(config, stages, do_reset=args.reset, no_overwrite=args.no_overwrite)
    except (pipeline.PipelineError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    ran = ", ".join(pipe.executed) or "none (all cached)"
    print(f"stages run: {ran}")
    if "evaluate" in stages:
        print((config.output_dir / "report.txt").read_text(encoding="utf-8"), end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
