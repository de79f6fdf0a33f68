"""Command-line experiment runner.

Subcommands::

    copts run       --config FILE [--seed N --episodes N --workers N --out DIR]
    copts anytime   --config FILE --counts 10,100,1000 ...
    copts branching --config FILE --sizes 4,8,16,32 --strategy uncertainty ...
    copts report    SUMMARY.csv [SUMMARY.csv ...]

Any config key can be overridden with ``--set section.key=value``.  When
``--out`` is absent the COPTS_OUT environment variable (default
``results``) decides where artifacts land.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bench import (
    ExperimentConfig,
    anytime_sweep,
    branching_sweep,
    default_out_dir,
    load_config,
    report,
    run_campaign,
)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="experiment config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--episodes", type=int, default=None)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override any config key (repeatable)",
    )


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config, args.overrides)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.episodes is not None:
        cfg.episodes = args.episodes
    if args.workers is not None:
        cfg.workers = args.workers
    cfg.out = args.out if args.out is not None else (cfg.out or default_out_dir())
    return cfg


def _print_summary(s) -> None:
    cost = ", ".join(f"{m:.4f} +- {e:.4f}" for m, e in zip(s.mean_v_c, s.se_v_c))
    print(
        f"[{s.label}] episodes={s.episodes} "
        f"v_r={s.mean_v_r:.2f} +- {s.se_v_r:.2f} v_c=[{cost}] "
        f"violations={100 * s.violation_fraction:.0f}% "
        f"wall/decision={s.mean_wall_ms_per_decision:.1f}ms"
    )


def _parse_int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="copts", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one campaign")
    _add_common(p_run)

    p_any = sub.add_parser("anytime", help="sweep planner query counts")
    _add_common(p_any)
    p_any.add_argument("--counts", default="10,100,1000")

    p_br = sub.add_parser("branching", help="sweep option-catalog sizes")
    _add_common(p_br)
    p_br.add_argument("--sizes", default="4,8,16,32")
    p_br.add_argument("--strategy", choices=("uncertainty", "random"), default="uncertainty")

    p_rep = sub.add_parser("report", help="tabulate campaign summaries")
    p_rep.add_argument("summaries", nargs="+")
    p_rep.add_argument("--out", default=None)

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            summary = run_campaign(_load(args))
            _print_summary(summary)
        elif args.command == "anytime":
            for s in anytime_sweep(_load(args), _parse_int_list(args.counts)):
                _print_summary(s)
        elif args.command == "branching":
            cfg = _load(args)
            for s in branching_sweep(cfg, _parse_int_list(args.sizes), args.strategy):
                _print_summary(s)
        elif args.command == "report":
            text, rows = report(args.summaries)
            print(text)
            if args.out is not None:
                out = Path(args.out)
                out.mkdir(parents=True, exist_ok=True)
                lines = [",".join(str(v) for v in row) for row in rows]
                (out / "report.csv").write_text("\n".join(lines) + "\n")
    except Exception as exc:  # CLI contract: nonzero exit with a message
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
