"""Command line interface: ``nbsl run | preset | analyze | figures``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..learning import NumericalError
from ..network import RadiusTooSmallError
from .config import PRESETS, ConfigError, load_config, preset_config
from .experiment import ExperimentError, fig5_from_beliefs, run_experiment

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _nonnegative(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    presets = "\n".join(f"  {name:<14} {desc}" for name, desc in PRESETS.items())
    parser = _Parser(
        prog="nbsl",
        description="Social learning with uncertain models: Monte Carlo experiments.",
        epilog=f"presets:\n{presets}",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("run", help="run the experiment described by a YAML config")
    p.add_argument("config", type=Path)
    p.add_argument("--out", type=Path, help="output directory (default: the config's 'output')")
    p.add_argument("--workers", type=_positive, help="worker processes (default: all CPUs)")

    p = sub.add_parser(
        "preset",
        help="run a built-in experiment",
        epilog=f"presets:\n{presets}",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("name", choices=list(PRESETS), metavar="NAME")
    p.add_argument("--out", type=Path, help="output directory (default: results/NAME)")
    p.add_argument("--seed", type=_nonnegative)
    p.add_argument("--horizon", type=_positive, help="rounds per run")
    p.add_argument("--runs", type=_positive, help="Monte Carlo runs")
    p.add_argument("--agents", type=_positive, help="number of agents")
    p.add_argument("--workers", type=_positive, help="worker processes (default: all CPUs)")

    p = sub.add_parser("analyze", help="print error statistics and rates from summary.json")
    p.add_argument("directory", type=Path)

    p = sub.add_parser("figures", help="write fig5_beliefs.csv from beliefs.csv")
    p.add_argument("directory", type=Path)
    return parser


def _fmt(v):
    if v is None:
        return "-"
    if isinstance(v, str):
        return v
    return f"{v:.4g}"


def format_summary(summary: dict) -> str:
    lines = []
    if summary.get("kind") in ("figure1", "figure2"):
        lines.append(f"{summary['kind']}")
        for k, v in sorted(summary.get("preferred_intervals", {}).items(), key=lambda kv: int(kv[0])):
            lines.append(f"  R1={k}: alternative preferred for R2 in {v}")
        for k, v in sorted(summary["checks"].items()):
            lines.append(f"  {k}: {'pass' if v else 'FAIL'}")
        return "\n".join(lines)
    lines.append(
        f"{summary['name']}: m={summary['agents']} T={summary['horizon']} N={summary['runs']} seed={summary['seed']}"
    )
    for regime, block in summary["regimes"].items():
        for rule, data in block["rules"].items():
            stats = data["error_stats"]
            lines.append(f"\n[{regime} / {rule}]")
            S = len(stats["e_cen"][0])
            head = "  t        " + "".join(f"{'e_cen' + str(s):>11}{'e_con' + str(s):>11}" for s in range(S))
            lines.append(head)
            for c, t in enumerate(stats["checkpoints"]):
                cells = "".join(f"{_fmt(stats['e_cen'][c][s]):>11}{_fmt(stats['e_con'][c][s]):>11}" for s in range(S))
                lines.append(f"  {t:<9}{cells}")
            slopes = ", ".join(_fmt(r["median_slope"]) for r in data["rates"])
            lines.append(f"  median slopes: {slopes}")
        for k, v in sorted(block["checks"].items()):
            lines.append(f"  {k}: {v}")
    if summary["failed_runs"]:
        lines.append(f"\nfailed runs: {len(summary['failed_runs'])}")
        for f in summary["failed_runs"]:
            lines.append(f"  {f['regime']} run {f['run']} {f['rule']}: {f['error']}")
    return "\n".join(lines)


def _report(summary: dict) -> int:
    if summary.get("failed_runs"):
        print(f"{len(summary['failed_runs'])} run(s) failed; see summary.json", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            summary = run_experiment(cfg, out=args.out, workers=args.workers)
            print(f"wrote {args.out or cfg.output}")
            return _report(summary)
        if args.command == "preset":
            cfg = preset_config(
                args.name,
                seed=args.seed,
                horizon=args.horizon,
                runs=args.runs,
                agents=args.agents,
                output=str(args.out) if args.out else None,
            )
            summary = run_experiment(cfg, workers=args.workers)
            print(f"wrote {cfg.output}")
            return _report(summary)
        if args.command == "analyze":
            path = args.directory / "summary.json"
            if not path.exists():
                print(f"nbsl: {path} not found", file=sys.stderr)
                return EXIT_USAGE
            print(format_summary(json.loads(path.read_text())))
            return EXIT_OK
        if args.command == "figures":
            directory = args.directory
            if (directory / "beliefs.csv").exists():
                print(f"wrote {fig5_from_beliefs(directory)}")
                return EXIT_OK
            existing = sorted(directory.glob("fig*_curves.csv"))
            if existing:
                for p in existing:
                    print(p)
                return EXIT_OK
            print(f"nbsl: no beliefs.csv or figure curves in {directory}", file=sys.stderr)
            return EXIT_USAGE
    except (ConfigError, RadiusTooSmallError) as exc:
        print(f"nbsl: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"nbsl: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ExperimentError, NumericalError, OSError) as exc:
        print(f"nbsl: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
