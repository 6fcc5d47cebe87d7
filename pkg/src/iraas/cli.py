"""Command-line entry point: ``iraas run | routes | telemetry``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Sequence

from .errors import EXIT_IO, EXIT_OK, EXIT_VALIDATION, IraasError, NoRoute, UnknownPair, UnknownSource
from .wire import decode_float, pretty_dumps

logger = logging.getLogger("iraas")

LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "warning": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


def _setup_logging() -> None:
    level = LOG_LEVELS.get(os.environ.get("IRAAS_LOG_LEVEL", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _load_report(path: str) -> dict[str, Any]:
    return json.loads(Path(path).read_text())


def _fmt(x: Any) -> str:
    if x is None:
        return "-"
    v = decode_float(x)
    return f"{v:.4f}" if v == v and abs(v) != float("inf") else str(x)


def cmd_run(args: argparse.Namespace) -> int:
    from .pipeline import run_scenario

    report = run_scenario(
        args.scenario, args.intent, seed=args.seed, distributed=args.distributed, workers=args.workers
    )
    text = pretty_dumps(report) + "\n"
    Path(args.report).write_text(text)
    if args.figures:
        from .figures import render_figures

        for p in render_figures(report, args.figures):
            logger.info("wrote %s", p)
    routed = sum(1 for p in report["pairs"] if p["routes"])
    print(
        f"{report['intent_id']}: {routed}/{len(report['pairs'])} pairs routed, "
        f"{len(report['convergence'])} convergence events, report -> {args.report}"
    )
    return EXIT_OK


def _resolve(names: list[str], ref: str) -> str:
    if ref in names:
        return ref
    matches = [n for n in names if n.partition(":")[2] == ref]
    return matches[0] if len(matches) == 1 else ref


def cmd_routes(args: argparse.Namespace) -> int:
    report = _load_report(args.report)
    names = sorted({p["src"] for p in report["pairs"]} | {p["dst"] for p in report["pairs"]})
    src, dst = _resolve(names, args.src), _resolve(names, args.dst)
    pair = next((p for p in report["pairs"] if p["src"] == src and p["dst"] == dst), None)
    if pair is None:
        raise UnknownPair(f"{args.src} -> {args.dst}")
    routes = pair["routes"][: args.k] if args.k else pair["routes"]
    if not routes:
        raise NoRoute(f"{src} -> {dst}")
    for r in routes:
        if args.format == "machine":
            print(json.dumps({"src": src, "dst": dst, **r}, sort_keys=True))
        else:
            print(f"{r['rank']:>2}  cost={_fmt(r['cost'])}  reliability={_fmt(r['reliability'])}  "
                  + " -> ".join(r["path"]))
    return EXIT_OK


def cmd_telemetry(args: argparse.Namespace) -> int:
    report = _load_report(args.report)
    sources = report["telemetry"]["sources"]
    src = sources.get(_resolve(sorted(sources), args.source))
    if src is None:
        raise UnknownSource(args.source)
    print(f"source {args.source}: {src['count']} samples, down={src['down']}")
    if not src["links"]:
        print("  (no links)  count=0")
    for lid, stats in sorted(src["links"].items()):
        print(f"  {lid}  count={stats['count']}  reliability={_fmt(stats['reliability'])}")
        for attr, st in sorted(stats["attributes"].items()):
            print(f"    {attr:<12} mean={st['mean']:.4f}  std={st['std']:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="iraas", description="Routing-as-a-Service for hybrid SDN")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario end to end and write a report")
    run.add_argument("--scenario", required=True)
    run.add_argument("--intent", required=True)
    run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run.add_argument("--distributed", action="store_true", help="use HTTP between components")
    run.add_argument("--report", default="report.json")
    run.add_argument("--figures", default=None, help="directory for PNG figures")
    run.add_argument("--workers", type=int, default=1, help="processes for forest construction")
    run.set_defaults(func=cmd_run)

    routes = sub.add_parser("routes", help="print ranked routes of one pair from a report")
    routes.add_argument("--report", required=True)
    routes.add_argument("--src", required=True)
    routes.add_argument("--dst", required=True)
    routes.add_argument("--k", type=int, default=None)
    routes.add_argument("--format", choices=("human", "machine"), default="human")
    routes.set_defaults(func=cmd_routes)

    tele = sub.add_parser("telemetry", help="summarize the KPI series of one source")
    tele.add_argument("--report", required=True)
    tele.add_argument("--source", required=True)
    tele.set_defaults(func=cmd_telemetry)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except IraasError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return exc.exit_code
    except json.JSONDecodeError as exc:
        print(f"error: parse: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
