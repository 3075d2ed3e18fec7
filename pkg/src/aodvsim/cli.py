"""Command-line front end.

Subcommands: run, compare, trace, list. Exit codes: 0 success, 1 for bad
arguments or scenario validation problems, 2 for failures at runtime.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from .engine import Engine
from .metrics import (
    CSV_COLUMNS,
    EmptyComparison,
    MetricsReport,
    compare,
    parse_run_csv,
    rows_to_csv,
)
from .scenario import (
    BUILTIN_NAMES,
    ParseError,
    Scenario,
    UnknownScenario,
    ValidationError,
    builtin,
    parse_scenario,
    with_rounds,
)
from .suppression import (
    ConfigError,
    Connectivity,
    ConnectivityConfig,
    CounterBased,
    DistanceBased,
    ExpandingRing,
    Flood,
    Probabilistic,
    strategy_label,
)


class CliError(Exception):
    """Bad input: unknown scenario, malformed strategy token, missing file."""


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage problems; the contract reserves 2 for
    # runtime failures, so route usage problems through exit code 1 instead
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="aodvsim",
                     description="AODV route discovery simulator with "
                                 "pluggable RREQ suppression strategies")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: _Parser, strategies: bool) -> None:
        p.add_argument("--scenario", help="builtin name or scenario JSON path")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--rounds", type=int, default=None,
                       help="override discovery round count of the first flow")
        if strategies:
            p.add_argument("--strategies",
                           help="comma-separated strategy tokens")
        else:
            p.add_argument("--strategy", default=None,
                           help="strategy token, e.g. flood, connectivity, "
                                "probabilistic:0.6, counter:3, distance:20, "
                                "ring:1:2:7")
        p.add_argument("--alpha", type=float, default=None,
                       help="smoothing weight for ema/blend connectivity modes")
        p.add_argument("--threshold", type=float, default=None,
                       help="connectivity index needed to keep using a link")
        p.add_argument("--warmup", type=int, default=None,
                       help="attempts before the connectivity filter engages")
        p.add_argument("--mode", choices=("raw", "ema", "blend"), default=None,
                       help="connectivity index estimator")

    p_run = sub.add_parser("run", help="run one scenario, write metrics CSV")
    common(p_run, strategies=False)
    p_run.add_argument("--out", help="metrics CSV path")
    p_run.add_argument("--trace", help="event trace TSV path")

    p_cmp = sub.add_parser("compare",
                           help="run several strategies on one scenario")
    common(p_cmp, strategies=True)
    p_cmp.add_argument("--inputs", nargs="+",
                       help="previously written metrics CSV files to compare "
                            "instead of running anything")
    p_cmp.add_argument("--out", help="comparison CSV path")
    p_cmp.add_argument("--svg", help="bar chart of RREQ transmissions")

    p_tr = sub.add_parser("trace", help="run one scenario, emit event trace")
    common(p_tr, strategies=False)
    p_tr.add_argument("--out", help="trace TSV path (default stdout)")

    sub.add_parser("list", help="print builtin scenario names")
    return parser


# --- strategy tokens ------------------------------------------------------

def parse_strategy(token: str, args: argparse.Namespace):
    name, _, rest = token.partition(":")
    try:
        if name == "flood":
            return Flood()
        if name == "connectivity":
            defaults = ConnectivityConfig()
            return Connectivity(ConnectivityConfig(
                mode=args.mode or defaults.mode,
                alpha=defaults.alpha if args.alpha is None else args.alpha,
                threshold=(defaults.threshold if args.threshold is None
                           else args.threshold),
                warmup_attempts=(defaults.warmup_attempts if args.warmup is None
                                 else args.warmup),
            ))
        if name == "probabilistic":
            return Probabilistic(p=float(rest))
        if name == "counter":
            return CounterBased(max_copies=int(rest))
        if name == "distance":
            return DistanceBased(min_distance=float(rest))
        if name == "ring":
            start, inc, thresh = rest.split(":")
            return ExpandingRing(ttl_start=int(start), ttl_increment=int(inc),
                                 ttl_threshold=int(thresh))
    except (ValueError, ConfigError) as exc:
        raise CliError(f"bad strategy token {token!r}: {exc}") from exc
    raise CliError(f"unknown strategy {token!r}")


def load_scenario(args: argparse.Namespace, strategy_token: str | None) -> Scenario:
    if not args.scenario:
        raise CliError("--scenario is required")
    try:
        sc = builtin(args.scenario, seed=args.seed, rounds=args.rounds)
    except UnknownScenario:
        path = args.scenario
        if not os.path.exists(path):
            raise CliError(f"scenario file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            sc = parse_scenario(fh.read())
        if args.seed is not None:
            sc = replace(sc, seed=args.seed)
        if args.rounds is not None:
            sc = with_rounds(sc, args.rounds)
    if strategy_token is not None:
        sc = replace(sc, strategy=parse_strategy(strategy_token, args))
        sc.validate()
    return sc


# --- output helpers -------------------------------------------------------

def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def summary_lines(sc: Scenario, report: MetricsReport) -> list[str]:
    ok, failed = report.discoveries_ok, report.discoveries_failed
    mean = report.mean_latency()
    lines = [
        f"scenario={sc.name} strategy={strategy_label(sc.strategy)} seed={sc.seed}",
        f"rreq_tx={report.rreq_tx} rrep_tx={report.rrep_tx} "
        f"rerr_tx={report.rerr_tx} hello_tx={report.hello_tx} "
        f"data_tx={report.data_tx}",
        f"discoveries ok={ok} failed={failed}"
        + (f" mean_latency={mean:.3f}" if mean is not None else ""),
        f"suppressed_forwards={report.suppressed_forwards} "
        f"redundant_rreq_rx={report.redundant_rreq_rx} "
        f"losses={report.losses}",
    ]
    if report.timed_out:
        lines.append("warning: run hit t_max with protocol activity pending")
    return lines


def render_svg(bars: list[tuple[str, int]]) -> str:
    """Self-contained 800x400 bar chart of RREQ transmissions per strategy."""
    width, height = 800, 400
    left, right, top, bottom = 60, 20, 40, 60
    plot_w, plot_h = width - left - right, height - top - bottom
    peak = max((v for _, v in bars), default=0) or 1
    slot = plot_w / max(len(bars), 1)
    bar_w = slot * 0.6
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:g}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16">'
        f'RREQ transmissions per strategy</text>',
        f'<line x1="{left}" y1="{top + plot_h}" x2="{left + plot_w}" '
        f'y2="{top + plot_h}" stroke="black"/>',
    ]
    for i, (label, value) in enumerate(bars):
        h = plot_h * value / peak
        x = left + i * slot + (slot - bar_w) / 2
        y = top + plot_h - h
        cx = x + bar_w / 2
        parts.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{bar_w:.1f}" '
                     f'height="{h:.1f}" fill="#4878a8"/>')
        parts.append(f'<text x="{cx:.1f}" y="{y - 6:.1f}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="12">{value}</text>')
        parts.append(f'<text x="{cx:.1f}" y="{top + plot_h + 18:.1f}" '
                     f'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="12">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# --- subcommands ----------------------------------------------------------

def cmd_run(args: argparse.Namespace) -> int:
    sc = load_scenario(args, args.strategy)
    trace_fh = None
    try:
        if args.trace:
            trace_fh = open(args.trace, "w", encoding="utf-8", newline="")
        report = Engine(sc, trace=trace_fh).run()
    finally:
        if trace_fh is not None:
            trace_fh.close()
    if args.out:
        row = report.csv_row(sc.name, strategy_label(sc.strategy), sc.seed)
        _write(args.out, rows_to_csv([row], CSV_COLUMNS))
    print("\n".join(summary_lines(sc, report)))
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    if args.inputs:
        if args.scenario or args.strategies:
            raise CliError("--inputs cannot be combined with --scenario/--strategies")
        labeled = []
        for path in args.inputs:
            if not os.path.exists(path):
                raise CliError(f"metrics file not found: {path}")
            with open(path, encoding="utf-8") as fh:
                labeled.extend(parse_run_csv(fh.read()))
    else:
        if not args.strategies:
            raise CliError("--strategies is required unless --inputs is given")
        tokens = [t.strip() for t in args.strategies.split(",") if t.strip()]
        if not tokens:
            raise CliError("--strategies is empty")
        labeled = []
        for token in tokens:
            sc = load_scenario(args, token)
            report = Engine(sc).run()
            labeled.append((strategy_label(sc.strategy), report))
    table = compare(labeled)
    if args.out:
        _write(args.out, table.to_csv())
    if args.svg:
        bars = [(row.strategy, row.rreq_tx) for row in table.rows]
        _write(args.svg, render_svg(bars))
    print(table.formatted())
    return 0


def cmd_trace(args: argparse.Namespace) -> int:
    sc = load_scenario(args, args.strategy)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            Engine(sc, trace=fh).run()
    else:
        Engine(sc, trace=sys.stdout).run()
    return 0


def cmd_list(_args: argparse.Namespace) -> int:
    for name in BUILTIN_NAMES:
        print(name)
    return 0


_COMMANDS = {
    "run": cmd_run,
    "compare": cmd_compare,
    "trace": cmd_trace,
    "list": cmd_list,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"aodvsim: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except (CliError, ConfigError, ParseError, ValidationError,
            UnknownScenario, EmptyComparison) as exc:
        print(f"aodvsim: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"aodvsim: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"aodvsim: internal error: {exc}", file=sys.stderr)
        return 2


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
