"""Command line interface: ``qsf {analyze,fig2,surface,simulate,validate}``.

Exit codes: 0 success, 1 verification failure, 2 input error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import DegenerateMachineError, DimensionCapError, MachineSpecError
from .machine import EpsilonMachine, parse_machine, validate
from .report import (
    CONVERGENCE_COLUMNS,
    SURFACE_COLUMNS,
    analyze,
    convergence_rows,
    format_analysis,
    parse_grid,
    simulate_stream,
    surface_rows,
    to_csv,
)

EXIT_OK, EXIT_VERIFY, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _load(path: str) -> EpsilonMachine:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    return parse_machine(text)


def _default_seed() -> int:
    raw = os.environ.get("QSF_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise InputError(f"QSF_SEED must be an integer, got {raw!r}") from None


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, default=float) + "\n"


def cmd_analyze(args) -> int:
    m = _load(args.spec)
    result = analyze(m, markov_cap=args.markov_cap)
    if args.format == "json":
        _emit(_json(result), args.out)
    elif args.format == "csv":
        flat = [{"key": k, "value": v} for k, v in result.items() if not isinstance(v, (dict, list))]
        flat += [{"key": f"residual_{k}", "value": v} for k, v in result["residuals"].items()]
        _emit(to_csv(flat, ["key", "value"]), args.out)
    else:
        _emit(format_analysis(result), args.out)
    return EXIT_OK if result["passed"] else EXIT_VERIFY


def cmd_fig2(args) -> int:
    rows = convergence_rows(args.p, args.q, args.lmax)
    if args.format == "json":
        _emit(_json(rows), args.out)
    else:
        _emit(to_csv(rows, CONVERGENCE_COLUMNS), args.out)
    return EXIT_OK


def cmd_surface(args) -> int:
    rows = surface_rows(parse_grid(args.grid, exclusion=args.exclude))
    if args.format == "json":
        _emit(_json(rows), args.out)
    else:
        _emit(to_csv(rows, SURFACE_COLUMNS), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    m = _load(args.spec)
    seed = args.seed if args.seed is not None else _default_seed()
    start = args.start
    if start != "stationary" and start not in m.states:
        raise InputError(f"unknown start state {start!r}")
    result = simulate_stream(m, args.length, seed, start=start)
    if args.format == "json":
        _emit(_json(result), args.out)
        return EXIT_OK
    lines = [result["stream"]]
    lines.append("frequencies: " + ", ".join(f"{a}={f:.6f}" for a, f in result["frequencies"].items()))
    if result["tv_length3"] is not None:
        lines.append(f"tv_length3: {result['tv_length3']:.6f}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_validate(args) -> int:
    m = _load(args.spec)
    report = validate(m, probe_depth=args.depth)
    if report.ok:
        print(f"{m.name or args.spec}: valid ({m.n_states} states, {m.n_symbols} symbols)")
        return EXIT_OK
    for problem in report.problems():
        print(f"{args.spec}: {problem}", file=sys.stderr)
    return EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsf", description="Unitary quantum simulators for epsilon-machines.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="complexities and verification residuals for a machine")
    p.add_argument("--spec", required=True, metavar="PATH")
    p.add_argument("--format", choices=["text", "csv", "json"], default="text")
    p.add_argument("--markov-cap", type=int, default=12)
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("fig2", help="tilde C_q(L) table for the upset gambler")
    p.add_argument("--p", type=float, default=0.7)
    p.add_argument("--q", type=float, default=0.8)
    p.add_argument("--lmax", type=int, default=20)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=cmd_fig2)

    p = sub.add_parser("surface", help="C_mu and C_q over a (p, q) grid")
    p.add_argument("--grid", default="0.01:0.99:99,0.01:0.99:99", help="pmin:pmax:n,qmin:qmax:n")
    p.add_argument("--exclude", type=float, default=1e-3, help="skip cells with |p - q| below this")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=cmd_surface)

    p = sub.add_parser("simulate", help="seeded q-simulator run")
    p.add_argument("--spec", required=True, metavar="PATH")
    p.add_argument("--length", type=int, default=100)
    p.add_argument("--seed", type=int, default=None, help="defaults to $QSF_SEED, else 0")
    p.add_argument("--start", default="stationary", help="state label or 'stationary'")
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="check a machine document")
    p.add_argument("--spec", required=True, metavar="PATH")
    p.add_argument("--depth", type=int, default=None, help="minimality probe depth (default 2 * states)")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "length", 0) is not None and getattr(args, "length", 0) < 0:
        print("qsf: error: --length must be non-negative", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except (InputError, MachineSpecError, DegenerateMachineError, DimensionCapError, ValueError) as exc:
        print(f"qsf: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
