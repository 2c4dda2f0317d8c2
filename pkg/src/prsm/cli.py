"""Command line interface.

Exit codes: 0 when a certificate was found (or verified), 2 when the
analysis fails to find one, 1 for usage, IO or encoding errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

from . import certify
from . import programs as corpus
from .analysis import (
    EXIT_ERROR,
    AnalysisConfig,
    AnalysisError,
    build,
    handwritten_certificate,
    load_program,
    run_analysis,
    verify_certificate,
)
from .certify import Certificate


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text}") from None


def _grid(text: str):
    if text.lower() in ("off", "none", "0"):
        return None
    return _fraction(text)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--json", action="store_true", help="print the report as JSON")
    p.add_argument("--tolerance", type=float, default=1e-6, help="SOS residual / PSD tolerance")
    p.add_argument("--grid-check", type=_grid, default=Fraction(1, 100), metavar="STEP",
                   help="grid step for the pointwise check ('off' disables it)")
    p.add_argument("--grid-points", type=int, default=50_000, help="cap on grid points (coarsens the step)")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="prsm", description="Polynomial ranking supermartingale synthesis")
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="synthesise a pRSM for a program")
    a.add_argument("program", help="program file or bundled example name")
    a.add_argument("--degree", "-d", type=int, default=2, help="template degree")
    a.add_argument("--bound", "-k", type=int, default=2, help="Positivstellensatz degree bound")
    a.add_argument("--method", choices=certify.METHODS, default=certify.HANDELMAN)
    a.add_argument("--objective", choices=certify.OBJECTIVES, default=certify.FEASIBILITY)
    a.add_argument("--diff-bounded", action="store_true", help="also synthesise difference bounds [a, b]")
    a.add_argument("--tail", type=_int_list, default=[], metavar="N[,N...]", help="report P(T>n) bounds")
    a.add_argument("--simulate", type=int, default=0, metavar="TRIALS", help="Monte Carlo cross-check")
    a.add_argument("--max-steps", type=int, default=10**6)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--emit-sdp", metavar="PATH", help="write the SDP problem in SDPA sparse format")
    a.add_argument("--ingest-sdp", metavar="PATH", help="read an SDP solution instead of solving")
    a.add_argument("--sdp-solver", default="CLARABEL", help="cvxpy solver for SOS methods ('none' to skip)")
    a.add_argument("--certificate", metavar="OUT.json", help="write the certificate")
    a.add_argument("--plot", metavar="DIR", help="write figures to DIR")
    _add_common(a)

    v = sub.add_parser("verify", help="re-check a certificate or a hand-written eta")
    v.add_argument("target", help="certificate JSON, or a program when --eta is given")
    v.add_argument("--eta", action="append", default=[], metavar="LABEL:POLY", help="hand-written eta per label")
    v.add_argument("--epsilon", type=_fraction, default=Fraction(1))
    v.add_argument("--K", type=_fraction, default=Fraction(-1))
    v.add_argument("--bound", "-k", type=int, default=None, help="Handelman bound when searching witnesses")
    _add_common(v)

    s = sub.add_parser("simulate", help="Monte Carlo run of a program")
    s.add_argument("program")
    s.add_argument("--trials", type=int, default=10_000)
    s.add_argument("--max-steps", type=int, default=10**6)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--scheduler", choices=("uniform", "scripted"), default="uniform")
    s.add_argument("--script", default="", metavar="LABEL:INDEX,...", help="choices for the scripted scheduler")
    s.add_argument("--tail", type=_int_list, default=[])
    s.add_argument("--json", action="store_true")

    c = sub.add_parser("cfg", help="print the control flow graph")
    c.add_argument("program")

    k = sub.add_parser("corpus", help="list bundled examples or print one")
    k.add_argument("name", nargs="?")
    return ap


def _cmd_analyze(args) -> int:
    config = AnalysisConfig(
        program=args.program, degree=args.degree, bound=args.bound, method=args.method,
        objective=args.objective, diff_bounded=args.diff_bounded, tail=args.tail, simulate=args.simulate,
        seed=args.seed, max_steps=args.max_steps, emit_sdp=args.emit_sdp, ingest_sdp=args.ingest_sdp,
        certificate=args.certificate, tolerance=args.tolerance, grid_step=args.grid_check,
        grid_points=args.grid_points, sdp_solver=args.sdp_solver, plot_dir=args.plot,
    )
    if config.diff_bounded and config.objective == certify.FEASIBILITY and args.tail:
        config.objective = certify.MIN_WIDTH
    report = run_analysis(config)
    if args.json:
        print(json.dumps(report.to_json(), indent=2))
    else:
        sys.stdout.write(report.text())
    return report.exit_code


def _cmd_verify(args) -> int:
    if args.eta:
        _, source = load_program(args.target)
        etas = {}
        for item in args.eta:
            label, sep, poly = item.partition(":")
            if not sep:
                raise AnalysisError(f"--eta expects LABEL:POLY, got {item!r}")
            etas[int(label)] = poly
        cert = handwritten_certificate(source, etas, args.epsilon, args.K, args.bound or 2)
    else:
        try:
            with open(args.target) as fh:
                cert = Certificate.loads(fh.read())
        except OSError as exc:
            raise AnalysisError(f"cannot read certificate: {exc}") from None
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            raise AnalysisError(f"malformed certificate: {exc}") from None
    report = verify_certificate(cert, args.tolerance, args.grid_check, args.grid_points, args.bound)
    if args.json:
        print(json.dumps(report.to_json(), indent=2))
    else:
        sys.stdout.write(report.text())
    return report.exit_code


def _cmd_simulate(args) -> int:
    from .semantics import ScriptedScheduler, UniformScheduler, initial_configuration, simulate

    name, source = load_program(args.program)
    g = build(source)
    if args.scheduler == "scripted":
        choices = {}
        for item in filter(None, args.script.split(",")):
            l, _, i = item.partition(":")
            choices[int(l)] = int(i)
        sched = ScriptedScheduler(choices)
    else:
        sched = UniformScheduler()
    st = simulate(g, initial_configuration(g), sched, args.max_steps, args.trials, args.tail, args.seed)
    if args.json:
        print(st.dumps())
    else:
        print(f"program: {name}")
        print(f"scheduler: {sched.name}")
        print(f"trials: {st.trials}")
        print(f"terminated: {st.terminated}")
        print(f"censored: {st.censored}")
        print(f"mean: {st.mean:.6g}")
        print(f"stderr: {st.stderr:.3g}")
        for n, p in sorted(st.tails.items()):
            print(f"P(T>{n}): {p:.6g}")
    return 0


def _cmd_cfg(args) -> int:
    _, source = load_program(args.program)
    g = build(source)
    print(g.dump())
    return 0


def _cmd_corpus(args) -> int:
    if args.name is None:
        for n in corpus.NAMES:
            print(n)
        return 0
    if args.name not in corpus.NAMES:
        raise AnalysisError(f"no bundled example named {args.name}")
    sys.stdout.write(corpus.source(args.name))
    return 0


COMMANDS = {
    "analyze": _cmd_analyze,
    "verify": _cmd_verify,
    "simulate": _cmd_simulate,
    "cfg": _cmd_cfg,
    "corpus": _cmd_corpus,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "--verify":
        argv[0] = "verify"
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code not in (0, None) else 0
    try:
        return COMMANDS[args.command](args)
    except AnalysisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
