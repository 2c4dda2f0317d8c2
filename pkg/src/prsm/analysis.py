"""End-to-end analysis: parse, build the CFG, synthesise, check, report.

The result is ``yes`` only after every witness has been re-checked
independently of the solver; otherwise ``fail`` (the method is sound but
not complete, so it never answers ``no``).
"""

from __future__ import annotations

import io
import json
import os
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from . import certify, lang
from . import programs as corpus
from .cfg import ControlFlowGraph, build_cfg, validate
from .certify import (
    HANDELMAN,
    MIN_UB,
    Certificate,
    EncodingError,
    GridReport,
)
from .extract import DIFF_LOWER, DIFF_UPPER, extract_diff_bounded, extract_instances
from .poly import AffineExpr, Polynomial, SymbolicPolynomial, _fmt_coeff, to_fraction
from .preexp import concrete_template, make_template
from .semantics import GreedyEtaScheduler, RunStats, UniformScheduler, initial_configuration, simulate
from .solver import sdp_emit, sdp_ingest, simplex_solve
from .solver.lp import LPProblem

YES = "yes"
FAIL = "fail"

EXIT_YES = 0
EXIT_ERROR = 1
EXIT_FAIL = 2


class AnalysisError(Exception):
    """Usage, IO or encoding problem (exit code 1)."""


def load_program(spec: str) -> tuple[str, str]:
    """``(name, source)`` for a file path or a bundled corpus name."""
    if os.path.exists(spec):
        with open(spec) as fh:
            return os.path.splitext(os.path.basename(spec))[0], fh.read()
    if spec in corpus.NAMES:
        return spec, corpus.source(spec)
    raise AnalysisError(f"no such program file or bundled example: {spec}")


def build(source: str) -> ControlFlowGraph:
    try:
        prog = lang.parse(source)
    except lang.ParseError as exc:
        raise AnalysisError(f"parse error: {exc}") from None
    g = build_cfg(prog)
    problems = validate(g)
    if problems:
        raise AnalysisError("invalid control flow graph: " + "; ".join(problems))
    return g


def eval_at(p: SymbolicPolynomial, point: Mapping[str, Fraction]) -> AffineExpr:
    """Evaluate the program variables of ``p``; what remains is affine in the unknowns."""
    acc = AffineExpr()
    for m, c in p.terms.items():
        v = Fraction(1)
        for name, e in m.items:
            v *= to_fraction(point[name]) ** e
        acc = acc + c * v
    return acc


@dataclass
class AnalysisConfig:
    program: str
    degree: int = 2
    bound: int = 2
    method: str = HANDELMAN
    objective: str = certify.FEASIBILITY
    diff_bounded: bool = False
    tail: Sequence[int] = ()
    simulate: int = 0
    seed: int = 0
    max_steps: int = 10**6
    emit_sdp: str | None = None
    ingest_sdp: str | None = None
    certificate: str | None = None
    tolerance: float = 1e-6
    grid_step: Fraction | None = Fraction(1, 100)
    grid_points: int = 50_000
    sdp_solver: str = "CLARABEL"
    plot_dir: str | None = None
    epsilon: Fraction = Fraction(1)
    K: Fraction = Fraction(-1)


@dataclass
class AnalysisReport:
    program: str
    status: str
    method: str
    degree: int
    bound: int
    reason: str = ""
    eta: dict[int, Polynomial] = field(default_factory=dict)
    variables: tuple[str, ...] = ()
    epsilon: Fraction = Fraction(1)
    K: Fraction = Fraction(-1)
    ub: Fraction | None = None
    initial: dict[str, Fraction] = field(default_factory=dict)
    initial_label: int = 1
    instances: int = 0
    unknowns: int = 0
    max_residual: float | None = None
    grid: GridReport | None = None
    diff: tuple[Fraction, Fraction] | None = None
    minimal_M: int | None = None
    tail_bounds: dict[int, object] = field(default_factory=dict)
    runs: dict[str, RunStats] = field(default_factory=dict)
    certificate: Certificate | None = None
    timings: dict[str, float] = field(default_factory=dict)
    figures: list[str] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return EXIT_YES if self.status == YES else EXIT_FAIL

    def lines(self) -> list[str]:
        order = list(self.variables)
        out = [
            f"program: {self.program}",
            f"method: {self.method}",
            f"degree: {self.degree}",
            f"bound: {self.bound}",
            f"instances: {self.instances}",
            f"result: {self.status}",
        ]
        if self.reason:
            out.append(f"reason: {self.reason}")
        if self.status == YES:
            out.append(f"epsilon: {_fmt_coeff(self.epsilon)}")
            out.append(f"K: {_fmt_coeff(self.K)}")
            init = ", ".join(f"{v}={_fmt_coeff(c)}" for v, c in self.initial.items())
            out.append(f"initial: {init}")
            out.append(f"ub: {_fmt_coeff(self.ub)} (~{float(self.ub):.6g})")
            for l, p in sorted(self.eta.items()):
                out.append(f"eta[{l}]: {p.format(order)}")
            if self.max_residual is not None:
                out.append(f"max residual: {self.max_residual:.3g}")
        if self.grid is not None:
            out.append(f"grid: {self.grid.summary()}")
            for v in self.grid.violations[:5]:
                out.append(f"grid violation: {v}")
        if self.diff is not None:
            out.append(f"diff bounds: [{_fmt_coeff(self.diff[0])}, {_fmt_coeff(self.diff[1])}]")
            out.append(f"concentration threshold M: {self.minimal_M}")
            for n, b in sorted(self.tail_bounds.items()):
                out.append(f"tail bound P(T>{n}): {'n/a' if b is None else format(float(b), '.6g')}")
        for name, st in self.runs.items():
            out.append(
                f"simulation[{name}]: trials={st.trials} mean={st.mean:.6g} se={st.stderr:.3g} "
                f"censored={st.censored}"
                + ("" if self.ub is None else f" mean<=ub={'yes' if st.mean <= float(self.ub) else 'no'}")
            )
            for n, p in sorted(st.tails.items()):
                out.append(f"simulation[{name}] P(T>{n}): {p:.6g}")
        for f in self.figures:
            out.append(f"figure: {f}")
        return out

    def text(self) -> str:
        return "\n".join(self.lines()) + "\n"

    def to_json(self) -> dict:
        order = list(self.variables)
        d = {
            "program": self.program,
            "result": self.status,
            "reason": self.reason or None,
            "method": self.method,
            "degree": self.degree,
            "bound": self.bound,
            "instances": self.instances,
            "epsilon": str(self.epsilon),
            "K": str(self.K),
            "initial": {v: str(c) for v, c in self.initial.items()},
            "ub": None if self.ub is None else str(self.ub),
            "ub_float": None if self.ub is None else float(self.ub),
            "eta": {str(l): p.format(order) for l, p in sorted(self.eta.items())},
            "max_residual": self.max_residual,
            "timings": self.timings,
            "figures": self.figures,
        }
        if self.grid is not None:
            d["grid"] = {
                "ok": self.grid.ok,
                "points": self.grid.points,
                "checks": self.grid.checks,
                "worst_margin": self.grid.worst_margin,
                "violations": [str(v) for v in self.grid.violations],
            }
        if self.diff is not None:
            d["diff"] = [str(self.diff[0]), str(self.diff[1])]
            d["minimal_M"] = self.minimal_M
            d["tail_bounds"] = {str(n): None if b is None else float(b) for n, b in self.tail_bounds.items()}
        if self.runs:
            d["simulation"] = {k: v.to_json() for k, v in self.runs.items()}
        return d


def run_analysis(config: AnalysisConfig) -> AnalysisReport:
    """Run the whole pipeline.  Raises :class:`AnalysisError` for usage/IO errors."""
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    name, source = load_program(config.program)
    g = build(source)
    if config.method not in certify.METHODS:
        raise AnalysisError(f"unknown method {config.method}")
    if config.degree < 0 or config.bound < 0:
        raise AnalysisError("degree and bound must be nonnegative")
    sos = config.method != HANDELMAN
    t = make_template(g, config.degree, config.epsilon, config.K)
    instances = extract_instances(g, t, c2_margin=1 if sos else 0)
    if config.diff_bounded:
        instances += extract_diff_bounded(g, t)
    x0 = dict(g.init_valuation)
    objective_expr = eval_at(t[g.initial], x0) if config.objective == MIN_UB else None
    report = AnalysisReport(name, FAIL, config.method, config.degree, config.bound,
                            variables=tuple(g.variables), epsilon=t.epsilon, K=t.K, initial=x0,
                            initial_label=g.initial, instances=len(instances))
    try:
        ap = certify.assemble(instances, config.method, config.bound, config.objective, objective_expr, g.variables)
    except EncodingError as exc:
        raise AnalysisError(str(exc)) from None
    timings["encode"] = time.perf_counter() - t0
    report.unknowns = len(ap.template_unknowns)

    t1 = time.perf_counter()
    if not sos:
        res = simplex_solve(ap.problem)
        timings["solve"] = time.perf_counter() - t1
        if not res.feasible:
            report.reason = f"LP {res.status}"
            report.timings = timings
            return report
        values = res.values
        witnesses = certify.handelman_witnesses(ap, values)
        ok = all(certify.check_handelman_witness(i, w, values) for i, w in zip(instances, witnesses))
        report.max_residual = 0.0 if ok else None
        if not ok:
            report.reason = "witness check failed"
            return report
        exact_values = {u: to_fraction(values[u]) for u in ap.template_unknowns}
    else:
        assignment = _solve_sdp(ap, config)
        timings["solve"] = time.perf_counter() - t1
        if assignment is None:
            report.reason = "SDP problem written; no solution to check" if config.emit_sdp else "no SDP solver available"
            report.timings = timings
            return report
        if isinstance(assignment, str):
            report.reason = assignment
            report.timings = timings
            return report
        # round the template unknowns to short decimals; the identity check
        # below is then run against the rounded (certified) polynomial
        exact_values = {u: Fraction(repr(float(v))) for u, v in assignment.scalars.items()}
        witnesses = certify.sos_witnesses(ap, assignment.values)
        witnesses = [certify.polish_sos_witness(i, w, exact_values) for i, w in zip(instances, witnesses)]
        checks = [certify.check_sos_witness(i, w, config.tolerance, exact_values) for i, w in zip(instances, witnesses)]
        report.max_residual = max((r for _, r in checks), default=0.0)
        if not all(ok for ok, _ in checks):
            report.reason = f"SOS witness check failed (max residual {report.max_residual:.3g})"
            report.timings = timings
            return report

    eta = {l: p for l, p in t.instantiate(exact_values).items() if l != g.terminal}
    report.eta = eta
    report.ub = certify.ub(eta, g.initial, x0, t.epsilon, t.K)

    diff = None
    if config.diff_bounded:
        diff = (exact_values[DIFF_LOWER], exact_values[DIFF_UPPER])
        report.diff = diff
        eta0 = eta[g.initial].evaluate(x0)
        report.minimal_M = certify.minimal_M(eta0, t.epsilon)
        for n in config.tail:
            report.tail_bounds[int(n)] = certify.concentration_bound(eta0, t.epsilon, diff[0], diff[1], int(n))

    if config.grid_step is not None:
        t2 = time.perf_counter()
        report.grid = certify.verify_grid(g, eta, t.epsilon, t.K, config.grid_step,
                                          max_points=config.grid_points, diff=diff)
        timings["grid"] = time.perf_counter() - t2
        if not report.grid.ok:
            report.reason = "grid check found violations"
            report.timings = timings
            return report

    report.status = YES
    report.certificate = Certificate(
        source=source, variables=tuple(g.variables), method=config.method, k=config.bound, d=config.degree,
        epsilon=t.epsilon, K=t.K, eta=eta, ub=report.ub,
        witnesses={i.tag: w for i, w in zip(instances, witnesses)}, diff=diff,
        concentration=None if diff is None else {
            "minimal_M": report.minimal_M,
            "tail": {str(n): None if b is None else float(b) for n, b in report.tail_bounds.items()},
        },
    )
    if config.certificate:
        try:
            with open(config.certificate, "w") as fh:
                fh.write(report.certificate.dumps())
        except OSError as exc:
            raise AnalysisError(f"cannot write certificate: {exc}") from None

    if config.simulate:
        t3 = time.perf_counter()
        init = initial_configuration(g)
        tails = sorted(set(int(n) for n in config.tail))
        for sched in (UniformScheduler(), GreedyEtaScheduler(eta, g.variables)):
            report.runs[sched.name] = simulate(g, init, sched, config.max_steps, config.simulate, tails, config.seed)
        timings["simulate"] = time.perf_counter() - t3

    if config.plot_dir:
        from . import plotting

        report.figures = plotting.analysis_figures(report, g, config.plot_dir)
    report.timings = timings
    return report


def _solve_sdp(ap, config: AnalysisConfig):
    """Emit / ingest / solve as configured.  Returns an assignment, ``None``
    when nothing could be solved, or a failure reason string."""
    from .solver import external
    from .solver.sdp import SDPFormatError

    text = sdp_emit(ap.problem)
    if config.emit_sdp:
        try:
            with open(config.emit_sdp, "w") as fh:
                fh.write(text)
        except OSError as exc:
            raise AnalysisError(f"cannot write SDP problem: {exc}") from None
    if config.ingest_sdp:
        try:
            return sdp_ingest(config.ingest_sdp, ap.problem)
        except OSError as exc:
            raise AnalysisError(f"cannot read SDP solution: {exc}") from None
        except SDPFormatError as exc:
            raise AnalysisError(f"bad SDP solution: {exc}") from None
    if config.emit_sdp or not config.sdp_solver or config.sdp_solver.lower() == "none":
        return None
    if not external.available(config.sdp_solver):
        return None
    try:
        sol = external.solve_sdpa(io.StringIO(text), config.sdp_solver)
    except RuntimeError as exc:
        return f"SDP solver: {exc}"
    data_sizes = [b.size for b in ap.problem.blocks] + ([-2 * len(ap.problem.free)] if ap.problem.free else [])
    return sdp_ingest(io.StringIO(sol.text(data_sizes)), ap.problem)


# ---------------------------------------------------------------------------
# verification of stored or hand-written certificates
# ---------------------------------------------------------------------------


@dataclass
class InstanceCheck:
    tag: str
    ok: bool
    residual: float | None
    how: str


@dataclass
class VerifyReport:
    ok: bool
    ub: Fraction | None
    checks: list[InstanceCheck]
    grid: GridReport | None
    reason: str = ""

    @property
    def exit_code(self) -> int:
        return EXIT_YES if self.ok else EXIT_FAIL

    @property
    def max_residual(self) -> float:
        vals = [c.residual for c in self.checks if c.residual is not None]
        return max(vals, default=0.0)

    def text(self) -> str:
        out = [f"result: {'yes' if self.ok else 'fail'}"]
        if self.reason:
            out.append(f"reason: {self.reason}")
        if self.ub is not None:
            out.append(f"ub: {_fmt_coeff(self.ub)} (~{float(self.ub):.6g})")
        n_ok = sum(c.ok for c in self.checks)
        out.append(f"instances: {n_ok}/{len(self.checks)} verified")
        out.append(f"max residual: {self.max_residual:.3g}")
        for c in self.checks:
            if not c.ok:
                out.append(f"unverified: {c.tag} ({c.how})")
        if self.grid is not None:
            out.append(f"grid: {self.grid.summary()}")
            for v in self.grid.violations[:5]:
                out.append(f"grid violation: {v}")
        return "\n".join(out) + "\n"

    def to_json(self) -> dict:
        return {
            "result": "yes" if self.ok else "fail",
            "reason": self.reason or None,
            "ub": None if self.ub is None else str(self.ub),
            "max_residual": self.max_residual,
            "instances": [c.__dict__ for c in self.checks],
            "grid": None if self.grid is None else {
                "ok": self.grid.ok, "worst_margin": self.grid.worst_margin,
                "violations": [str(v) for v in self.grid.violations],
            },
        }


def _find_handelman(inst, k: int):
    """Search for a Handelman witness of a concrete instance by exact LP."""
    enc = certify.handelman_encode(inst, k)
    lp = LPProblem()
    for n in enc.unknowns:
        lp.add_variable(n)
    for eq in enc.equalities:
        lp.add_affine_zero(eq)
    res = simplex_solve(lp)
    if not res.feasible:
        return None
    return certify.HandelmanWitness([p for _, p in enc.products], [res.values[n] for n in enc.unknowns],
                                    [idx for idx, _ in enc.products])


def verify_certificate(cert: Certificate, tolerance: float = 1e-6, grid_step=Fraction(1, 100),
                       grid_points: int = 50_000, search_bound: int | None = None) -> VerifyReport:
    """Re-check a certificate from its own contents.

    Stored witnesses are rebuilt against freshly extracted instances.  For
    instances without a stored witness (hand-written certificates), a
    Handelman witness of degree ``search_bound`` (default: the certificate's
    ``k``) is searched for with the exact LP.
    """
    g = build(cert.source)
    missing = set(g.nonterminal) - set(cert.eta)
    if missing:
        return VerifyReport(False, None, [], None, f"eta missing for labels {sorted(missing)}")
    sos = cert.method in (certify.PUTINAR, certify.SCHMUEDGEN)
    t = concrete_template(g, cert.eta, cert.epsilon, cert.K)
    instances = extract_instances(g, t, c2_margin=1 if sos else 0)
    if cert.diff is not None:
        dt = {DIFF_LOWER: cert.diff[0], DIFF_UPPER: cert.diff[1]}
        instances += [
            type(i)(i.gamma, i.target.partial_instantiate(dt), i.kind, i.label, i.branch, i.clause)
            for i in extract_diff_bounded(g, t)
        ]
    k = cert.k if search_bound is None else search_bound
    checks = []
    for inst in instances:
        payload = cert.witnesses.get(inst.tag)
        if payload is not None and not isinstance(payload, dict):
            payload = payload.to_json()
        if payload is None:
            try:
                w = _find_handelman(inst, k)
            except EncodingError as exc:
                checks.append(InstanceCheck(inst.tag, False, None, str(exc)))
                continue
            if w is None:
                checks.append(InstanceCheck(inst.tag, False, None, f"no Handelman witness with k={k}"))
                continue
            ok = certify.check_handelman_witness(inst, w)
            checks.append(InstanceCheck(inst.tag, ok, 0.0 if ok else None, "handelman (searched)"))
            continue
        try:
            w = certify.witness_from_json(inst, payload, g.variables)
        except (KeyError, ValueError, IndexError) as exc:
            checks.append(InstanceCheck(inst.tag, False, None, f"bad witness: {exc}"))
            continue
        if isinstance(w, certify.HandelmanWitness):
            ok = certify.check_handelman_witness(inst, w)
            residual = 0.0 if ok else _handelman_residual(inst, w)
            checks.append(InstanceCheck(inst.tag, ok, residual, "handelman"))
        else:
            ok, residual = certify.check_sos_witness(inst, w, tolerance)
            checks.append(InstanceCheck(inst.tag, ok, residual, cert.method))
    grid = None
    if grid_step is not None:
        grid = certify.verify_grid(g, cert.eta, cert.epsilon, cert.K, grid_step, max_points=grid_points, diff=cert.diff)
    ub_val = None
    if cert.epsilon > 0:
        ub_val = certify.ub(cert.eta, g.initial, g.init_valuation, cert.epsilon, cert.K)
    ok = all(c.ok for c in checks) and (grid is None or grid.ok)
    reason = "" if ok else ("unverified instances" if not all(c.ok for c in checks) else "grid violations")
    if cert.ub is not None and ub_val is not None and cert.ub != ub_val:
        ok = False
        reason = f"stored ub {cert.ub} differs from recomputed {ub_val}"
    return VerifyReport(ok, ub_val, checks, grid, reason)


def _handelman_residual(inst, w) -> float:
    total = Polynomial()
    for a, u in zip(w.coefficients, w.products):
        total = total + u.scale(a)
    diff = inst.target.to_polynomial() - total
    return max((abs(float(c)) for c in diff.terms.values()), default=0.0)


def handwritten_certificate(source: str, eta_texts: Mapping[int, str], epsilon, K, k: int = 2) -> Certificate:
    """Build a witness-less certificate from hand-written ``eta`` strings."""
    g = build(source)
    eta = {}
    for label, text in eta_texts.items():
        try:
            eta[int(label)] = lang.parse_polynomial(text, g.variables)
        except lang.ParseError as exc:
            raise AnalysisError(f"eta[{label}]: {exc}") from None
    epsilon, K = to_fraction(epsilon), to_fraction(K)
    return Certificate(source, tuple(g.variables), HANDELMAN, k, max((p.degree for p in eta.values()), default=0),
                       epsilon, K, eta)
