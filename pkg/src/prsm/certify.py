"""Positivstellensatz encodings, witness checking, and bounds.

Every pattern instance ``(Gamma, g)`` is turned into linear constraints on
the template unknowns plus fresh certificate unknowns:

* Handelman: ``g = sum a_i u_i`` over products ``u_i`` of at most ``k``
  (linear) elements of Gamma, with ``a_i >= 0``.  This is an LP and is solved
  exactly.
* Putinar / Schmuedgen: ``g = sum_w h_w g_w`` where each ``h_w = y^T Q_w y``
  is a sum of squares over the monomial basis ``y`` of degree ``<= k // 2``.
  This is an SDP and its solutions are floating point, so checks use a
  tolerance.

A solver answer is never trusted: witnesses are rebuilt from the solution
and checked independently before a certificate is issued.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import mpmath
import numpy as np

from . import cfg as cfgmod
from . import lang
from .cfg import ControlFlowGraph
from .extract import DIFF_LOWER, DIFF_UPPER, PatternInstance
from .poly import (
    ONE,
    AffineExpr,
    Monomial,
    Polynomial,
    SymbolicPolynomial,
    _fmt_coeff,
    monomials_up_to_degree,
    to_fraction,
)
from .preexp import concrete_template, pre_expectation
from .solver.lp import FREE, NONNEG, LPProblem
from .solver.sdp import SDPProblem

HANDELMAN = "handelman"
PUTINAR = "putinar"
SCHMUEDGEN = "schmuedgen"
METHODS = (HANDELMAN, PUTINAR, SCHMUEDGEN)

FEASIBILITY = "feasibility"
MIN_UB = "min-ub"
MIN_WIDTH = "min-width"
OBJECTIVES = (FEASIBILITY, MIN_UB, MIN_WIDTH)

SUBSET_CAP = 12


class EncodingError(ValueError):
    """An instance cannot be encoded with the requested method."""


# ---------------------------------------------------------------------------
# products of constraint polynomials
# ---------------------------------------------------------------------------


def monoid_products(gamma: Sequence[Polynomial], k: int) -> list[tuple[tuple[int, ...], Polynomial]]:
    """Products of at most ``k`` members of ``gamma`` (with repetition), with
    the index multiset that produced each one.  Duplicated polynomials are
    kept once (first occurrence wins)."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    out: list[tuple[tuple[int, ...], Polynomial]] = []
    seen: set[Polynomial] = set()
    for size in range(k + 1):
        for idx in itertools.combinations_with_replacement(range(len(gamma)), size):
            p = Polynomial.const(1)
            for i in idx:
                p = p * gamma[i]
            if p not in seen:
                seen.add(p)
                out.append((idx, p))
    return out


def monoid_elements(gamma: Sequence[Polynomial], k: int) -> list[Polynomial]:
    """All distinct products of at most ``k`` elements of ``gamma``, including 1."""
    return [p for _, p in monoid_products(gamma, k)]


def subset_index_products(gamma: Sequence[Polynomial], cap: int = SUBSET_CAP) -> list[tuple[tuple[int, ...], Polynomial]]:
    if len(gamma) > cap:
        raise EncodingError(f"{len(gamma)} constraints exceed the subset-product cap of {cap}")
    out = []
    for size in range(len(gamma) + 1):
        for idx in itertools.combinations(range(len(gamma)), size):
            p = Polynomial.const(1)
            for i in idx:
                p = p * gamma[i]
            out.append((idx, p))
    return out


def subset_products(gamma: Sequence[Polynomial], cap: int = SUBSET_CAP) -> list[Polynomial]:
    """The ``2^m`` products over subsets of ``gamma`` (empty product 1 first)."""
    return [p for _, p in subset_index_products(gamma, cap)]


# ---------------------------------------------------------------------------
# encodings
# ---------------------------------------------------------------------------


class Registry:
    """Hands out fresh, human-readable unknown names."""

    def __init__(self):
        self._used: dict[str, int] = {}

    def fresh(self, stem: str) -> str:
        n = self._used.get(stem, 0)
        self._used[stem] = n + 1
        return stem if n == 0 else f"{stem}~{n}"


def _coefficient_rows(target: SymbolicPolynomial) -> dict[Monomial, AffineExpr]:
    return {m: c for m, c in target.terms.items()}


@dataclass
class HandelmanEncoding:
    instance: PatternInstance
    products: list[tuple[tuple[int, ...], Polynomial]]
    unknowns: list[str]
    equalities: list[AffineExpr]


def handelman_encode(inst: PatternInstance, k: int, registry: Registry | None = None) -> HandelmanEncoding:
    bad = [g for g in inst.gamma if g.degree > 1]
    if bad:
        raise EncodingError(f"instance {inst.tag}: Handelman needs linear constraints, got {bad[0]}")
    registry = registry or Registry()
    products = monoid_products(inst.gamma, k)
    stem = registry.fresh(f"lam[{inst.tag}]")
    names = [f"{stem}#{i}" for i in range(len(products))]
    rows = _coefficient_rows(inst.target)
    for name, (_, u) in zip(names, products):
        for m, c in u.terms.items():
            rows[m] = rows.get(m, AffineExpr()) - AffineExpr._raw(Fraction(0), {name: c})
    eqs = [rows[m] for m in sorted(rows, key=lambda m: m.sort_key()) if not rows[m].is_zero()]
    return HandelmanEncoding(inst, products, names, eqs)


@dataclass
class SOSEncoding:
    instance: PatternInstance
    multipliers: list[tuple[tuple[int, ...], Polynomial]]
    basis: list[Monomial]
    blocks: list[str]
    equalities: list[AffineExpr]


def sos_basis(inst: PatternInstance, k: int, order: Sequence[str] | None = None) -> list[Monomial]:
    vs = sorted(inst.variables, key=lambda v: (list(order).index(v) if order and v in order else len(order or ()), v))
    return monomials_up_to_degree(vs, k // 2)


def sos_encode(inst: PatternInstance, k: int, method: str, registry: Registry | None = None,
               order: Sequence[str] | None = None) -> SOSEncoding:
    if method == PUTINAR:
        mults = [((), Polynomial.const(1))] + [((i,), g) for i, g in enumerate(inst.gamma)]
    elif method == SCHMUEDGEN:
        mults = subset_index_products(inst.gamma)
    else:
        raise ValueError(f"not an SOS method: {method}")
    registry = registry or Registry()
    basis = sos_basis(inst, k, order)
    stem = registry.fresh(f"Q[{inst.tag}]")
    rows = _coefficient_rows(inst.target)
    blocks = []
    n = len(basis)
    for w, (_, gw) in enumerate(mults):
        bname = f"{stem}#{w}"
        blocks.append(bname)
        for i in range(n):
            for j in range(i, n):
                entry = f"{bname}[{i},{j}]"
                prod = Polynomial({basis[i] * basis[j]: 1}) * gw
                mult = 1 if i == j else 2
                for m, c in prod.terms.items():
                    rows[m] = rows.get(m, AffineExpr()) - AffineExpr._raw(Fraction(0), {entry: c * mult})
    eqs = [rows[m] for m in sorted(rows, key=lambda m: m.sort_key()) if not rows[m].is_zero()]
    return SOSEncoding(inst, mults, basis, blocks, eqs)


@dataclass
class AssembledProblem:
    method: str
    k: int
    problem: LPProblem | SDPProblem
    encodings: list
    template_unknowns: list[str]
    objective: str = FEASIBILITY


def assemble(instances: Sequence[PatternInstance], method: str, k: int, objective: str = FEASIBILITY,
             objective_expr: AffineExpr | None = None, order: Sequence[str] | None = None) -> AssembledProblem:
    """Encode every instance and merge them into one LP (Handelman) or SDP.

    Template unknowns are shared across instances.  ``objective_expr`` is the
    expression to minimise for ``min-ub`` (normally ``eta(l0, x0)``).
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}")
    registry = Registry()
    shared: list[str] = []
    seen = set()
    for inst in instances:
        for u in sorted(inst.target.unknowns):
            if u not in seen:
                seen.add(u)
                shared.append(u)

    if objective == MIN_UB:
        if objective_expr is None:
            raise ValueError("min-ub needs the expression eta(l0, x0)")
        obj = objective_expr
    elif objective == MIN_WIDTH:
        obj = AffineExpr(0, {DIFF_UPPER: 1, DIFF_LOWER: -1})
    else:
        obj = None
    if obj is not None:
        for u in sorted(obj.unknowns):
            if u not in seen:
                seen.add(u)
                shared.append(u)

    encodings = []
    if method == HANDELMAN:
        lp = LPProblem()
        for u in shared:
            lp.add_variable(u, FREE)
        for inst in instances:
            enc = handelman_encode(inst, k, registry)
            encodings.append(enc)
            for name in enc.unknowns:
                lp.add_variable(name, NONNEG)
            for eq in enc.equalities:
                lp.add_affine_zero(eq)
        lp.set_objective(obj)
        return AssembledProblem(method, k, lp, encodings, shared, objective)

    sdp = SDPProblem(free=list(shared))
    for inst in instances:
        enc = sos_encode(inst, k, method, registry, order)
        encodings.append(enc)
        for b in enc.blocks:
            sdp.add_block(b, len(enc.basis))
        sdp.equalities.extend(enc.equalities)
    sdp.objective = obj
    return AssembledProblem(method, k, sdp, encodings, shared, objective)


# ---------------------------------------------------------------------------
# witnesses
# ---------------------------------------------------------------------------


@dataclass
class HandelmanWitness:
    products: list[Polynomial]
    coefficients: list[Fraction]
    indices: list[tuple[int, ...]] = field(default_factory=list)

    def support(self) -> list[tuple[tuple[int, ...], Fraction]]:
        return [(idx, a) for idx, a in zip(self.indices, self.coefficients) if a]

    def to_json(self) -> dict:
        return {
            "method": HANDELMAN,
            "terms": [{"product": list(idx), "coefficient": str(a)} for idx, a in self.support()],
        }


@dataclass
class SOSWitness:
    multipliers: list[Polynomial]
    basis: list[Monomial]
    grams: list[np.ndarray]
    indices: list[tuple[int, ...]] = field(default_factory=list)
    method: str = PUTINAR

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "basis": [str(m) for m in self.basis],
            "multipliers": [list(idx) for idx in self.indices],
            "grams": [[[float(v) for v in row] for row in q] for q in self.grams],
        }


def _concrete_target(inst: PatternInstance, values: Mapping[str, object] | None) -> Polynomial:
    if inst.target.has_unknowns():
        if values is None:
            raise ValueError(f"instance {inst.tag} still has unknowns; pass their values")
        return inst.target.instantiate(values)
    return inst.target.to_polynomial()


def check_handelman_witness(inst: PatternInstance, w: HandelmanWitness, values: Mapping[str, object] | None = None) -> bool:
    """Exact check of ``target == sum a_i u_i`` with every ``a_i >= 0``."""
    if any(to_fraction(a) < 0 for a in w.coefficients):
        return False
    if len(w.products) != len(w.coefficients):
        return False
    total = Polynomial()
    for a, u in zip(w.coefficients, w.products):
        a = to_fraction(a)
        if a:
            total = total + u.scale(a)
    return total == _concrete_target(inst, values)


def psd_pivots(Q: np.ndarray, tol: float) -> tuple[bool, float]:
    """LDL^T with diagonal pivoting (largest remaining diagonal first).

    Returns ``(is_psd, smallest_pivot)``.  Once every remaining diagonal is
    below ``tol`` the rest of the matrix must be within ``tol`` of zero.
    """
    A = np.array(Q, dtype=float, copy=True)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        return False, -math.inf
    if not np.allclose(A, A.T, atol=tol, rtol=0):
        return False, -math.inf
    A = (A + A.T) / 2
    n = A.shape[0]
    idx = list(range(n))
    smallest = math.inf
    while idx:
        diag = [A[i, i] for i in idx]
        p = idx[int(np.argmax(diag))]
        d = A[p, p]
        smallest = min(smallest, d)
        if d < -tol:
            return False, d
        if d <= tol:
            rest = A[np.ix_(idx, idx)]
            if np.min(np.diag(rest)) < -tol or np.max(np.abs(rest - np.diag(np.diag(rest)))) > tol:
                return False, float(np.min(np.linalg.eigvalsh(rest)))
            return True, smallest
        idx.remove(p)
        if idx:
            col = A[idx, p]
            A[np.ix_(idx, idx)] -= np.outer(col, col) / d
    return True, smallest


def sos_reconstruct(w: SOSWitness) -> dict[Monomial, float]:
    acc: dict[Monomial, float] = {}
    n = len(w.basis)
    for gw, Q in zip(w.multipliers, w.grams):
        for i in range(n):
            for j in range(n):
                q = float(Q[i, j])
                if q == 0.0:
                    continue
                bij = w.basis[i] * w.basis[j]
                for m, c in gw.terms.items():
                    mm = bij * m
                    acc[mm] = acc.get(mm, 0.0) + q * float(c)
    return acc


def sos_residual(inst: PatternInstance, w: SOSWitness, values: Mapping[str, object] | None = None) -> float:
    target = _concrete_target(inst, values)
    rec = sos_reconstruct(w)
    keys = set(rec) | set(target.terms)
    if not keys:
        return 0.0
    return max(abs(float(target.coefficient(m)) - rec.get(m, 0.0)) for m in keys)


def check_sos_witness(inst: PatternInstance, w: SOSWitness, tol: float = 1e-6,
                      values: Mapping[str, object] | None = None) -> tuple[bool, float]:
    """PSD test of every Gram matrix plus the identity residual; both within ``tol``."""
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    n = len(w.basis)
    if len(w.grams) != len(w.multipliers):
        return False, math.inf
    for Q in w.grams:
        if np.shape(Q) != (n, n):
            return False, math.inf
    residual = sos_residual(inst, w, values)
    ok = residual <= tol and all(psd_pivots(Q, tol)[0] for Q in w.grams)
    return ok, residual


def handelman_witnesses(ap: AssembledProblem, values: Mapping[str, Fraction]) -> list[HandelmanWitness]:
    out = []
    for enc in ap.encodings:
        out.append(HandelmanWitness(
            [p for _, p in enc.products],
            [to_fraction(values.get(n, 0)) for n in enc.unknowns],
            [idx for idx, _ in enc.products],
        ))
    return out


def sos_witnesses(ap: AssembledProblem, values: Mapping[str, float]) -> list[SOSWitness]:
    out = []
    n_of = {b.name: b for b in ap.problem.blocks}
    for enc in ap.encodings:
        grams = []
        for bname in enc.blocks:
            blk = n_of[bname]
            Q = np.zeros((blk.size, blk.size))
            for (i, j), name in blk.entries.items():
                Q[i, j] = Q[j, i] = float(values.get(name, 0.0))
            grams.append(Q)
        out.append(SOSWitness([p for _, p in enc.multipliers], list(enc.basis), grams,
                              [idx for idx, _ in enc.multipliers], ap.method))
    return out


def polish_sos_witness(inst: PatternInstance, w: SOSWitness, values: Mapping[str, object] | None = None) -> SOSWitness:
    """Move the Gram matrices onto the affine set where the identity holds.

    Solves the minimum-norm correction ``dQ`` with ``A(dQ) = target - A(Q)``
    by least squares.  The result still goes through :func:`check_sos_witness`;
    polishing only trades a tiny amount of PSD slack for a smaller residual.
    """
    target = _concrete_target(inst, values)
    n = len(w.basis)
    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    cols = []
    monos: dict[Monomial, int] = {}
    for b, gw in enumerate(w.multipliers):
        for i, j in pairs:
            contrib = {}
            bij = w.basis[i] * w.basis[j]
            for m, c in gw.terms.items():
                mm = bij * m
                contrib[mm] = contrib.get(mm, 0.0) + float(c) * (1 if i == j else 2)
                monos.setdefault(mm, len(monos))
            cols.append((b, i, j, contrib))
    for m in target.terms:
        monos.setdefault(m, len(monos))
    A = np.zeros((len(monos), len(cols)))
    for c_idx, (_, _, _, contrib) in enumerate(cols):
        for m, v in contrib.items():
            A[monos[m], c_idx] = v
    rec = sos_reconstruct(w)
    r = np.zeros(len(monos))
    for m, row in monos.items():
        r[row] = float(target.coefficient(m)) - rec.get(m, 0.0)
    dq, *_ = np.linalg.lstsq(A, r, rcond=None)
    grams = [np.array(Q, dtype=float, copy=True) for Q in w.grams]
    for (b, i, j, _), d in zip(cols, dq):
        grams[b][i, j] += d
        if i != j:
            grams[b][j, i] += d
    return SOSWitness(list(w.multipliers), list(w.basis), grams, list(w.indices), w.method)


# ---------------------------------------------------------------------------
# grid verification
# ---------------------------------------------------------------------------


@dataclass
class Violation:
    condition: str
    label: int
    point: dict[str, Fraction]
    margin: Fraction

    def __str__(self):
        pt = ", ".join(f"{v}={_fmt_coeff(c)}" for v, c in self.point.items())
        return f"{self.condition} at label {self.label}, {pt}: margin {float(self.margin):.6g}"


@dataclass
class GridReport:
    ok: bool
    points: int
    checks: int
    worst_margin: float | None
    worst: Violation | None
    violations: list[Violation]
    steps: dict[str, Fraction]
    box: dict[str, tuple[Fraction, Fraction]]
    n_violations: int = 0

    def summary(self) -> str:
        status = "ok" if self.ok else f"{self.n_violations} violation(s)"
        wm = "n/a" if self.worst_margin is None else f"{self.worst_margin:.6g}"
        return f"grid check {status}: {self.checks} checks on {self.points} points, worst margin {wm}"


def _linear_bounds(p: Polynomial) -> tuple[str, str, Fraction] | None:
    """For ``c*v + d >= 0`` return ``(v, 'lo'|'hi', bound)``."""
    if p.degree != 1 or len(p.variables) != 1:
        return None
    (v,) = p.variables
    c = p.coefficient(Monomial.var(v))
    d = p.coefficient(ONE)
    return (v, "lo", -d / c) if c > 0 else (v, "hi", -d / c)


def default_box(g: ControlFlowGraph, pad: Fraction = Fraction(10)) -> dict[str, tuple[Fraction, Fraction]]:
    """Bounding box read off single-variable linear invariant atoms.

    A side with no such bound anywhere becomes ``other side -/+ pad`` (or
    ``[-pad, pad]`` for a fully unconstrained variable).
    """
    lo: dict[str, Fraction | None] = {}
    hi: dict[str, Fraction | None] = {}
    for v in g.variables:
        lo[v] = hi[v] = None
    unbounded_lo, unbounded_hi = set(), set()
    for label in g.nonterminal:
        for clause in lang.to_dnf(g.invariant(label)):
            found_lo, found_hi = set(), set()
            for c in clause:
                b = _linear_bounds(c.poly)
                if b is None:
                    continue
                v, side, val = b
                if side == "lo":
                    found_lo.add(v)
                    lo[v] = val if lo[v] is None else min(lo[v], val)
                else:
                    found_hi.add(v)
                    hi[v] = val if hi[v] is None else max(hi[v], val)
            unbounded_lo |= set(g.variables) - found_lo
            unbounded_hi |= set(g.variables) - found_hi
    box = {}
    for v in g.variables:
        a = None if v in unbounded_lo else lo[v]
        b = None if v in unbounded_hi else hi[v]
        if a is None and b is None:
            a, b = -pad, pad
        elif a is None:
            a = b - pad
        elif b is None:
            b = a + pad
        box[v] = (a, b)
    return box


def _pre_branches(g, eta, label):
    """``(guard, value)`` pairs of concrete pre-expectation branches.

    For conditional labels only branches that stay inside the program are
    returned; at demonic labels the caller takes the maximum.
    """
    tmpl = {l: SymbolicPolynomial.lift(p) for l, p in eta.items()}
    out = []
    for br in pre_expectation(g, tmpl, label):
        if br.transition is not None and g.kind(label) == cfgmod.CONDITIONAL and br.transition.target == g.terminal:
            continue
        out.append((br.guard, br.value.to_polynomial()))
    return out


def verify_grid(g: ControlFlowGraph, eta: Mapping[int, Polynomial], epsilon, K, step=Fraction(1, 100),
                box: Mapping[str, tuple] | None = None, max_points: int = 200_000,
                diff: tuple | None = None, max_violations: int = 20) -> GridReport:
    """Pointwise check of C2, C4 (and optional difference bounds) on a rational grid.

    Values are screened in floating point; every point whose margin is close
    to zero, or whose membership in the region is uncertain in floating
    point, is re-evaluated exactly.
    """
    epsilon, K = to_fraction(epsilon), to_fraction(K)
    eta = dict(eta)
    eta[g.terminal] = Polynomial.const(K)
    box = {v: (to_fraction(a), to_fraction(b)) for v, (a, b) in (box or default_box(g)).items()}
    vars_ = list(g.variables)
    step = to_fraction(step)
    counts = {v: int((box[v][1] - box[v][0]) / step) + 1 for v in vars_}
    total = math.prod(counts.values()) if vars_ else 1
    steps = {v: step for v in vars_}
    if total > max_points and vars_:
        per = max(2, int(max_points ** (1 / len(vars_))))
        for v in vars_:
            if counts[v] > per:
                steps[v] = (box[v][1] - box[v][0]) / (per - 1)
                counts[v] = per
        total = math.prod(counts.values())
    axes_idx = [np.arange(counts[v]) for v in vars_]
    mesh = np.meshgrid(*axes_idx, indexing="ij") if vars_ else []
    flat_idx = [m.reshape(-1) for m in mesh]
    coords = [float(box[v][0]) + flat_idx[t] * float(steps[v]) for t, v in enumerate(vars_)]

    def exact_point(p: int) -> dict[str, Fraction]:
        return {v: box[v][0] + int(flat_idx[t][p]) * steps[v] for t, v in enumerate(vars_)}

    violations: list[Violation] = []
    worst_margin = None
    worst: Violation | None = None
    checks = 0
    nviol = 0
    ftol = 1e-9

    def region(pred):
        lenient = lang.predicate_mask(pred, vars_, coords, ftol) if vars_ else np.array([True])
        strict = lang.predicate_mask(pred, vars_, coords, -ftol) if vars_ else np.array([True])
        return lenient, strict

    def check(cond: str, label: int, pred, margin_fn_f, margin_fn_x):
        nonlocal worst_margin, worst, checks, nviol
        lenient, strict = region(pred)
        if not lenient.any():
            return
        pts = np.nonzero(lenient)[0]
        m = margin_fn_f([c[pts] for c in coords]) if vars_ else np.array([margin_fn_f([])]).reshape(-1)
        m = np.broadcast_to(np.asarray(m, dtype=float), pts.shape)
        scale = 1e-7 * (1.0 + float(np.max(np.abs(m))) if m.size else 1.0)
        sure = strict[pts]
        checks += int(pts.size)
        uncertain = (~sure) | (m < scale)
        for local in np.nonzero(uncertain)[0]:
            p = int(pts[local])
            x = exact_point(p)
            if not sure[local] and not lang.eval_predicate(pred, x):
                continue
            mx = margin_fn_x(x)
            if worst_margin is None or mx < worst_margin:
                worst_margin = float(mx)
                worst = Violation(cond, label, x, mx)
            if mx < 0:
                nviol += 1
                if len(violations) < max_violations:
                    violations.append(Violation(cond, label, x, mx))
        certain = ~uncertain
        if certain.any():
            mm = float(np.min(m[certain]))
            if worst_margin is None or mm < worst_margin:
                p = int(pts[np.nonzero(certain)[0][np.argmin(m[certain])]])
                x = exact_point(p)
                worst_margin = mm
                worst = Violation(cond, label, x, margin_fn_x(x))

    def fnum(p: Polynomial):
        f = p.to_numpy(vars_)
        return lambda arrs: f(*arrs)

    for label in g.nonterminal:
        inv = g.invariant(label)
        e = eta[label]
        check("C2", label, inv, fnum(e), lambda x, e=e: e.evaluate(x))
        kind = g.kind(label)
        branches = _pre_branches(g, eta, label)
        if kind == cfgmod.CONDITIONAL:
            for guard, val in branches:
                d = e - val - Polynomial.const(epsilon)
                check("C4", label, lang.conj(inv, guard), fnum(d), lambda x, d=d: d.evaluate(x))
        else:
            for guard, val in branches:
                d = e - val - Polynomial.const(epsilon)
                check("C4", label, inv, fnum(d), lambda x, d=d: d.evaluate(x))
        if diff is not None:
            a, b = (to_fraction(v) for v in diff)
            for tr in g.out(label):
                pred = lang.conj(inv, tr.payload) if kind == cfgmod.CONDITIONAL else inv
                for nxt in _successor_samples(g, eta, tr):
                    dl = nxt - e - Polynomial.const(a)
                    du = Polynomial.const(b) - (nxt - e)
                    check("DIFF-LO", label, pred, fnum(dl), lambda x, d=dl: d.evaluate(x))
                    check("DIFF-HI", label, pred, fnum(du), lambda x, d=du: d.evaluate(x))

    return GridReport(nviol == 0, total, checks, worst_margin, worst, violations, steps, box, nviol)


def _successor_samples(g: ControlFlowGraph, eta, tr, n: int = 11) -> list[Polynomial]:
    """``eta(target)`` after the transition, one polynomial per sampled value
    of the sampling variables (all support points, or ``n`` evenly spaced
    points of a uniform support)."""
    target = eta[tr.target]
    if g.kind(tr.source) != cfgmod.ASSIGNMENT:
        return [target]
    composed = target.substitute(tr.payload.as_substitution())
    rs = sorted(composed.variables & set(g.sampling))
    if not rs:
        return [composed]
    grids = []
    for r in rs:
        dist = g.sampling[r]
        if dist.kind == "discrete":
            grids.append([v for v, _ in dist.points])
        else:
            grids.append([dist.lo + (dist.hi - dist.lo) * Fraction(i, n - 1) for i in range(n)])
    out = []
    for vals in itertools.product(*grids):
        out.append(composed.substitute({r: Polynomial.const(v) for r, v in zip(rs, vals)}))
    return out


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------


def ub(eta: Mapping[int, Polynomial], l0: int, x0: Mapping[str, object], epsilon, K) -> Fraction:
    """``(eta(l0, x0) - K) / epsilon``, exactly."""
    epsilon = to_fraction(epsilon)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    p = eta[l0]
    if isinstance(p, SymbolicPolynomial):
        p = p.to_polynomial()
    x0 = {v: to_fraction(c) for v, c in x0.items()}
    return (p.evaluate(x0) - to_fraction(K)) / epsilon


def ub_polynomial(eta: Mapping[int, Polynomial], l0: int, epsilon, K) -> Polynomial:
    """The bound as a polynomial in the initial valuation."""
    epsilon = to_fraction(epsilon)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return (eta[l0] - Polynomial.const(to_fraction(K))).scale(1 / epsilon)


def concentration_bound(eta0, epsilon, a, b, n, dps: int = 50):
    """Hoeffding-style tail bound on ``P(T > n)`` for a difference-bounded pRSM.

    Returns ``None`` when ``epsilon * (n - 1) <= eta0`` (the bound does not
    apply yet).  The value is an ``mpmath.mpf`` computed at ``dps`` digits.
    """
    eta0, epsilon, a, b = (to_fraction(v) for v in (eta0, epsilon, a, b))
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if not b > a:
        raise ValueError("need b > a")
    if n < 2 or epsilon * (n - 1) <= eta0:
        return None
    with mpmath.workdps(dps):
        num = 2 * mpmath.mpf((epsilon * (n - 1) - eta0).numerator) ** 2 / mpmath.mpf((epsilon * (n - 1) - eta0).denominator) ** 2
        w = b - a
        den = (n - 1) * mpmath.mpf(w.numerator) ** 2 / mpmath.mpf(w.denominator) ** 2
        return +mpmath.exp(-num / den)


def minimal_M(eta0, epsilon) -> int:
    """Smallest step count from which the concentration bound is stated: ``ceil(eta0/eps) + 2``."""
    eta0, epsilon = to_fraction(eta0), to_fraction(epsilon)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return math.ceil(eta0 / epsilon) + 2


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------


def _poly_to_json(p: Polynomial, order) -> dict:
    return {
        "text": p.format(order),
        "coefficients": {str(m): str(c) for m, c in p.sorted_terms(order)},
    }


def _poly_from_json(d: dict, variables) -> Polynomial:
    total = Polynomial()
    for mono, c in d["coefficients"].items():
        m = lang.parse_polynomial(mono, variables) if mono != "1" else Polynomial.const(1)
        total = total + m.scale(Fraction(c))
    return total


@dataclass
class Certificate:
    """A synthesised (or hand-supplied) pRSM with its per-instance witnesses."""

    source: str
    variables: tuple[str, ...]
    method: str
    k: int
    d: int
    epsilon: Fraction
    K: Fraction
    eta: dict[int, Polynomial]
    ub: Fraction | None = None
    witnesses: dict[str, object] = field(default_factory=dict)
    diff: tuple[Fraction, Fraction] | None = None
    concentration: dict | None = None

    def to_json(self) -> dict:
        order = list(self.variables)
        out = {
            "format": "prsm-certificate/1",
            "method": self.method,
            "k": self.k,
            "d": self.d,
            "epsilon": str(self.epsilon),
            "K": str(self.K),
            "ub": None if self.ub is None else str(self.ub),
            "variables": order,
            "eta": {str(l): _poly_to_json(p, order) for l, p in sorted(self.eta.items())},
            "witnesses": {tag: w.to_json() for tag, w in self.witnesses.items()},
            "program": self.source,
        }
        if self.diff is not None:
            out["diff"] = [str(self.diff[0]), str(self.diff[1])]
        if self.concentration is not None:
            out["concentration"] = self.concentration
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)

    @classmethod
    def from_json(cls, d: dict) -> "Certificate":
        variables = tuple(d["variables"])
        eta = {int(l): _poly_from_json(p, variables) for l, p in d["eta"].items()}
        diff = tuple(Fraction(v) for v in d["diff"]) if d.get("diff") else None
        return cls(
            source=d["program"],
            variables=variables,
            method=d["method"],
            k=int(d["k"]),
            d=int(d["d"]),
            epsilon=Fraction(d["epsilon"]),
            K=Fraction(d["K"]),
            eta=eta,
            ub=None if d.get("ub") is None else Fraction(d["ub"]),
            witnesses=dict(d.get("witnesses", {})),
            diff=diff,
            concentration=d.get("concentration"),
        )

    @classmethod
    def loads(cls, text: str) -> "Certificate":
        return cls.from_json(json.loads(text))


def witness_from_json(inst: PatternInstance, d: dict, variables: Sequence[str] | None = None):
    """Rebuild a witness for ``inst`` from its JSON payload."""
    method = d["method"]
    if method == HANDELMAN:
        products, coeffs, indices = [], [], []
        for t in d["terms"]:
            idx = tuple(int(i) for i in t["product"])
            if any(not 0 <= i < len(inst.gamma) for i in idx):
                raise ValueError(f"{inst.tag}: product index out of range")
            p = Polynomial.const(1)
            for i in idx:
                p = p * inst.gamma[i]
            products.append(p)
            coeffs.append(Fraction(t["coefficient"]))
            indices.append(idx)
        return HandelmanWitness(products, coeffs, indices)
    basis = [Monomial() if s == "1" else next(iter(lang.parse_polynomial(s, variables).terms)) for s in d["basis"]]
    mults, indices = [], []
    for idx in d["multipliers"]:
        idx = tuple(int(i) for i in idx)
        p = Polynomial.const(1)
        for i in idx:
            p = p * inst.gamma[i]
        mults.append(p)
        indices.append(idx)
    grams = [np.array(q, dtype=float) for q in d["grams"]]
    return SOSWitness(mults, basis, grams, indices, method)


def eta_template(g: ControlFlowGraph, eta: Mapping[int, Polynomial], epsilon, K):
    return concrete_template(g, eta, epsilon, K)
