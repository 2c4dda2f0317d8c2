"""Decompose the pRSM conditions into ``(Gamma, target)`` pattern instances.

Each instance reads: for all points with every ``gamma_i >= 0``, the target
is nonnegative.  Strict constraints in Gamma are relaxed to non-strict ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

from . import cfg as cfgmod
from . import lang
from .cfg import ControlFlowGraph
from .poly import ONE, AffineExpr, Polynomial, SymbolicPolynomial
from .preexp import Template, pre_expectation

DIFF_LOWER = "diff_a"
DIFF_UPPER = "diff_b"


@dataclass(frozen=True)
class PatternInstance:
    gamma: tuple[Polynomial, ...]
    target: SymbolicPolynomial
    kind: str  # C2 | C4 | DIFF-LO | DIFF-HI
    label: int
    branch: int | None = None
    clause: int = 0

    @property
    def tag(self) -> str:
        parts = [self.kind, str(self.label)]
        if self.branch is not None:
            parts.append(f"b{self.branch}")
        parts.append(f"c{self.clause}")
        return ":".join(parts)

    @property
    def variables(self) -> frozenset[str]:
        out = set(self.target.variables)
        for g in self.gamma:
            out |= g.variables
        return frozenset(out)

    def to_json(self) -> dict:
        return {
            "tag": self.tag,
            "gamma": [str(g) for g in self.gamma],
            "target": str(self.target),
        }


def clean_gamma(polys: Iterable[Polynomial]) -> tuple[Polynomial, ...] | None:
    """Deduplicate; drop nonnegative constants.  ``None`` if a negative
    constant makes the set empty."""
    out: list[Polynomial] = []
    for p in polys:
        if p.is_constant():
            if p.constant_value() < 0:
                return None
            continue
        if p not in out:
            out.append(p)
    return tuple(out)


def _clauses(p: lang.Predicate) -> list[tuple[Polynomial, ...]]:
    return [tuple(c.poly for c in clause) for clause in lang.to_dnf(p)]


def extract_instances(g: ControlFlowGraph, t: Template, c2_margin=0) -> list[PatternInstance]:
    """C2 and C4 instances for every non-terminal label.

    ``c2_margin`` strengthens C2 to ``eta >= c2_margin`` (used by the
    floating-point SOS paths).
    """
    out: list[PatternInstance] = []
    eps = t.epsilon
    for label in g.nonterminal:
        inv = g.invariant(label)
        for ci, clause in enumerate(_clauses(inv)):
            gamma = clean_gamma(clause)
            if gamma is None:
                continue
            out.append(PatternInstance(gamma, t[label] - Polynomial.const(c2_margin), "C2", label, None, ci))
    for label in g.nonterminal:
        out.extend(_c4_instances(g, t, label, eps))
    return out


def _c4_instances(g: ControlFlowGraph, t: Template, label: int, eps) -> list[PatternInstance]:
    inv = g.invariant(label)
    branches = pre_expectation(g, t, label)
    out = []
    if g.kind(label) == cfgmod.CONDITIONAL:
        # Guards are complementary, so guard /\ TERM(label) is just the guard
        # for branches that stay in the program and empty for the exit branch.
        for bi, br in enumerate(branches):
            if br.transition.target == g.terminal:
                continue
            region = lang.conj(inv, br.guard)
            for ci, clause in enumerate(_clauses(region)):
                gamma = clean_gamma(clause)
                if gamma is None:
                    continue
                target = t[label] - br.value - Polynomial.const(eps)
                out.append(PatternInstance(gamma, target, "C4", label, bi, ci))
        return out
    region = lang.conj(inv, cfgmod.term_predicate(g, label))
    clauses = _clauses(region)
    for bi, br in enumerate(branches):
        for ci, clause in enumerate(clauses):
            gamma = clean_gamma(clause)
            if gamma is None:
                continue
            target = t[label] - br.value - Polynomial.const(eps)
            out.append(PatternInstance(gamma, target, "C4", label, bi if len(branches) > 1 else None, ci))
    return out


def extract_diff_bounded(g: ControlFlowGraph, t: Template, a: str = DIFF_LOWER, b: str = DIFF_UPPER) -> list[PatternInstance]:
    """Instances forcing ``a <= eta(next) - eta(current) <= b`` on every transition."""
    lower = SymbolicPolynomial({ONE: AffineExpr.unknown(a)})
    upper = SymbolicPolynomial({ONE: AffineExpr.unknown(b)})
    out: list[PatternInstance] = []
    for label in g.nonterminal:
        inv = g.invariant(label)
        kind = g.kind(label)
        for bi, tr in enumerate(g.out(label)):
            extra: list[Polynomial] = []
            if kind == cfgmod.CONDITIONAL:
                region = lang.conj(inv, tr.payload)
            else:
                region = inv
            if kind == cfgmod.ASSIGNMENT:
                nxt = t[tr.target].substitute(tr.payload.as_substitution())
                for r in sorted(nxt.variables & set(g.sampling)):
                    lo, hi = g.sampling[r].support
                    rv = Polynomial.var(r)
                    extra += [rv - lo, Polynomial.const(hi) - rv]
            else:
                nxt = t[tr.target]
            diff = nxt - t[label]
            for ci, clause in enumerate(_clauses(region)):
                gamma = clean_gamma(list(clause) + extra)
                if gamma is None:
                    continue
                out.append(PatternInstance(gamma, diff - lower, "DIFF-LO", label, bi, ci))
                out.append(PatternInstance(gamma, upper - diff, "DIFF-HI", label, bi, ci))
    return out


def dump_instances(instances: Sequence[PatternInstance]) -> str:
    return json.dumps([i.to_json() for i in instances], indent=2)
