"""Polynomial templates and symbolic pre-expectation."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator

from . import cfg as cfgmod
from .cfg import ControlFlowGraph, Transition
from .lang import Predicate
from .poly import (
    AffineExpr,
    Monomial,
    Polynomial,
    SymbolicPolynomial,
    expect_samplings,
    monomials_up_to_degree,
    to_fraction,
)


def unknown_name(label: int, m: Monomial) -> str:
    return f"a[{label},{m}]"


@dataclass
class Template(Mapping):
    """Label -> symbolic polynomial, with the terminal label fixed to ``K``.

    Behaves as a read-only mapping so it can be passed anywhere a concrete
    ``label -> polynomial`` map is accepted.
    """

    eta: dict[int, SymbolicPolynomial]
    degree: int
    basis: list[Monomial]
    unknowns: list[str]
    epsilon: Fraction = Fraction(1)
    K: Fraction = Fraction(-1)
    terminal: int | None = None
    label_unknowns: dict[int, list[str]] = field(default_factory=dict)

    def __getitem__(self, label: int) -> SymbolicPolynomial:
        return self.eta[label]

    def __iter__(self) -> Iterator[int]:
        return iter(self.eta)

    def __len__(self) -> int:
        return len(self.eta)

    def instantiate(self, values: Mapping[str, object]) -> dict[int, Polynomial]:
        return {l: p.instantiate(values) for l, p in self.eta.items()}


def make_template(g: ControlFlowGraph, d: int, epsilon=1, K=-1) -> Template:
    """One fresh unknown per (non-terminal label, monomial of degree <= d)."""
    if d < 0:
        raise ValueError("template degree must be nonnegative")
    basis = monomials_up_to_degree(g.variables, d)
    eta: dict[int, SymbolicPolynomial] = {}
    unknowns: list[str] = []
    per_label: dict[int, list[str]] = {}
    for label in g.nonterminal:
        names = [unknown_name(label, m) for m in basis]
        per_label[label] = names
        unknowns.extend(names)
        eta[label] = SymbolicPolynomial.template(basis, names)
    K = to_fraction(K)
    eta[g.terminal] = SymbolicPolynomial.lift(Polynomial.const(K))
    return Template(eta, d, basis, unknowns, to_fraction(epsilon), K, g.terminal, per_label)


def concrete_template(g: ControlFlowGraph, eta: Mapping[int, Polynomial], epsilon, K) -> Template:
    """Wrap a hand-written concrete ``eta`` so it can flow through extraction."""
    K = to_fraction(K)
    lifted = {l: SymbolicPolynomial.lift(p) for l, p in eta.items() if l != g.terminal}
    missing = set(g.nonterminal) - set(lifted)
    if missing:
        raise KeyError(f"eta missing for labels {sorted(missing)}")
    lifted[g.terminal] = SymbolicPolynomial.lift(Polynomial.const(K))
    deg = max((p.degree for p in lifted.values()), default=0)
    return Template(lifted, max(deg, 0), [], [], to_fraction(epsilon), K, g.terminal, {})


@dataclass(frozen=True)
class PreBranch:
    """One branch of a pre-expectation.

    ``guard`` is set only at conditional labels: the branch's value applies
    where the guard holds.  At demonic labels the pre-expectation is the
    maximum over all branches.
    """

    value: SymbolicPolynomial
    transition: Transition | None = None
    guard: Predicate | None = None


def pre_expectation(g: ControlFlowGraph, eta: Mapping[int, object], label: int) -> list[PreBranch]:
    lift = SymbolicPolynomial.lift
    if label == g.terminal:
        # the terminal label loops on itself, so eta is its own pre-expectation
        return [PreBranch(lift(eta[label]))]
    if label not in g.labels:
        raise ValueError(f"unknown label {label}")
    kind = g.kind(label)
    outs = g.out(label)
    if kind == cfgmod.PROBABILISTIC:
        total = SymbolicPolynomial()
        for t in outs:
            total = total + lift(eta[t.target]).scale(t.payload)
        return [PreBranch(total)]
    if kind == cfgmod.DEMONIC:
        return [PreBranch(lift(eta[t.target]), t) for t in outs]
    if kind == cfgmod.CONDITIONAL:
        return [PreBranch(lift(eta[t.target]), t, t.payload) for t in outs]
    if kind == cfgmod.ASSIGNMENT:
        (t,) = outs
        composed = lift(eta[t.target]).substitute(t.payload.as_substitution())
        return [PreBranch(expect_samplings(composed, g.sampling, g.sampling.keys()), t)]
    raise ValueError(f"unexpected label kind {kind}")
