"""Control flow graphs built from programs.

Labels are numbered in preorder over the statement tree starting at 1, so
the running example gets the same numbers as its source listing; the
terminal label takes the next free number.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Union

from . import lang
from .lang import Predicate, Program, TRUE
from .poly import Distribution, Polynomial, _fmt_coeff

DEMONIC = "demonic"
PROBABILISTIC = "probabilistic"
CONDITIONAL = "conditional"
ASSIGNMENT = "assignment"
TERMINAL = "terminal"

KINDS = (DEMONIC, PROBABILISTIC, CONDITIONAL, ASSIGNMENT, TERMINAL)


@dataclass(frozen=True)
class Label:
    id: int
    kind: str


class StarPayload:
    def __repr__(self):
        return "*"

    __str__ = __repr__


STAR = StarPayload()


@dataclass(frozen=True)
class Update:
    """Simultaneous update; variables not listed keep their value."""

    assignments: tuple[tuple[str, Polynomial], ...]

    def as_substitution(self) -> dict[str, Polynomial]:
        return dict(self.assignments)

    def full(self, variables: Iterable[str]) -> dict[str, Polynomial]:
        subst = self.as_substitution()
        return {v: subst.get(v, Polynomial.var(v)) for v in variables}

    def is_identity(self) -> bool:
        return all(p == Polynomial.var(v) for v, p in self.assignments)

    def __str__(self):
        if not self.assignments or self.is_identity():
            return "id"
        return "; ".join(f"{v}:={p}" for v, p in self.assignments)


Payload = Union[Fraction, StarPayload, Predicate, Update]


@dataclass(frozen=True)
class Transition:
    source: int
    payload: Payload
    target: int


@dataclass
class ControlFlowGraph:
    variables: tuple[str, ...]
    sampling: dict[str, Distribution]
    labels: dict[int, str]
    transitions: list[Transition]
    initial: int
    terminal: int
    invariants: dict[int, Predicate] = field(default_factory=dict)
    init_valuation: dict[str, Fraction] = field(default_factory=dict)

    def kind(self, label: int) -> str:
        return self.labels[label]

    def out(self, label: int) -> list[Transition]:
        return [t for t in self.transitions if t.source == label]

    def invariant(self, label: int) -> Predicate:
        return self.invariants.get(label, TRUE)

    @property
    def nonterminal(self) -> list[int]:
        return sorted(l for l, k in self.labels.items() if k != TERMINAL)

    def label_objects(self) -> list[Label]:
        return [Label(i, k) for i, k in sorted(self.labels.items())]

    def dump(self) -> str:
        """One edge per line: ``src kind payload dst``."""
        lines = []
        for t in self.transitions:
            kind = self.labels[t.source]
            if isinstance(t.payload, Fraction):
                payload = _fmt_coeff(t.payload)
            else:
                payload = str(t.payload)
            lines.append(f"{t.source} {kind} {payload} {t.target}")
        return "\n".join(lines)


def build_cfg(prog: Program) -> ControlFlowGraph:
    """Inductive program-to-CFG construction with preorder label numbering."""
    ids: dict[int, int] = {}
    counter = [0]

    def number(s):
        # every statement owns exactly one entry label except sequences
        if isinstance(s, lang.Seq):
            for sub in s.stmts:
                number(sub)
            return
        counter[0] += 1
        ids[id(s)] = counter[0]
        if isinstance(s, lang.While):
            number(s.body)
        elif isinstance(s, lang.If):
            number(s.then)
            number(s.orelse)

    number(prog.body)
    terminal = counter[0] + 1
    labels: dict[int, str] = {terminal: TERMINAL}
    transitions: list[Transition] = []
    invariants: dict[int, Predicate] = {}

    def entry(s) -> int:
        if isinstance(s, lang.Seq):
            return entry(s.stmts[0])
        return ids[id(s)]

    def build(s, out: int):
        if isinstance(s, lang.Seq):
            for k, sub in enumerate(s.stmts):
                nxt = entry(s.stmts[k + 1]) if k + 1 < len(s.stmts) else out
                build(sub, nxt)
            return
        me = ids[id(s)]
        if s.invariant is not None:
            invariants[me] = s.invariant
        if isinstance(s, lang.Skip):
            labels[me] = ASSIGNMENT
            transitions.append(Transition(me, Update(()), out))
        elif isinstance(s, lang.Assign):
            labels[me] = ASSIGNMENT
            transitions.append(Transition(me, Update(tuple(zip(s.targets, s.exprs))), out))
        elif isinstance(s, lang.While):
            labels[me] = CONDITIONAL
            transitions.append(Transition(me, s.cond, entry(s.body)))
            transitions.append(Transition(me, lang.negate(s.cond), out))
            build(s.body, me)
        elif isinstance(s, lang.If):
            if isinstance(s.guard, lang.Star):
                labels[me] = DEMONIC
                transitions.append(Transition(me, STAR, entry(s.then)))
                transitions.append(Transition(me, STAR, entry(s.orelse)))
            elif isinstance(s.guard, lang.Prob):
                labels[me] = PROBABILISTIC
                transitions.append(Transition(me, s.guard.p, entry(s.then)))
                transitions.append(Transition(me, 1 - s.guard.p, entry(s.orelse)))
            else:
                labels[me] = CONDITIONAL
                transitions.append(Transition(me, s.guard, entry(s.then)))
                transitions.append(Transition(me, lang.negate(s.guard), entry(s.orelse)))
            build(s.then, out)
            build(s.orelse, out)
        else:
            raise TypeError(s)

    build(prog.body, terminal)
    if prog.terminal_invariant is not None:
        invariants[terminal] = prog.terminal_invariant
    transitions.sort(key=lambda t: t.source)
    return ControlFlowGraph(
        variables=prog.variables,
        sampling=prog.distributions,
        labels=dict(sorted(labels.items())),
        transitions=transitions,
        initial=entry(prog.body),
        terminal=terminal,
        invariants=invariants,
        init_valuation=prog.initial_valuation,
    )


def term_predicate(g: ControlFlowGraph, label: int) -> Predicate:
    """Disjunction of guards leading away from the terminal label.

    ``true`` for every non-conditional label.
    """
    if label == g.terminal:
        raise ValueError("TERM is undefined at the terminal label")
    if g.kind(label) != CONDITIONAL:
        return TRUE
    return lang.disj(*(t.payload for t in g.out(label) if t.target != g.terminal))


def validate(g: ControlFlowGraph) -> list[str]:
    """Return human-readable violations of the structural CFG invariants."""
    problems = []
    terminals = [l for l, k in g.labels.items() if k == TERMINAL]
    if terminals != [g.terminal]:
        problems.append(f"expected exactly one terminal label, found {terminals}")
    for t in g.transitions:
        if t.source not in g.labels or t.target not in g.labels:
            problems.append(f"transition {t.source}->{t.target} references an unknown label")
    for label, kind in g.labels.items():
        outs = g.out(label)
        if kind == TERMINAL:
            if outs:
                problems.append(f"terminal label {label} has outgoing transitions")
            continue
        wrong = [t for t in outs if not _payload_matches(kind, t.payload)]
        if wrong:
            problems.append(f"label {label} ({kind}) has transitions with mismatched payloads")
        if kind == PROBABILISTIC:
            total = sum((t.payload for t in outs if isinstance(t.payload, Fraction)), Fraction(0))
            if total != 1:
                problems.append(f"probabilities at label {label} sum to {total}, not 1")
            if any(isinstance(t.payload, Fraction) and not 0 < t.payload < 1 for t in outs):
                problems.append(f"probability outside (0,1) at label {label}")
        elif kind == DEMONIC:
            if len(outs) < 2:
                problems.append(f"demonic label {label} has {len(outs)} successor(s), needs at least 2")
        elif kind == CONDITIONAL:
            if len(outs) != 2:
                problems.append(f"conditional label {label} has {len(outs)} transitions, needs 2")
            elif not (isinstance(outs[0].payload, Predicate) and isinstance(outs[1].payload, Predicate)):
                pass
            elif lang.to_dnf(outs[1].payload) != lang.to_dnf(lang.negate(outs[0].payload)):
                problems.append(f"guards at conditional label {label} are not complementary")
        elif kind == ASSIGNMENT:
            if len(outs) != 1:
                problems.append(f"assignment label {label} has {len(outs)} transitions, needs 1")
    return problems


def _payload_matches(kind: str, payload) -> bool:
    if kind == PROBABILISTIC:
        return isinstance(payload, Fraction)
    if kind == DEMONIC:
        return payload is STAR
    if kind == CONDITIONAL:
        return isinstance(payload, Predicate)
    if kind == ASSIGNMENT:
        return isinstance(payload, Update)
    return False
