"""Probabilistic program syntax: predicates, statements, parser and printer.

File format::

    # comment
    dist r = discrete{1: 0.5, -1: 0.5}
    dist u = uniform(-0.1, 0.2)
    init x = 5
    [0 <= x and x <= 11]
    while 1 <= x and x <= 10 do
      [1 <= x <= 10]
      if * then x := x + r
      else if prob(0.51) then x := x - 1 else x := x + 1 fi
      fi
    od
    [x < 1 or x > 10]

``init`` declares a program variable together with its initial value and
``dist`` declares a sampling variable.  A bracketed predicate in front of a
statement is the invariant of that statement's label; a trailing one after
the body is the invariant of the terminal label.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from .poly import Distribution, Polynomial, _fmt_coeff, to_fraction


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line, self.col = line, col
        where = f"line {line}, column {col}: " if line is not None else ""
        super().__init__(where + message)


# ---------------------------------------------------------------------------
# predicates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Constraint:
    """``poly >= 0`` (or ``poly > 0`` when ``strict``)."""

    poly: Polynomial
    strict: bool = False

    @classmethod
    def compare(cls, lhs: Polynomial, rel: str, rhs: Polynomial) -> "Constraint":
        if rel in (">=", "≥"):
            return cls(lhs - rhs, False)
        if rel == ">":
            return cls(lhs - rhs, True)
        if rel in ("<=", "≤"):
            return cls(rhs - lhs, False)
        if rel == "<":
            return cls(rhs - lhs, True)
        raise ValueError(f"unknown relation {rel!r}")

    def negate(self) -> "Constraint":
        # not(g >= 0) == -g > 0 ; not(g > 0) == -g >= 0
        return Constraint(-self.poly, not self.strict)

    def holds(self, point: Mapping) -> bool:
        v = self.poly.evaluate(point)
        return v > 0 if self.strict else v >= 0

    def __str__(self) -> str:
        return f"{self.poly} {'>' if self.strict else '>='} 0"


class Predicate:
    """Base class of the propositional predicate tree."""

    def evaluate(self, point: Mapping) -> bool:
        raise NotImplementedError

    @property
    def variables(self) -> frozenset[str]:
        raise NotImplementedError


@dataclass(frozen=True)
class TrueP(Predicate):
    def evaluate(self, point):
        return True

    @property
    def variables(self):
        return frozenset()

    def __str__(self):
        return "true"


@dataclass(frozen=True)
class FalseP(Predicate):
    def evaluate(self, point):
        return False

    @property
    def variables(self):
        return frozenset()

    def __str__(self):
        return "false"


@dataclass(frozen=True)
class Atom(Predicate):
    constraint: Constraint

    def evaluate(self, point):
        return self.constraint.holds(point)

    @property
    def variables(self):
        return self.constraint.poly.variables

    def __str__(self):
        return str(self.constraint)


@dataclass(frozen=True)
class Not(Predicate):
    arg: Predicate

    def evaluate(self, point):
        return not self.arg.evaluate(point)

    @property
    def variables(self):
        return self.arg.variables

    def __str__(self):
        return f"not ({self.arg})"


@dataclass(frozen=True)
class And(Predicate):
    args: tuple[Predicate, ...]

    def evaluate(self, point):
        return all(a.evaluate(point) for a in self.args)

    @property
    def variables(self):
        return frozenset().union(*(a.variables for a in self.args))

    def __str__(self):
        return " and ".join(_paren(a, Or) for a in self.args)


@dataclass(frozen=True)
class Or(Predicate):
    args: tuple[Predicate, ...]

    def evaluate(self, point):
        return any(a.evaluate(point) for a in self.args)

    @property
    def variables(self):
        return frozenset().union(*(a.variables for a in self.args))

    def __str__(self):
        return " or ".join(_paren(a, Or) for a in self.args)


def _paren(p: Predicate, loose: type) -> str:
    return f"({p})" if isinstance(p, (And, Or)) else str(p)


TRUE = TrueP()
FALSE = FalseP()


def conj(*parts: Predicate) -> Predicate:
    parts = tuple(p for p in parts if not isinstance(p, TrueP))
    if not parts:
        return TRUE
    if len(parts) == 1:
        return parts[0]
    return And(parts)


def disj(*parts: Predicate) -> Predicate:
    parts = tuple(p for p in parts if not isinstance(p, FalseP))
    if not parts:
        return FALSE
    if len(parts) == 1:
        return parts[0]
    return Or(parts)


def negate(p: Predicate) -> Predicate:
    """Negation with the constraint pushed inward where it is cheap."""
    if isinstance(p, TrueP):
        return FALSE
    if isinstance(p, FalseP):
        return TRUE
    if isinstance(p, Atom):
        return Atom(p.constraint.negate())
    if isinstance(p, Not):
        return p.arg
    if isinstance(p, And):
        return disj(*(negate(a) for a in p.args))
    if isinstance(p, Or):
        return conj(*(negate(a) for a in p.args))
    raise TypeError(p)


Clause = tuple[Constraint, ...]


def to_dnf(p: Predicate) -> list[Clause]:
    """Disjunctive normal form as a list of conjunctive clauses.

    ``true`` gives ``[()]`` and ``false`` gives ``[]``.  Duplicate literals
    inside a clause and duplicate clauses are removed.
    """
    out: list[Clause] = []
    seen = set()
    for clause in _dnf(p, False):
        uniq = tuple(dict.fromkeys(clause))
        key = frozenset(uniq)
        if key not in seen:
            seen.add(key)
            out.append(uniq)
    return out


def _dnf(p: Predicate, neg: bool) -> list[Clause]:
    if isinstance(p, TrueP):
        return [] if neg else [()]
    if isinstance(p, FalseP):
        return [()] if neg else []
    if isinstance(p, Atom):
        return [(p.constraint.negate() if neg else p.constraint,)]
    if isinstance(p, Not):
        return _dnf(p.arg, not neg)
    if isinstance(p, (And, Or)):
        conjunctive = isinstance(p, And) != neg
        parts = [_dnf(a, neg) for a in p.args]
        if not conjunctive:
            return [c for part in parts for c in part]
        acc: list[Clause] = [()]
        for part in parts:
            acc = [a + b for a in acc for b in part]
            if not acc:
                break
        return acc
    raise TypeError(p)


def from_dnf(clauses: Sequence[Clause]) -> Predicate:
    return disj(*(conj(*(Atom(c) for c in cl)) for cl in clauses))


def eval_predicate(p: Predicate, point: Mapping) -> bool:
    missing = p.variables - set(point)
    if missing:
        raise KeyError(f"missing binding for {sorted(missing)}")
    return p.evaluate(point)


def predicate_mask(p: Predicate, variables: Sequence[str], arrays: Sequence[np.ndarray], tol: float = 0.0) -> np.ndarray:
    """Vectorised float evaluation of ``p`` over parallel value arrays.

    A positive ``tol`` makes every atom lenient by that amount (points within
    ``tol`` of a boundary count as satisfying it); a negative one makes every
    atom stricter.
    """
    shape = np.shape(arrays[0]) if len(arrays) else ()
    if isinstance(p, TrueP):
        return np.ones(shape, dtype=bool)
    if isinstance(p, FalseP):
        return np.zeros(shape, dtype=bool)
    if isinstance(p, Atom):
        v = p.constraint.poly.to_numpy(variables)(*arrays)
        return v > -tol if p.constraint.strict else v >= -tol
    if isinstance(p, Not):
        return ~predicate_mask(p.arg, variables, arrays, -tol)
    if isinstance(p, And):
        m = np.ones(shape, dtype=bool)
        for a in p.args:
            m &= predicate_mask(a, variables, arrays, tol)
        return m
    if isinstance(p, Or):
        m = np.zeros(shape, dtype=bool)
        for a in p.args:
            m |= predicate_mask(a, variables, arrays, tol)
        return m
    raise TypeError(p)


# ---------------------------------------------------------------------------
# statements and programs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Star:
    def __str__(self):
        return "*"


@dataclass(frozen=True)
class Prob:
    p: Fraction

    def __str__(self):
        return f"prob({_fmt_coeff(self.p)})"


Guard = Union[Star, Prob, Predicate]


@dataclass(frozen=True)
class Skip:
    invariant: Predicate | None = None


@dataclass(frozen=True)
class Assign:
    targets: tuple[str, ...]
    exprs: tuple[Polynomial, ...]
    invariant: Predicate | None = None


@dataclass(frozen=True)
class If:
    guard: Guard
    then: "Stmt"
    orelse: "Stmt"
    invariant: Predicate | None = None


@dataclass(frozen=True)
class While:
    cond: Predicate
    body: "Stmt"
    invariant: Predicate | None = None


@dataclass(frozen=True)
class Seq:
    stmts: tuple["Stmt", ...]
    invariant: Predicate | None = None


Stmt = Union[Skip, Assign, If, While, Seq]


@dataclass(frozen=True)
class Program:
    variables: tuple[str, ...]
    sampling: tuple[tuple[str, Distribution], ...]
    init: tuple[tuple[str, Fraction], ...]
    body: Stmt
    terminal_invariant: Predicate | None = None

    @property
    def distributions(self) -> dict[str, Distribution]:
        return dict(self.sampling)

    @property
    def sampling_variables(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.sampling)

    @property
    def initial_valuation(self) -> dict[str, Fraction]:
        return dict(self.init)


# ---------------------------------------------------------------------------
# tokenizer
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9']*)
  | (?P<op>:=|<=|>=|≤|≥|∧|∨|¬|⋆|&&|\|\||[-+*/^(),;:\[\]{}<>=!])
    """,
    re.VERBOSE,
)

_KEYWORDS = {
    "while", "do", "od", "if", "then", "else", "fi", "skip", "prob",
    "and", "or", "not", "true", "false", "dist", "init", "discrete", "uniform",
}

_ALIASES = {"∧": "and", "&&": "and", "∨": "or", "||": "or", "¬": "not", "!": "not", "⋆": "*", "≤": "<=", "≥": ">="}


@dataclass
class Token:
    kind: str  # num, ident, kw, op, eof
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    toks: list[Token] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        tok = m.group()
        col = pos - line_start + 1
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "ident":
            toks.append(Token("kw" if tok in _KEYWORDS else "ident", tok, line, col))
        elif kind == "op":
            tok = _ALIASES.get(tok, tok)
            toks.append(Token("kw" if tok in ("and", "or", "not") else "op", tok, line, col))
        elif kind == "num":
            toks.append(Token("num", tok, line, col))
        pos = m.end()
    toks.append(Token("eof", "", line, pos - line_start + 1))
    return toks


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

_RELATIONS = ("<=", ">=", "<", ">")


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        self.program_vars: list[str] = []
        self.sampling: dict[str, Distribution] = {}
        self.init: dict[str, Fraction] = {}
        self.allow_sampling = False

    # token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def at(self, text: str) -> bool:
        return self.tok.kind in ("op", "kw") and self.tok.text == text

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
        t = self.tok
        self.i += 1
        return t

    def error(self, msg: str, tok: Token | None = None):
        tok = tok or self.tok
        raise ParseError(msg, tok.line, tok.col)

    # numbers
    def signed_number(self) -> Fraction:
        neg = False
        while self.at("-") or self.at("+"):
            neg ^= self.tok.text == "-"
            self.i += 1
        if self.accept("("):
            v = self.signed_number()
            self.expect(")")
        elif self.tok.kind == "num":
            v = Fraction(self.tok.text)
            self.i += 1
        else:
            self.error("expected a number")
        if self.accept("/"):
            if self.tok.kind != "num":
                self.error("expected a number")
            v /= Fraction(self.tok.text)
            self.i += 1
        return -v if neg else v

    # program
    def program(self) -> Program:
        while self.at("dist") or self.at("init"):
            if self.accept("dist"):
                self.dist_decl()
            else:
                self.expect("init")
                self.init_decl()
            self.accept(";")
        if not self.program_vars:
            self.error("program declares no program variables (use 'init x = value')")
        body = self.stmt_seq()
        terminal = None
        if self.at("["):
            terminal = self.annotation()
        if self.tok.kind != "eof":
            self.error(f"unexpected {self.tok.text!r}")
        return Program(
            tuple(self.program_vars),
            tuple(self.sampling.items()),
            tuple(self.init.items()),
            body,
            terminal,
        )

    def new_name(self) -> Token:
        t = self.tok
        if t.kind != "ident":
            self.error("expected an identifier")
        if t.text in self.sampling or t.text in self.init:
            self.error(f"variable {t.text!r} declared twice")
        self.i += 1
        return t

    def dist_decl(self):
        name = self.new_name().text
        self.expect("=")
        if self.accept("uniform"):
            self.expect("(")
            lo = self.signed_number()
            self.expect(",")
            hi = self.signed_number()
            self.expect(")")
            if not lo < hi:
                self.error("uniform(lo, hi) needs lo < hi")
            self.sampling[name] = Distribution.uniform(lo, hi)
        elif self.accept("discrete"):
            self.expect("{")
            pts = []
            while True:
                v = self.signed_number()
                self.expect(":")
                p = self.signed_number()
                pts.append((v, p))
                if not self.accept(","):
                    break
            self.expect("}")
            try:
                self.sampling[name] = Distribution.discrete(pts)
            except ValueError as exc:
                self.error(str(exc))
        else:
            self.error("expected 'uniform' or 'discrete'")

    def init_decl(self):
        name = self.new_name().text
        self.expect("=")
        self.init[name] = self.signed_number()
        self.program_vars.append(name)

    # statements
    def stmt_seq(self) -> Stmt:
        stmts = [self.stmt()]
        while self.accept(";"):
            if self.at("[") and self._annotation_is_trailing():
                break
            stmts.append(self.stmt())
        flat = []
        for st in stmts:
            flat.extend(st.stmts if isinstance(st, Seq) else (st,))
        return flat[0] if len(flat) == 1 else Seq(tuple(flat))

    def _annotation_is_trailing(self) -> bool:
        depth, j = 0, self.i
        while j < len(self.toks):
            t = self.toks[j]
            if t.kind == "op" and t.text == "[":
                depth += 1
            elif t.kind == "op" and t.text == "]":
                depth -= 1
                if depth == 0:
                    return self.toks[j + 1].kind == "eof"
            j += 1
        return False

    def annotation(self) -> Predicate:
        self.expect("[")
        p = self.predicate()
        self.expect("]")
        return p

    def stmt(self) -> Stmt:
        inv = self.annotation() if self.at("[") else None
        t = self.tok
        if self.accept("skip"):
            return Skip(inv)
        if self.accept("while"):
            cond = self.predicate()
            self.expect("do")
            body = self.stmt_seq()
            self.expect("od")
            return While(cond, body, inv)
        if self.accept("if"):
            guard = self.guard()
            if not self.accept("then"):
                self.expect("do")
            then = self.stmt_seq()
            self.expect("else")
            orelse = self.stmt_seq()
            self.expect("fi")
            return If(guard, then, orelse, inv)
        if self.accept("("):
            # ( s1; s2 ) grouping
            body = self.stmt_seq()
            self.expect(")")
            if inv is not None:
                self.error("annotate the first statement inside the parentheses", t)
            return body
        if t.kind == "ident":
            return self.assignment(inv)
        self.error(f"expected a statement, found {t.text or 'end of input'!r}")

    def assignment(self, inv) -> Assign:
        targets = []
        while True:
            t = self.tok
            if t.kind != "ident":
                self.error("expected a program variable")
            if t.text in self.sampling:
                self.error(f"sampling variable {t.text!r} cannot be assigned", t)
            if t.text not in self.init:
                self.error(f"undeclared variable {t.text!r}", t)
            if t.text in targets:
                self.error(f"variable {t.text!r} assigned twice", t)
            targets.append(t.text)
            self.i += 1
            if not self.accept(","):
                break
        self.expect(":=")
        self.allow_sampling = True
        exprs = [self.expr()]
        while self.accept(","):
            exprs.append(self.expr())
        self.allow_sampling = False
        if len(exprs) != len(targets):
            self.error(f"{len(targets)} targets but {len(exprs)} expressions")
        return Assign(tuple(targets), tuple(exprs), inv)

    def guard(self) -> Guard:
        if self.accept("*"):
            return Star()
        if self.accept("prob"):
            self.expect("(")
            tok = self.tok
            p = self.signed_number()
            self.expect(")")
            if not 0 < p < 1:
                self.error(f"prob({p}) must lie strictly between 0 and 1", tok)
            return Prob(p)
        return self.predicate()

    # predicates
    def predicate(self) -> Predicate:
        parts = [self.conjunction()]
        while self.accept("or"):
            parts.append(self.conjunction())
        return disj(*parts) if len(parts) > 1 else parts[0]

    def conjunction(self) -> Predicate:
        parts = [self.literal()]
        while self.accept("and"):
            parts.append(self.literal())
        return And(tuple(parts)) if len(parts) > 1 else parts[0]

    def literal(self) -> Predicate:
        if self.accept("not"):
            return Not(self.literal())
        if self.accept("true"):
            return TRUE
        if self.accept("false"):
            return FALSE
        if self.at("("):
            save = self.i
            self.i += 1
            try:
                inner = self.predicate()
                if self.accept(")") and not self._continues_expression():
                    return inner
            except ParseError:
                pass
            self.i = save
        return self.comparison()

    def _continues_expression(self) -> bool:
        return self.tok.kind == "op" and self.tok.text in _RELATIONS + ("+", "-", "*", "/", "^")

    def comparison(self) -> Predicate:
        lhs = self.expr()
        if not (self.tok.kind == "op" and self.tok.text in _RELATIONS):
            self.error("expected a comparison (<, <=, >, >=)")
        atoms = []
        while self.tok.kind == "op" and self.tok.text in _RELATIONS:
            rel = self.tok.text
            self.i += 1
            rhs = self.expr()
            atoms.append(Atom(Constraint.compare(lhs, rel, rhs)))
            lhs = rhs
        return atoms[0] if len(atoms) == 1 else And(tuple(atoms))

    # arithmetic
    def expr(self) -> Polynomial:
        p = self.term()
        while self.at("+") or self.at("-"):
            op = self.tok.text
            self.i += 1
            q = self.term()
            p = p + q if op == "+" else p - q
        return p

    def term(self) -> Polynomial:
        p = self.unary()
        while self.at("*") or self.at("/"):
            op = self.tok.text
            tok = self.tok
            self.i += 1
            q = self.unary()
            if op == "*":
                p = p * q
            else:
                if not q.is_constant() or q.is_zero():
                    self.error("division only by a nonzero constant", tok)
                p = p.scale(1 / q.constant_value())
        return p

    def unary(self) -> Polynomial:
        if self.accept("-"):
            return -self.unary()
        if self.accept("+"):
            return self.unary()
        return self.power()

    def power(self) -> Polynomial:
        base = self.atom()
        if self.accept("^"):
            if self.tok.kind != "num" or not self.tok.text.isdigit():
                self.error("exponent must be a nonnegative integer")
            n = int(self.tok.text)
            self.i += 1
            base = base**n
        return base

    def atom(self) -> Polynomial:
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return Polynomial.const(Fraction(t.text))
        if t.kind == "ident":
            self.i += 1
            if t.text in self.sampling:
                if not self.allow_sampling:
                    self.error(f"sampling variable {t.text!r} may only appear on assignment right-hand sides", t)
                return Polynomial.var(t.text)
            if t.text not in self.init:
                self.error(f"undeclared variable {t.text!r}", t)
            return Polynomial.var(t.text)
        if self.accept("("):
            p = self.expr()
            self.expect(")")
            return p
        self.error(f"expected an expression, found {t.text or 'end of input'!r}")


def parse(text: str) -> Program:
    """Parse program source text into a :class:`Program`."""
    return _Parser(text).program()


def parse_predicate(text: str, variables: Iterable[str]) -> Predicate:
    p = _Parser(text)
    p.init = {v: Fraction(0) for v in variables}
    out = p.predicate()
    if p.tok.kind != "eof":
        p.error(f"unexpected {p.tok.text!r}")
    return out


def parse_polynomial(text: str, variables: Iterable[str] | None = None) -> Polynomial:
    """Parse an arithmetic expression.  ``variables=None`` accepts any name."""
    p = _Parser(text)
    if variables is None:
        names = {t.text for t in p.toks if t.kind == "ident"}
    else:
        names = set(variables)
    p.init = {v: Fraction(0) for v in names}
    out = p.expr()
    if p.tok.kind != "eof":
        p.error(f"unexpected {p.tok.text!r}")
    return out


# ---------------------------------------------------------------------------
# printer
# ---------------------------------------------------------------------------


def format_program(prog: Program) -> str:
    lines = []
    for name, d in prog.sampling:
        lines.append(f"dist {name} = {d}")
    for name, v in prog.init:
        lines.append(f"init {name} = {_fmt_coeff(v)}")
    lines.extend(_format_stmt(prog.body, 0, prog.variables))
    if prog.terminal_invariant is not None:
        lines.append(f"[{prog.terminal_invariant}]")
    return "\n".join(lines) + "\n"


def _format_stmt(s: Stmt, indent: int, order) -> list[str]:
    pad = "  " * indent
    out = []
    if getattr(s, "invariant", None) is not None and not isinstance(s, Seq):
        out.append(f"{pad}[{s.invariant}]")
    if isinstance(s, Skip):
        out.append(f"{pad}skip")
    elif isinstance(s, Assign):
        rhs = ", ".join(e.format(order) for e in s.exprs)
        out.append(f"{pad}{', '.join(s.targets)} := {rhs}")
    elif isinstance(s, While):
        out.append(f"{pad}while {s.cond} do")
        out.extend(_format_stmt(s.body, indent + 1, order))
        out.append(f"{pad}od")
    elif isinstance(s, If):
        out.append(f"{pad}if {s.guard} then")
        out.extend(_format_stmt(s.then, indent + 1, order))
        out.append(f"{pad}else")
        out.extend(_format_stmt(s.orelse, indent + 1, order))
        out.append(f"{pad}fi")
    elif isinstance(s, Seq):
        for k, sub in enumerate(s.stmts):
            block = _format_stmt(sub, indent, order)
            if k < len(s.stmts) - 1:
                block[-1] += ";"
            out.extend(block)
    else:
        raise TypeError(s)
    return out
