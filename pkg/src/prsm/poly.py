"""Exact multivariate polynomials over named variables.

Coefficients are :class:`fractions.Fraction`.  Two flavours exist:

* :class:`Polynomial` -- concrete rational coefficients.
* :class:`SymbolicPolynomial` -- coefficients are :class:`AffineExpr`, i.e.
  affine combinations of unknown template coefficients.  Products are only
  allowed when at most one factor carries unknowns, which keeps every
  constraint generated downstream linear in the unknowns.

All objects are immutable after construction.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Mapping, Sequence

import numpy as np

Number = int | Fraction


def to_fraction(value) -> Fraction:
    """Convert ints, Fractions, decimal strings or floats to an exact Fraction.

    Floats convert to their exact binary value; pass a string to get the
    decimal reading (``"0.51"`` -> 51/100).
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, Rational)):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"non-finite coefficient {value!r}")
        return Fraction(value)
    if isinstance(value, np.floating):
        return Fraction(float(value))
    if isinstance(value, np.integer):
        return Fraction(int(value))
    raise TypeError(f"cannot convert {type(value).__name__} to Fraction")


class Monomial:
    """A power product ``x1^e1 * ... * xn^en`` with positive exponents.

    Stored as a tuple of ``(name, exponent)`` pairs sorted by name so that
    equal monomials hash equally regardless of construction order.
    """

    __slots__ = ("_items", "_hash")

    def __init__(self, exponents: Mapping[str, int] | Iterable[tuple[str, int]] = ()):
        items = dict(exponents)
        for name, e in items.items():
            if not isinstance(e, int) or e < 0:
                raise ValueError(f"bad exponent {e!r} for {name}")
        self._items = tuple(sorted((n, e) for n, e in items.items() if e))
        self._hash = hash(self._items)

    @classmethod
    def var(cls, name: str, power: int = 1) -> "Monomial":
        return cls({name: power})

    @property
    def exponents(self) -> dict[str, int]:
        return dict(self._items)

    @property
    def items(self) -> tuple[tuple[str, int], ...]:
        return self._items

    @property
    def degree(self) -> int:
        return sum(e for _, e in self._items)

    @property
    def variables(self) -> frozenset[str]:
        return frozenset(n for n, _ in self._items)

    def exponent(self, name: str) -> int:
        for n, e in self._items:
            if n == name:
                return e
        return 0

    def is_one(self) -> bool:
        return not self._items

    def __mul__(self, other: "Monomial") -> "Monomial":
        exps = dict(self._items)
        for n, e in other._items:
            exps[n] = exps.get(n, 0) + e
        return Monomial(exps)

    def __eq__(self, other) -> bool:
        return isinstance(other, Monomial) and self._items == other._items

    def __hash__(self) -> int:
        return self._hash

    def sort_key(self, order: Sequence[str] | None = None) -> tuple:
        """Graded lexicographic key with respect to ``order``.

        Variables not in ``order`` sort after it, alphabetically.
        """
        if order is None:
            order = ()
        names = list(order) + sorted(self.variables - set(order))
        return (self.degree, tuple(-self.exponent(n) for n in names))

    def __lt__(self, other: "Monomial") -> bool:
        allv = sorted(self.variables | other.variables)
        return self.sort_key(allv) < other.sort_key(allv)

    def __str__(self) -> str:
        if not self._items:
            return "1"
        return "*".join(n if e == 1 else f"{n}^{e}" for n, e in self._items)

    __repr__ = __str__


ONE = Monomial()


def _full_order(order: Sequence[str] | None, variables: Iterable[str]) -> list[str]:
    order = list(order or ())
    return order + sorted(set(variables) - set(order))


def monomials_up_to_degree(variables: Sequence[str], d: int) -> list[Monomial]:
    """All monomials over ``variables`` of degree <= d in graded-lex order."""
    if d < 0:
        raise ValueError("degree must be nonnegative")
    variables = list(variables)
    out = []
    for deg in range(d + 1):
        # combinations_with_replacement yields graded-lex order within a degree
        for combo in itertools.combinations_with_replacement(range(len(variables)), deg):
            exps: dict[str, int] = {}
            for i in combo:
                exps[variables[i]] = exps.get(variables[i], 0) + 1
            out.append(Monomial(exps))
    return out


def _fmt_coeff(c: Fraction) -> str:
    """Exact, parseable rendering: integer, terminating decimal, or (p/q)."""
    if c < 0:
        return "-" + _fmt_coeff(-c)
    if c.denominator == 1:
        return str(c.numerator)
    d, twos, fives = c.denominator, 0, 0
    while d % 2 == 0:
        d, twos = d // 2, twos + 1
    while d % 5 == 0:
        d, fives = d // 5, fives + 1
    if d != 1:
        return f"({c.numerator}/{c.denominator})"
    digits = max(twos, fives)
    scaled = str((c * 10**digits).numerator).rjust(digits + 1, "0")
    return f"{scaled[:-digits]}.{scaled[-digits:]}"


def _format_terms(pairs: list[tuple[Monomial, str, bool]]) -> str:
    """Join ``(monomial, magnitude-string, negative)`` triples."""
    if not pairs:
        return "0"
    parts = []
    for i, (m, mag, neg) in enumerate(pairs):
        if m.is_one():
            body = mag
        elif mag == "1":
            body = str(m)
        else:
            body = f"{mag}*{m}"
        if i == 0:
            parts.append(f"-{body}" if neg else body)
        else:
            parts.append(f" - {body}" if neg else f" + {body}")
    return "".join(parts)


class Polynomial:
    """Polynomial with exact rational coefficients in canonical form."""

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms: Mapping[Monomial, Number] | None = None):
        t: dict[Monomial, Fraction] = {}
        if terms:
            for m, c in terms.items():
                c = to_fraction(c)
                if c:
                    t[m] = t.get(m, Fraction(0)) + c
                    if not t[m]:
                        del t[m]
        self._terms = t
        self._hash = None

    # construction helpers -------------------------------------------------
    @classmethod
    def const(cls, c) -> "Polynomial":
        return cls({ONE: to_fraction(c)})

    @classmethod
    def var(cls, name: str) -> "Polynomial":
        return cls({Monomial.var(name): 1})

    @classmethod
    def _raw(cls, terms: dict[Monomial, Fraction]) -> "Polynomial":
        p = cls.__new__(cls)
        p._terms = terms
        p._hash = None
        return p

    # accessors --------------------------------------------------------------
    @property
    def terms(self) -> dict[Monomial, Fraction]:
        return dict(self._terms)

    def coefficient(self, m: Monomial) -> Fraction:
        return self._terms.get(m, Fraction(0))

    @property
    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        return max((m.degree for m in self._terms), default=-1)

    @property
    def variables(self) -> frozenset[str]:
        out: set[str] = set()
        for m in self._terms:
            out |= m.variables
        return frozenset(out)

    def is_zero(self) -> bool:
        return not self._terms

    def is_constant(self) -> bool:
        return all(m.is_one() for m in self._terms)

    def constant_value(self) -> Fraction:
        return self._terms.get(ONE, Fraction(0))

    def monomials(self) -> list[Monomial]:
        return list(self._terms)

    # arithmetic -------------------------------------------------------------
    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            return other
        return Polynomial.const(other)

    def __add__(self, other):
        if isinstance(other, SymbolicPolynomial):
            return SymbolicPolynomial.lift(self) + other
        other = self._coerce(other)
        t = dict(self._terms)
        for m, c in other._terms.items():
            v = t.get(m, 0) + c
            if v:
                t[m] = v
            else:
                t.pop(m, None)
        return Polynomial._raw(t)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial._raw({m: -c for m, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c) -> "Polynomial":
        c = to_fraction(c)
        if not c:
            return Polynomial()
        return Polynomial._raw({m: v * c for m, v in self._terms.items()})

    def __mul__(self, other):
        if isinstance(other, SymbolicPolynomial):
            return other * self
        if not isinstance(other, Polynomial):
            return self.scale(other)
        t: dict[Monomial, Fraction] = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                m = m1 * m2
                v = t.get(m, 0) + c1 * c2
                if v:
                    t[m] = v
                else:
                    t.pop(m, None)
        return Polynomial._raw(t)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "Polynomial":
        if not isinstance(n, int) or n < 0:
            raise ValueError("exponent must be a nonnegative integer")
        result = Polynomial.const(1)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def __eq__(self, other) -> bool:
        if isinstance(other, SymbolicPolynomial):
            return other == self
        if isinstance(other, (int, Fraction)):
            other = Polynomial.const(other)
        return isinstance(other, Polynomial) and self._terms == other._terms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    # evaluation / composition ----------------------------------------------
    def evaluate(self, point: Mapping[str, Number]) -> Fraction:
        missing = self.variables - set(point)
        if missing:
            raise KeyError(f"missing binding for {sorted(missing)}")
        total = Fraction(0)
        vals = {n: to_fraction(v) for n, v in point.items() if n in self.variables}
        for m, c in self._terms.items():
            term = c
            for n, e in m.items:
                term *= vals[n] ** e
            total += term
        return total

    def substitute(self, subst: Mapping[str, "Polynomial"]) -> "Polynomial":
        """Compose: replace each variable in ``subst`` by its polynomial."""
        return _substitute(self, subst, Polynomial)

    def to_numpy(self, variables: Sequence[str]):
        """Return ``f(*arrays) -> ndarray`` evaluating in float64."""
        idx = {v: i for i, v in enumerate(variables)}
        missing = self.variables - set(idx)
        if missing:
            raise KeyError(f"missing variables {sorted(missing)}")
        terms = [(float(c), [(idx[n], e) for n, e in m.items]) for m, c in self._terms.items()]

        def f(*arrays):
            shape = np.shape(arrays[0]) if arrays else ()
            out = np.zeros(shape, dtype=float)
            for c, powers in terms:
                t = np.full(shape, c)
                for i, e in powers:
                    t = t * arrays[i] ** e
                out = out + t
            return out

        return f

    def sorted_terms(self, order: Sequence[str] | None = None) -> list[tuple[Monomial, Fraction]]:
        order = _full_order(order, self.variables)
        return sorted(self._terms.items(), key=lambda mc: mc[0].sort_key(order), reverse=True)

    def format(self, order: Sequence[str] | None = None) -> str:
        pairs = [(m, _fmt_coeff(abs(c)), c < 0) for m, c in self.sorted_terms(order)]
        return _format_terms(pairs)

    def __str__(self) -> str:
        return self.format()

    def __repr__(self) -> str:
        return f"Polynomial({self.format()})"


def _substitute(p, subst, cls):
    pow_cache: dict[tuple[str, int], Polynomial] = {}

    def power(name: str, e: int) -> Polynomial:
        key = (name, e)
        if key not in pow_cache:
            base = subst[name] if name in subst else Polynomial.var(name)
            pow_cache[key] = base**e
        return pow_cache[key]

    acc: dict[Monomial, object] = {}
    for m, c in p._terms.items():
        term = Polynomial.const(1)
        for n, e in m.items:
            term = term * power(n, e)
        for mm, tc in term._terms.items():
            v = c * tc
            acc[mm] = acc[mm] + v if mm in acc else v
    return cls(acc)


# ---------------------------------------------------------------------------
# affine expressions over unknowns
# ---------------------------------------------------------------------------


class AffineExpr:
    """``constant + sum(coeff[u] * u)`` over unknown identifiers ``u``."""

    __slots__ = ("constant", "_coeffs")

    def __init__(self, constant=0, coeffs: Mapping[str, Number] | None = None):
        self.constant = to_fraction(constant)
        c: dict[str, Fraction] = {}
        if coeffs:
            for u, v in coeffs.items():
                v = to_fraction(v)
                if v:
                    c[u] = v
        self._coeffs = c

    @classmethod
    def unknown(cls, name: str) -> "AffineExpr":
        return cls(0, {name: 1})

    @classmethod
    def _raw(cls, constant: Fraction, coeffs: dict[str, Fraction]) -> "AffineExpr":
        a = cls.__new__(cls)
        a.constant = constant
        a._coeffs = coeffs
        return a

    @property
    def coeffs(self) -> dict[str, Fraction]:
        return dict(self._coeffs)

    @property
    def unknowns(self) -> frozenset[str]:
        return frozenset(self._coeffs)

    def is_constant(self) -> bool:
        return not self._coeffs

    def is_zero(self) -> bool:
        return not self._coeffs and not self.constant

    def __bool__(self) -> bool:
        return not self.is_zero()

    def __add__(self, other) -> "AffineExpr":
        if not isinstance(other, AffineExpr):
            return AffineExpr._raw(self.constant + to_fraction(other), self._coeffs)
        c = dict(self._coeffs)
        for u, v in other._coeffs.items():
            w = c.get(u, 0) + v
            if w:
                c[u] = w
            else:
                c.pop(u, None)
        return AffineExpr._raw(self.constant + other.constant, c)

    __radd__ = __add__

    def __neg__(self) -> "AffineExpr":
        return AffineExpr._raw(-self.constant, {u: -v for u, v in self._coeffs.items()})

    def __sub__(self, other) -> "AffineExpr":
        return self + (-other if isinstance(other, AffineExpr) else -to_fraction(other))

    def __rsub__(self, other) -> "AffineExpr":
        return (-self) + other

    def __mul__(self, k) -> "AffineExpr":
        if isinstance(k, AffineExpr):
            if k.is_constant():
                k = k.constant
            elif self.is_constant():
                return k * self.constant
            else:
                raise ValueError("product of two non-constant affine expressions")
        k = to_fraction(k)
        if not k:
            return AffineExpr()
        return AffineExpr._raw(self.constant * k, {u: v * k for u, v in self._coeffs.items()})

    __rmul__ = __mul__

    def evaluate(self, values: Mapping[str, Number]) -> Fraction:
        missing = set(self._coeffs) - set(values)
        if missing:
            raise KeyError(f"no value for unknowns {sorted(missing)}")
        return self.constant + sum((v * to_fraction(values[u]) for u, v in self._coeffs.items()), Fraction(0))

    def __eq__(self, other) -> bool:
        if not isinstance(other, AffineExpr):
            try:
                other = AffineExpr(to_fraction(other))
            except TypeError:
                return NotImplemented
        return self.constant == other.constant and self._coeffs == other._coeffs

    def __hash__(self) -> int:
        return hash((self.constant, frozenset(self._coeffs.items())))

    def __str__(self) -> str:
        parts = [f"{v}*{u}" for u, v in sorted(self._coeffs.items())]
        if self.constant or not parts:
            parts.insert(0, str(self.constant))
        return " + ".join(parts)

    __repr__ = __str__


class SymbolicPolynomial:
    """Polynomial whose coefficients are :class:`AffineExpr`."""

    __slots__ = ("_terms",)

    def __init__(self, terms: Mapping[Monomial, AffineExpr] | None = None):
        t: dict[Monomial, AffineExpr] = {}
        if terms:
            for m, a in terms.items():
                if not isinstance(a, AffineExpr):
                    a = AffineExpr(a)
                if m in t:
                    a = t[m] + a
                if a.is_zero():
                    t.pop(m, None)
                else:
                    t[m] = a
        self._terms = t

    @classmethod
    def _raw(cls, terms: dict[Monomial, AffineExpr]) -> "SymbolicPolynomial":
        s = cls.__new__(cls)
        s._terms = terms
        return s

    @classmethod
    def lift(cls, p) -> "SymbolicPolynomial":
        if isinstance(p, SymbolicPolynomial):
            return p
        if not isinstance(p, Polynomial):
            p = Polynomial.const(p)
        return cls._raw({m: AffineExpr._raw(c, {}) for m, c in p._terms.items()})

    @classmethod
    def template(cls, monomials: Sequence[Monomial], names: Sequence[str]) -> "SymbolicPolynomial":
        return cls._raw({m: AffineExpr.unknown(n) for m, n in zip(monomials, names)})

    @property
    def terms(self) -> dict[Monomial, AffineExpr]:
        return dict(self._terms)

    def coefficient(self, m: Monomial) -> AffineExpr:
        return self._terms.get(m, AffineExpr())

    @property
    def degree(self) -> int:
        return max((m.degree for m in self._terms), default=-1)

    @property
    def variables(self) -> frozenset[str]:
        out: set[str] = set()
        for m in self._terms:
            out |= m.variables
        return frozenset(out)

    @property
    def unknowns(self) -> frozenset[str]:
        out: set[str] = set()
        for a in self._terms.values():
            out |= a.unknowns
        return frozenset(out)

    def has_unknowns(self) -> bool:
        return any(not a.is_constant() for a in self._terms.values())

    def is_zero(self) -> bool:
        return not self._terms

    def monomials(self) -> list[Monomial]:
        return list(self._terms)

    def __add__(self, other) -> "SymbolicPolynomial":
        other = SymbolicPolynomial.lift(other)
        t = dict(self._terms)
        for m, a in other._terms.items():
            v = t[m] + a if m in t else a
            if v.is_zero():
                t.pop(m, None)
            else:
                t[m] = v
        return SymbolicPolynomial._raw(t)

    __radd__ = __add__

    def __neg__(self) -> "SymbolicPolynomial":
        return SymbolicPolynomial._raw({m: -a for m, a in self._terms.items()})

    def __sub__(self, other) -> "SymbolicPolynomial":
        return self + (-SymbolicPolynomial.lift(other))

    def __rsub__(self, other) -> "SymbolicPolynomial":
        return SymbolicPolynomial.lift(other) + (-self)

    def scale(self, k) -> "SymbolicPolynomial":
        k = to_fraction(k)
        if not k:
            return SymbolicPolynomial()
        return SymbolicPolynomial._raw({m: a * k for m, a in self._terms.items()})

    def __mul__(self, other) -> "SymbolicPolynomial":
        if isinstance(other, SymbolicPolynomial):
            if other.has_unknowns() and self.has_unknowns():
                raise ValueError("product of two unknown-carrying polynomials is not linear")
            if self.has_unknowns():
                other = other.to_polynomial()
            else:
                return other * self.to_polynomial()
        if not isinstance(other, Polynomial):
            return self.scale(other)
        t: dict[Monomial, AffineExpr] = {}
        for m1, a in self._terms.items():
            for m2, c in other._terms.items():
                m = m1 * m2
                v = t[m] + a * c if m in t else a * c
                if v.is_zero():
                    t.pop(m, None)
                else:
                    t[m] = v
        return SymbolicPolynomial._raw(t)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if isinstance(other, (Polynomial, int, Fraction)):
            other = SymbolicPolynomial.lift(other)
        return isinstance(other, SymbolicPolynomial) and self._terms == other._terms

    def __hash__(self) -> int:
        return hash(frozenset(self._terms.items()))

    def substitute(self, subst: Mapping[str, Polynomial]) -> "SymbolicPolynomial":
        return _substitute(self, subst, SymbolicPolynomial)

    def instantiate(self, values: Mapping[str, Number]) -> Polynomial:
        """Replace every unknown by its value; all unknowns must be bound."""
        return Polynomial({m: a.evaluate(values) for m, a in self._terms.items()})

    def partial_instantiate(self, values: Mapping[str, Number]) -> "SymbolicPolynomial":
        t = {}
        for m, a in self._terms.items():
            const = a.constant
            rest = {}
            for u, v in a._coeffs.items():
                if u in values:
                    const += v * to_fraction(values[u])
                else:
                    rest[u] = v
            t[m] = AffineExpr(const, rest)
        return SymbolicPolynomial(t)

    def to_polynomial(self) -> Polynomial:
        if self.has_unknowns():
            raise ValueError("polynomial still carries unknowns")
        return Polynomial({m: a.constant for m, a in self._terms.items()})

    def format(self, order: Sequence[str] | None = None) -> str:
        order = _full_order(order, self.variables)
        items = sorted(self._terms.items(), key=lambda ma: ma[0].sort_key(order), reverse=True)
        pairs = []
        for m, a in items:
            if a.is_constant():
                pairs.append((m, _fmt_coeff(abs(a.constant)), a.constant < 0))
            else:
                pairs.append((m, f"({a})", False))
        return _format_terms(pairs)

    def __str__(self) -> str:
        return self.format()

    def __repr__(self) -> str:
        return f"SymbolicPolynomial({self.format()})"


# ---------------------------------------------------------------------------
# distributions of sampling variables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Distribution:
    """Bounded distribution: finite point masses or a uniform interval."""

    kind: str
    points: tuple[tuple[Fraction, Fraction], ...] = ()
    lo: Fraction | None = None
    hi: Fraction | None = None

    def __post_init__(self):
        if self.kind == "discrete":
            if not self.points:
                raise ValueError("discrete distribution needs at least one point")
            if any(p <= 0 for _, p in self.points):
                raise ValueError("discrete probabilities must be positive")
            if sum(p for _, p in self.points) != 1:
                raise ValueError("discrete probabilities must sum to 1")
        elif self.kind == "uniform":
            if self.lo is None or self.hi is None or not self.lo < self.hi:
                raise ValueError("uniform(lo, hi) requires lo < hi")
        else:
            raise ValueError(f"unknown distribution kind {self.kind!r}")

    @classmethod
    def discrete(cls, points: Iterable[tuple]) -> "Distribution":
        pts = tuple((to_fraction(v), to_fraction(p)) for v, p in points)
        return cls("discrete", points=pts)

    @classmethod
    def uniform(cls, lo, hi) -> "Distribution":
        return cls("uniform", lo=to_fraction(lo), hi=to_fraction(hi))

    @property
    def support(self) -> tuple[Fraction, Fraction]:
        if self.kind == "uniform":
            return self.lo, self.hi
        vals = [v for v, _ in self.points]
        return min(vals), max(vals)

    def moment(self, k: int) -> Fraction:
        if k < 0:
            raise ValueError("moment order must be nonnegative")
        if k == 0:
            return Fraction(1)
        if self.kind == "discrete":
            return sum((p * v**k for v, p in self.points), Fraction(0))
        a, b = self.lo, self.hi
        return (b ** (k + 1) - a ** (k + 1)) / ((k + 1) * (b - a))

    def sample(self, rng: np.random.Generator, size=None):
        if self.kind == "uniform":
            return rng.uniform(float(self.lo), float(self.hi), size=size)
        vals = np.array([float(v) for v, _ in self.points])
        probs = np.array([float(p) for _, p in self.points])
        probs = probs / probs.sum()
        return vals[rng.choice(len(vals), size=size, p=probs)]

    def __str__(self) -> str:
        if self.kind == "uniform":
            return f"uniform({_fmt_coeff(self.lo)}, {_fmt_coeff(self.hi)})"
        inner = ", ".join(f"{_fmt_coeff(v)}: {_fmt_coeff(p)}" for v, p in self.points)
        return "discrete{" + inner + "}"


def moment(d: Distribution, k: int) -> Fraction:
    return d.moment(k)


def expect_samplings(p, dists: Mapping[str, Distribution], sampling: Iterable[str] | None = None):
    """Integrate out the sampling variables named in ``dists``.

    Each monomial ``x^a * r^b`` becomes ``x^a * prod_i E[r_i^b_i]``; the
    sampling variables are independent.  Works for both polynomial kinds.
    If ``sampling`` is given, every one of those variables occurring in ``p``
    must have a distribution.
    """
    if sampling is not None:
        missing = (set(p.variables) & set(sampling)) - set(dists)
        if missing:
            raise KeyError(f"no distribution for sampling variable(s) {sorted(missing)}")
    out: dict[Monomial, object] = {}
    for m, c in p._terms.items():
        factor = Fraction(1)
        keep = {}
        for n, e in m.items:
            if n in dists:
                factor *= dists[n].moment(e)
            else:
                keep[n] = e
        if not factor:
            continue
        mm = Monomial(keep)
        v = c * factor
        out[mm] = out[mm] + v if mm in out else v
    if isinstance(p, SymbolicPolynomial):
        return SymbolicPolynomial(out)
    return Polynomial(out)


def poly_mul(p, q):
    return p * q


def substitute(p, subst: Mapping[str, Polynomial]):
    return p.substitute(subst)


def evaluate(p: Polynomial, point: Mapping[str, Number]) -> Fraction:
    return p.evaluate(point)


def var(name: str) -> Polynomial:
    return Polynomial.var(name)


def const(c) -> Polynomial:
    return Polynomial.const(c)
