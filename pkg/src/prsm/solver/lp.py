"""Exact rational linear programming: two-phase tableau simplex.

The tableau is stored as sparse ``dict`` rows of :class:`fractions.Fraction`,
which keeps pivots cheap on the very sparse systems produced by the
Handelman encoding.  Entering columns are chosen by Dantzig's rule and ties
in the ratio test are broken lexicographically against the starting
identity, which rules out cycling on the heavily degenerate systems the
encodings produce.  As a last resort, a very long run of degenerate pivots
switches the phase over to Bland's rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from ..poly import AffineExpr, _fmt_coeff, to_fraction

NONNEG = "nonneg"
FREE = "free"

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass
class LPProblem:
    """``minimize c.x`` subject to equality rows and sign restrictions.

    ``equalities`` holds ``(coeffs, rhs)`` pairs meaning
    ``sum(coeffs[v] * v) == rhs``.
    """

    variables: dict[str, str] = field(default_factory=dict)
    equalities: list[tuple[dict[str, Fraction], Fraction]] = field(default_factory=list)
    objective: dict[str, Fraction] | None = None
    objective_constant: Fraction = Fraction(0)

    def add_variable(self, name: str, kind: str = NONNEG) -> None:
        if kind not in (NONNEG, FREE):
            raise ValueError(f"unknown variable kind {kind!r}")
        old = self.variables.get(name)
        if old is not None and old != kind:
            raise ValueError(f"variable {name} declared both {old} and {kind}")
        self.variables[name] = kind

    def add_equality(self, coeffs: Mapping[str, object], rhs=0) -> None:
        row = {}
        for v, c in coeffs.items():
            if v not in self.variables:
                raise KeyError(f"undeclared LP variable {v}")
            c = to_fraction(c)
            if c:
                row[v] = c
        self.equalities.append((row, to_fraction(rhs)))

    def add_affine_zero(self, expr: AffineExpr) -> None:
        """Add the constraint ``expr == 0``."""
        self.add_equality(expr.coeffs, -expr.constant)

    def set_objective(self, expr: AffineExpr | Mapping[str, object] | None) -> None:
        if expr is None:
            self.objective = None
            self.objective_constant = Fraction(0)
            return
        if isinstance(expr, AffineExpr):
            self.objective = expr.coeffs
            self.objective_constant = expr.constant
        else:
            self.objective = {v: to_fraction(c) for v, c in expr.items()}
            self.objective_constant = Fraction(0)
        for v in self.objective:
            if v not in self.variables:
                raise KeyError(f"objective references undeclared variable {v}")

    def check(self, values: Mapping[str, Fraction]) -> list[str]:
        """Problems with ``values`` as a solution; empty when it is feasible."""
        problems = []
        for v, kind in self.variables.items():
            if kind == NONNEG and values.get(v, 0) < 0:
                problems.append(f"{v} = {values[v]} is negative")
        for i, (row, rhs) in enumerate(self.equalities):
            lhs = sum((c * values.get(v, 0) for v, c in row.items()), Fraction(0))
            if lhs != rhs:
                problems.append(f"row {i}: {lhs} != {rhs}")
        return problems

    def objective_value(self, values: Mapping[str, Fraction]) -> Fraction | None:
        if self.objective is None:
            return None
        return self.objective_constant + sum(
            (c * values.get(v, 0) for v, c in self.objective.items()), Fraction(0)
        )

    def dump(self) -> str:
        """Human-readable listing for debugging."""

        def lin(row):
            if not row:
                return "0"
            return " + ".join(f"{_fmt_coeff(c)}*{v}" for v, c in sorted(row.items()))

        lines = []
        if self.objective is not None:
            lines.append(f"minimize {lin(self.objective)} + {_fmt_coeff(self.objective_constant)}")
        else:
            lines.append("feasibility")
        lines.append("subject to")
        for row, rhs in self.equalities:
            lines.append(f"  {lin(row)} = {_fmt_coeff(rhs)}")
        free = sorted(v for v, k in self.variables.items() if k == FREE)
        nonneg = sorted(v for v, k in self.variables.items() if k == NONNEG)
        if nonneg:
            lines.append("nonnegative " + " ".join(nonneg))
        if free:
            lines.append("free " + " ".join(free))
        return "\n".join(lines)


@dataclass
class LPResult:
    status: str
    values: dict[str, Fraction] = field(default_factory=dict)
    objective: Fraction | None = None
    pivots: int = 0

    @property
    def feasible(self) -> bool:
        return self.status == OPTIMAL


class _Tableau:
    """Sparse tableau; ``rows[i]`` includes the basic column with value 1."""

    def __init__(self, rows, rhs, basis, ncols):
        self.rows: list[dict[int, Fraction]] = rows
        self.rhs: list[Fraction] = rhs
        self.basis: list[int] = basis
        self.ncols = ncols
        self.pivots = 0
        # columns of the starting identity, used for lexicographic tie breaks
        self.lex_cols: range = range(0)

    def pivot(self, r: int, e: int, obj: dict[int, Fraction], objval: list) -> None:
        row = self.rows[r]
        p = row[e]
        if p != 1:
            inv = 1 / p
            row = {j: v * inv for j, v in row.items()}
            self.rows[r] = row
            self.rhs[r] *= inv
        b = self.rhs[r]
        for i, other in enumerate(self.rows):
            if i == r:
                continue
            f = other.get(e)
            if f is None:
                continue
            _axpy(other, -f, row)
            if b:
                self.rhs[i] -= f * b
        f = obj.get(e)
        if f is not None:
            _axpy(obj, -f, row)
            objval[0] -= f * b
        self.basis[r] = e
        self.pivots += 1

    def run(self, obj, objval, allowed, max_degenerate=5000) -> str:
        """Minimise; ``obj`` holds reduced costs, ``objval[0]`` minus the value."""
        bland = False
        degenerate = 0
        while True:
            e = None
            if bland:
                for j in sorted(obj):
                    if obj[j] < 0 and allowed(j):
                        e = j
                        break
            else:
                best = 0
                for j, d in obj.items():
                    if d < best and allowed(j):
                        best, e = d, j
                    elif d == best and e is not None and d < 0 and j < e and allowed(j):
                        e = j
            if e is None:
                return OPTIMAL
            ratio = None
            ties: list[int] = []
            for i, row in enumerate(self.rows):
                a = row.get(e)
                if a is None or a <= 0:
                    continue
                q = self.rhs[i] / a
                if ratio is None or q < ratio:
                    ratio, ties = q, [i]
                elif q == ratio:
                    ties.append(i)
            if ratio is None:
                return UNBOUNDED
            r = self._leaving(ties, e, bland)
            if ratio == 0:
                degenerate += 1
                if degenerate > max_degenerate:
                    bland = True
            else:
                degenerate = 0
            self.pivot(r, e, obj, objval)


    def _leaving(self, ties: list[int], e: int, bland: bool) -> int:
        """Pick the leaving row among minimum-ratio ties.

        Ties are split lexicographically on the rows of the starting identity
        divided by the pivot column, which keeps the basis sequence from
        cycling; the smallest basic index decides whatever remains.
        """
        if len(ties) > 1 and not bland:
            for j in self.lex_cols:
                vals = [(self.rows[i].get(j, 0) / self.rows[i][e], i) for i in ties]
                low = min(v for v, _ in vals)
                ties = [i for v, i in vals if v == low]
                if len(ties) == 1:
                    break
        return min(ties, key=lambda i: self.basis[i])


def _axpy(target: dict, f: Fraction, source: dict) -> None:
    """``target += f * source`` in place, dropping exact zeros."""
    for j, v in source.items():
        w = target.get(j)
        if w is None:
            target[j] = f * v
        else:
            w += f * v
            if w:
                target[j] = w
            else:
                del target[j]


def simplex_solve(lp: LPProblem, max_degenerate: int = 5000) -> LPResult:
    """Solve ``lp`` exactly.

    Returns an optimal vertex when an objective is set and a feasible vertex
    otherwise.  The returned values always satisfy every equality exactly.
    """
    # column layout: each nonnegative variable is one column, each free one
    # is split into a positive and a negative part
    cols: dict[str, tuple[int, int | None]] = {}
    n = 0
    for v, kind in lp.variables.items():
        if kind == FREE:
            cols[v] = (n, n + 1)
            n += 2
        else:
            cols[v] = (n, None)
            n += 1
    nstruct = n

    rows: list[dict[int, Fraction]] = []
    rhs: list[Fraction] = []
    for coeffs, b in lp.equalities:
        row: dict[int, Fraction] = {}
        for v, c in coeffs.items():
            pos, neg = cols[v]
            row[pos] = row.get(pos, 0) + c
            if neg is not None:
                row[neg] = row.get(neg, 0) - c
        row = {j: c for j, c in row.items() if c}
        if b < 0:
            row = {j: -c for j, c in row.items()}
            b = -b
        if not row:
            if b:
                return LPResult(INFEASIBLE)
            continue
        rows.append(row)
        rhs.append(Fraction(b))

    m = len(rows)
    basis = []
    for i in range(m):
        rows[i][nstruct + i] = Fraction(1)
        basis.append(nstruct + i)
    tab = _Tableau(rows, rhs, basis, nstruct + m)
    tab.lex_cols = range(nstruct, nstruct + m)

    # phase 1: minimise the sum of artificials
    obj: dict[int, Fraction] = {}
    objval = [Fraction(0)]
    for i in range(m):
        for j, c in rows[i].items():
            if j < nstruct:
                _axpy(obj, Fraction(-1), {j: c})
        objval[0] -= rhs[i]
    status = tab.run(obj, objval, lambda j: j < nstruct, max_degenerate)
    assert status == OPTIMAL
    if objval[0] != 0:
        return LPResult(INFEASIBLE, pivots=tab.pivots)

    # drive remaining artificials out of the basis; drop redundant rows
    keep = []
    for i in range(m):
        if tab.basis[i] >= nstruct:
            e = next((j for j in sorted(tab.rows[i]) if j < nstruct), None)
            if e is None:
                continue
            tab.pivot(i, e, {}, [Fraction(0)])
        keep.append(i)
    tab.rows = [tab.rows[i] for i in keep]
    tab.rhs = [tab.rhs[i] for i in keep]
    tab.basis = [tab.basis[i] for i in keep]

    if lp.objective is not None:
        cost: dict[int, Fraction] = {}
        for v, c in lp.objective.items():
            pos, neg = cols[v]
            cost[pos] = cost.get(pos, 0) + c
            if neg is not None:
                cost[neg] = cost.get(neg, 0) - c
        obj = {j: c for j, c in cost.items() if c}
        objval = [Fraction(0)]
        for i, bvar in enumerate(tab.basis):
            cb = cost.get(bvar)
            if cb:
                _axpy(obj, -cb, tab.rows[i])
                objval[0] -= cb * tab.rhs[i]
        status = tab.run(obj, objval, lambda j: j < nstruct, max_degenerate)
        if status == UNBOUNDED:
            return LPResult(UNBOUNDED, pivots=tab.pivots)

    x = [Fraction(0)] * nstruct
    for i, bvar in enumerate(tab.basis):
        x[bvar] = tab.rhs[i]
    values = {}
    for v, (pos, neg) in cols.items():
        values[v] = x[pos] - (x[neg] if neg is not None else 0)
    return LPResult(OPTIMAL, values, lp.objective_value(values), tab.pivots)
