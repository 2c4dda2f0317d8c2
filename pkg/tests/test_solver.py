import io
import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prsm import certify
from prsm.extract import PatternInstance
from prsm.poly import AffineExpr, Polynomial, SymbolicPolynomial
from prsm.solver import (
    FREE,
    INFEASIBLE,
    NONNEG,
    OPTIMAL,
    UNBOUNDED,
    LPProblem,
    SDPDimensionError,
    SDPFormatError,
    SDPProblem,
    SDPSolution,
    parse_solution,
    read_sdpa,
    residuals,
    sdp_emit,
    sdp_ingest,
)
from prsm.solver.lp import simplex_solve

x = Polynomial.var("x")


# ---------------------------------------------------------------------------
# exact oracle: enumerate basic feasible solutions of {A v = b, v >= 0}
# ---------------------------------------------------------------------------

def _solve_square(M, rhs):
    """Gauss-Jordan over Fractions; None when M is singular."""
    n = len(M)
    aug = [[Fraction(v) for v in row] + [Fraction(r)] for row, r in zip(M, rhs)]
    for c in range(n):
        p = next((r for r in range(c, n) if aug[r][c] != 0), None)
        if p is None:
            return None
        aug[c], aug[p] = aug[p], aug[c]
        piv = aug[c][c]
        aug[c] = [v / piv for v in aug[c]]
        for r in range(n):
            if r != c and aug[r][c] != 0:
                f = aug[r][c]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[c])]
    return [aug[i][n] for i in range(n)]


def vertex_optimum(A, b, c):
    """Minimum of c.v over the vertices; assumes A has full row rank."""
    m, n = len(A), len(A[0])
    best = None
    for cols in itertools.combinations(range(n), m):
        sub = [[A[i][j] for j in cols] for i in range(m)]
        sol = _solve_square(sub, b)
        if sol is None or any(v < 0 for v in sol):
            continue
        val = sum(c[j] * v for j, v in zip(cols, sol))
        best = val if best is None or val < best else best
    return best


def lp_from_matrix(A, b, c=None) -> LPProblem:
    lp = LPProblem()
    names = [f"v{j}" for j in range(len(A[0]))]
    for v in names:
        lp.add_variable(v)
    for row, rhs in zip(A, b):
        lp.add_equality({v: a for v, a in zip(names, row)}, rhs)
    if c is not None:
        lp.set_objective({v: cj for v, cj in zip(names, c)})
    return lp


# ---------------------------------------------------------------------------
# simplex
# ---------------------------------------------------------------------------

def test_handelman_fixture_lp():
    inst = PatternInstance((1 - x, 1 + x), SymbolicPolynomial.lift(2 - x), "C4", 1)
    enc = certify.handelman_encode(inst, 2)
    lp = LPProblem()
    for u in enc.unknowns:
        lp.add_variable(u)
    for eq in enc.equalities:
        lp.add_affine_zero(eq)
    res = simplex_solve(lp)
    assert res.status == OPTIMAL
    assert lp.check(res.values) == []
    w = certify.HandelmanWitness([p for _, p in enc.products], [res.values[u] for u in enc.unknowns])
    assert certify.check_handelman_witness(inst, w)


def test_infeasible_sign_restriction():
    lp = LPProblem()
    lp.add_variable("a")
    lp.add_equality({"a": 1}, -1)
    assert simplex_solve(lp).status == INFEASIBLE


def test_minimize_with_slack():
    lp = LPProblem()
    lp.add_variable("x", FREE)
    lp.add_variable("s", NONNEG)
    lp.add_equality({"x": 1, "s": -1}, 3)
    lp.set_objective({"x": 1})
    res = simplex_solve(lp)
    assert res.status == OPTIMAL and res.objective == 3 and res.values["x"] == 3


def test_unbounded():
    lp = LPProblem()
    lp.add_variable("x", FREE)
    lp.add_variable("s")
    lp.add_equality({"x": 1, "s": -1}, 3)
    lp.set_objective({"x": -1})
    assert simplex_solve(lp).status == UNBOUNDED


def test_inconsistent_empty_row_and_redundant_rows():
    lp = LPProblem()
    lp.add_variable("a")
    lp.add_variable("b")
    lp.add_equality({"a": 1, "b": 1}, 2)
    lp.add_equality({"a": 2, "b": 2}, 4)  # redundant copy
    res = simplex_solve(lp)
    assert res.status == OPTIMAL and lp.check(res.values) == []
    lp.add_equality({}, 1)
    assert simplex_solve(lp).status == INFEASIBLE


def test_declaration_errors():
    lp = LPProblem()
    lp.add_variable("a")
    with pytest.raises(KeyError):
        lp.add_equality({"b": 1}, 0)
    with pytest.raises(ValueError):
        lp.add_variable("a", FREE)
    assert "nonnegative a" in lp.dump()


# Chvatal's variant of Beale's example: Dantzig with naive tie breaking cycles here
BEALE_A = [
    [Fraction(1, 4), -8, -1, 9, 1, 0, 0],
    [Fraction(1, 2), -12, Fraction(-1, 2), 3, 0, 1, 0],
    [0, 0, 1, 0, 0, 0, 1],
]
BEALE_B = [0, 0, 1]
BEALE_C = [Fraction(-3, 4), 20, Fraction(-1, 2), 6, 0, 0, 0]


@pytest.mark.parametrize("max_degenerate", [0, 5000])
def test_degenerate_cycling_instance_terminates(max_degenerate):
    lp = lp_from_matrix(BEALE_A, BEALE_B, BEALE_C)
    res = simplex_solve(lp, max_degenerate=max_degenerate)
    assert res.status == OPTIMAL
    assert lp.check(res.values) == []
    assert res.objective == vertex_optimum(BEALE_A, BEALE_B, BEALE_C)


def test_many_zero_rows_terminate():
    # a stack of degenerate rows that all meet at the origin
    n = 8
    A = [[(i * j) % 5 - 2 for j in range(n)] + [1 if k == i else 0 for k in range(n)] for i in range(n)]
    b = [0] * n
    c = [-1] * n + [0] * n
    A.append([1] * n + [0] * n)
    b.append(1)
    lp = lp_from_matrix(A, b, c)
    res = simplex_solve(lp)
    assert res.status in (OPTIMAL, INFEASIBLE)
    if res.status == OPTIMAL:
        assert lp.check(res.values) == []
        assert res.objective == lp.objective_value(res.values)


ints = st.integers(-4, 4)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3), st.integers(2, 5), st.data())
def test_random_feasible_lps(m, extra, data):
    n = m + extra
    A = [[data.draw(ints) for _ in range(n)] for _ in range(m)]
    x0 = [data.draw(st.integers(0, 3)) for _ in range(n)]
    b = [sum(a * v for a, v in zip(row, x0)) for row in A]
    c = [data.draw(st.integers(0, 5)) for _ in range(n)]
    lp = lp_from_matrix(A, b, c)
    res = simplex_solve(lp)
    assert res.status == OPTIMAL
    assert lp.check(res.values) == []
    assert res.objective == lp.objective_value(res.values)
    assert res.objective <= sum(ci * v for ci, v in zip(c, x0))
    # vertex enumeration needs full row rank: some m x m submatrix is invertible
    full_rank = any(
        _solve_square([[A[i][j] for j in cols] for i in range(m)], [0] * m) is not None
        for cols in itertools.combinations(range(n), m)
    )
    if full_rank:
        assert res.objective == vertex_optimum(A, b, c)


# ---------------------------------------------------------------------------
# SDPA exchange
# ---------------------------------------------------------------------------

def test_emit_structure():
    sdp = SDPProblem()
    blk = sdp.add_block("Q", 2)
    sdp.equalities.append(AffineExpr(-1, {blk.entries[(0, 0)]: 1, blk.entries[(1, 1)]: 1}))
    sdp.objective = AffineExpr(0, {blk.entries[(0, 1)]: 1})
    lines = sdp_emit(sdp).splitlines()
    assert lines[:4] == ["1", "1", "2", "1"]
    body = lines[4:]
    assert len(body) == 3
    assert "1 1 1 1 1" in body and "1 1 2 2 1" in body
    # off-diagonal unknown stands for both symmetric positions
    assert "0 1 1 2 -0.5" in body


def test_emit_empty_problem():
    assert sdp_emit(SDPProblem()).splitlines() == ["0", "0", "", ""]
    data = read_sdpa(sdp_emit(SDPProblem()))
    assert data.m == 0 and data.block_sizes == []


def test_emit_uses_seventeen_digits():
    sdp = SDPProblem()
    blk = sdp.add_block("Q", 1)
    sdp.equalities.append(AffineExpr(Fraction(-1, 3), {blk.entries[(0, 0)]: 1}))
    text = sdp_emit(sdp)
    assert "0.33333333333333331" in text
    assert read_sdpa(text).c == [1 / 3]


def _putinar_fixture():
    inst = PatternInstance((1 - x**2,), SymbolicPolynomial.lift(2 - x**2), "C2", 1)
    return inst, certify.assemble([inst], certify.PUTINAR, 2)


def test_putinar_block_sizes():
    _, ap = _putinar_fixture()
    data = read_sdpa(sdp_emit(ap.problem))
    assert data.block_sizes == [2, 2]


def test_free_scalars_become_diagonal_block():
    inst = PatternInstance((1 - x**2,), SymbolicPolynomial({x.monomials()[0]: AffineExpr.unknown("a")}) + 2, "C2", 1)
    ap = certify.assemble([inst], certify.PUTINAR, 2)
    assert read_sdpa(sdp_emit(ap.problem)).block_sizes == [2, 2, -2]


def test_round_trip_hand_solution(tmp_path):
    inst, ap = _putinar_fixture()
    path = tmp_path / "p.dat-s"
    text = sdp_emit(ap.problem, str(path))
    assert path.read_text() == text
    data = read_sdpa(str(path))
    e00 = np.array([[1.0, 0.0], [0.0, 0.0]])
    sol = SDPSolution([0.0] * data.m, [e00, e00])
    assign = sdp_ingest(io.StringIO(sol.text(data.block_sizes)), ap.problem)
    assert max(residuals(ap.problem, assign.values), default=0.0) == 0.0
    (w,) = certify.sos_witnesses(ap, assign.values)
    ok, res = certify.check_sos_witness(inst, w, 1e-6)
    assert ok and res == 0.0


def test_truncated_files_are_rejected():
    _, ap = _putinar_fixture()
    text = sdp_emit(ap.problem)
    with pytest.raises(SDPFormatError):
        read_sdpa("\n".join(text.splitlines()[:2]))
    broken = text.rstrip("\n").rsplit(" ", 1)[0]
    with pytest.raises(SDPFormatError):
        read_sdpa(broken)
    with pytest.raises(SDPFormatError):
        parse_solution("", [2, 2])


def test_wrong_block_counts():
    _, ap = _putinar_fixture()
    with pytest.raises(SDPDimensionError):
        sdp_ingest("0 0 0\n2 3 1 1 1.0\n", ap.problem)
    with pytest.raises(SDPDimensionError):
        read_sdpa("1\n2\n2\n1\n1 1 1 1 1\n")
    one_block = SDPSolution([0.0] * 3, [np.eye(2)]).text([2])
    with pytest.raises(SDPDimensionError):
        sdp_ingest(one_block, ap.problem)


def test_diagonal_block_rejects_off_diagonal_entries():
    with pytest.raises(SDPDimensionError):
        read_sdpa("1\n1\n-2\n1\n1 1 1 2 1\n")
