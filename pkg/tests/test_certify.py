from fractions import Fraction
from math import comb

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prsm import certify, programs
from prsm.certify import (
    HANDELMAN,
    PUTINAR,
    SCHMUEDGEN,
    Certificate,
    EncodingError,
    HandelmanWitness,
    SOSWitness,
    assemble,
    check_handelman_witness,
    check_sos_witness,
    concentration_bound,
    handelman_encode,
    minimal_M,
    monoid_elements,
    sos_encode,
    subset_products,
    ub,
    ub_polynomial,
    verify_grid,
)
from prsm.extract import PatternInstance, extract_instances
from prsm.poly import Monomial, Polynomial, SymbolicPolynomial
from prsm.preexp import make_template
from prsm.solver import simplex_solve

from conftest import EPS, K, HAND_ETA, build, x

y = Polynomial.var("y")


def inst(gamma, target, kind="C4"):
    return PatternInstance(tuple(gamma), SymbolicPolynomial.lift(target), kind, 1)


# ---------------------------------------------------------------------------
# enumeration
# ---------------------------------------------------------------------------

def test_monoid_fixture():
    got = monoid_elements([1 - x, 1 + x], 2)
    expected = [Polynomial.const(1), 1 - x, 1 + x, 1 - x**2, (1 - x) ** 2, (1 + x) ** 2]
    assert len(got) == 6 and set(got) == set(expected)
    assert monoid_elements([1 - x, 2 * y], 0) == [Polynomial.const(1)]
    g = 3 - x
    assert monoid_elements([g], 3) == [Polynomial.const(1), g, g**2, g**3]


def test_subset_fixture():
    assert set(subset_products([1 - x, 1 + x])) == {Polynomial.const(1), 1 - x, 1 + x, 1 - x**2}
    assert subset_products([]) == [Polynomial.const(1)]
    assert len(subset_products([x, y, x + y + 1])) == 8
    with pytest.raises(EncodingError):
        subset_products([x + i for i in range(13)])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 4), st.integers(0, 3))
def test_monoid_count_on_independent_generators(m, k):
    gamma = [Polynomial.var(f"v{i}") for i in range(m)]
    elems = monoid_elements(gamma, k)
    assert len(elems) == len(set(elems)) == comb(m + k, k)
    assert all(e.degree <= k for e in elems)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(-2, 2), st.integers(-2, 2)), min_size=1, max_size=3), st.integers(0, 3))
def test_monoid_is_duplicate_free(pairs, k):
    gamma = [a * x + b for a, b in pairs]
    elems = monoid_elements(gamma, k)
    assert len(elems) == len(set(elems)) <= comb(len(gamma) + k, k)


# ---------------------------------------------------------------------------
# encodings and witness checks
# ---------------------------------------------------------------------------

def test_handelman_encoding_fixture():
    i = inst([1 - x, 1 + x], 2 - x)
    enc = handelman_encode(i, 2)
    assert len(enc.equalities) == 3 and len(enc.unknowns) == 6
    products = [p for _, p in enc.products]
    coeffs = [Fraction(1) if p in (Polynomial.const(1), 1 - x) else Fraction(0) for p in products]
    values = dict(zip(enc.unknowns, coeffs))
    assert all(eq.evaluate(values) == 0 for eq in enc.equalities)
    w = HandelmanWitness(products, coeffs)
    assert check_handelman_witness(i, w)
    bumped = [c if p != Polynomial.const(1) else Fraction(9, 10) for c, p in zip(coeffs, products)]
    assert not check_handelman_witness(i, HandelmanWitness(products, bumped))
    negative = list(coeffs)
    negative[-1] = Fraction(-1, 10)
    assert not check_handelman_witness(i, HandelmanWitness(products, negative))


def test_handelman_rejects_nonlinear_gamma():
    with pytest.raises(EncodingError):
        handelman_encode(inst([1 - x**2], 2 - x), 2)


def test_handelman_with_template_unknowns(gr):
    t = make_template(gr, 2)
    c4 = [i for i in extract_instances(gr, t) if i.kind == "C4" and i.label == 3][0]
    enc = handelman_encode(c4, 2)
    mixed = [eq for eq in enc.equalities if eq.unknowns & set(t.unknowns) and eq.unknowns & set(enc.unknowns)]
    assert mixed


def test_assemble_running_example_sizes(gr):
    t = make_template(gr, 2)
    ap = assemble(extract_instances(gr, t), HANDELMAN, 3)
    assert len(ap.template_unknowns) == 18
    assert set(ap.template_unknowns) <= set(ap.problem.variables)
    assert len(ap.problem.variables) > 18
    empty = assemble([], HANDELMAN, 2)
    assert simplex_solve(empty.problem).feasible


def test_assemble_reports_bad_instance():
    bad = PatternInstance((1 - x**2,), SymbolicPolynomial.lift(x), "C2", 4)
    with pytest.raises(EncodingError, match="C2:4"):
        assemble([inst([1 - x], x), bad], HANDELMAN, 2)


def test_sos_encoding_shapes():
    enc = sos_encode(inst([1 - x**2, Fraction(1, 2) - x], 2 - x**2), 2, PUTINAR)
    assert len(enc.multipliers) == 3 and enc.basis == [Monomial(), Monomial.var("x")]
    enc = sos_encode(inst([1 - x, 1 + x], 2 - x**2), 2, SCHMUEDGEN)
    assert len(enc.multipliers) == 4


def _putinar_2_minus_x2():
    i = inst([1 - x**2], 2 - x**2, "C2")
    enc = sos_encode(i, 2, PUTINAR)
    e00 = np.array([[1.0, 0.0], [0.0, 0.0]])
    return i, enc, SOSWitness([p for _, p in enc.multipliers], enc.basis, [e00, e00.copy()])


def test_putinar_hand_witness():
    i, enc, w = _putinar_2_minus_x2()
    values = {f"{enc.blocks[0]}[0,0]": 1.0, f"{enc.blocks[1]}[0,0]": 1.0}
    assert all(float(eq.evaluate({u: values.get(u, 0.0) for u in eq.unknowns})) == 0 for eq in enc.equalities)
    ok, res = check_sos_witness(i, w, 1e-6)
    assert ok and res == 0


def test_sos_check_rejects_indefinite_and_shifted():
    i, enc, w = _putinar_2_minus_x2()
    # an indefinite Gram matrix with eigenvalues {1, -0.5}
    w.grams[0] = np.array([[1.0, 0.0], [0.0, -0.5]])
    ok, _ = check_sos_witness(i, w, 1e-6)
    assert not ok
    ok, _ = certify.psd_pivots(w.grams[0], 1e-6)
    assert not ok
    _, _, good = _putinar_2_minus_x2()
    shifted = inst([1 - x**2], 3 - x**2, "C2")
    ok, res = check_sos_witness(shifted, good, 1e-6)
    assert not ok and res == pytest.approx(1.0)


def test_schmuedgen_fixture_witnesses():
    # 1 + x^2 is itself a square sum: identity Gram matrix over (1, x) on the multiplier 1
    i = inst([1 - x, 1 + x], 1 + x**2, "C2")
    enc = sos_encode(i, 2, SCHMUEDGEN)
    grams = [np.eye(2)] + [np.zeros((2, 2)) for _ in range(3)]
    w = SOSWitness([p for _, p in enc.multipliers], enc.basis, grams)
    assert check_sos_witness(i, w, 1e-6)[0]
    # 2 = (1 - x) + (1 + x) with constant multipliers
    i2 = inst([1 - x, 1 + x], Polynomial.const(2), "C2")
    e00 = np.array([[1.0, 0.0], [0.0, 0.0]])
    mults = [p for _, p in enc.multipliers]
    grams = [np.zeros((2, 2)) if p in (Polynomial.const(1), 1 - x**2) else e00 for p in mults]
    w2 = SOSWitness(mults, enc.basis, grams)
    assert check_sos_witness(i2, w2, 1e-6)[0]
    w2.grams[1] = w2.grams[1] * 1.5
    assert not check_sos_witness(i2, w2, 1e-6)[0]


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(0.0, 3.0), st.floats(-1.0, 1.0))
def test_psd_sum_of_squares_always_accepted(a, b, rho):
    # build Q = L L^T so it is PSD by construction; its polynomial is the target
    L = np.array([[a, 0.0], [rho * b, b]])
    Q = L @ L.T
    basis = [Monomial(), Monomial.var("x")]
    target = Polynomial({Monomial(): Fraction(Q[0, 0]), Monomial.var("x"): Fraction(2 * Q[0, 1]),
                         Monomial.var("x", 2): Fraction(Q[1, 1])})
    i = inst([], target, "C2")
    w = SOSWitness([Polynomial.const(1)], basis, [Q])
    ok, res = check_sos_witness(i, w, 1e-6)
    assert ok and res <= 1e-9


# ---------------------------------------------------------------------------
# grid check and bounds
# ---------------------------------------------------------------------------

def test_handwritten_grid(gr):
    rep = verify_grid(gr, HAND_ETA, EPS, K, Fraction(1, 100), box={"x": (0, 11)})
    assert rep.ok and rep.n_violations == 0 and rep.points == 1101


def test_linear_candidate_fails_at_label_3(gr):
    # shifts chosen so every other loop label is as favourable as possible
    lin = {1: x + 20, 2: x + Fraction(198, 10), 3: x + Fraction(196, 10), 4: x + Fraction(196, 10),
           5: x + Fraction(192, 10), 6: x + Fraction(212, 10), 7: Polynomial.const(K)}
    rep = verify_grid(gr, lin, EPS, K, Fraction(1, 10), box={"x": (0, 11)})
    assert not rep.ok
    assert any(v.condition == "C4" and v.label == 3 for v in rep.violations)


def test_large_epsilon_is_reported(gr):
    rep = verify_grid(gr, HAND_ETA, 5, K, Fraction(1, 4), box={"x": (0, 11)})
    assert not rep.ok and rep.n_violations > 0
    assert rep.worst_margin < 0


def test_ub_examples(gr):
    assert ub(HAND_ETA, 1, {"x": 5}, EPS, K) == 151
    x0 = Polynomial.var("x")
    assert ub_polynomial(HAND_ETA, 1, EPS, K) == 5 * (x0 - 1) * (10 - x0) + 51
    flat = {1: Polynomial.const(K)}
    assert ub(flat, 1, {}, EPS, K) == 0
    with pytest.raises(ValueError):
        ub(HAND_ETA, 1, {"x": 5}, 0, K)


@settings(max_examples=50, deadline=None)
@given(st.fractions(min_value=Fraction(1, 10), max_value=10, max_denominator=20))
def test_ub_scale_invariance(lam):
    scaled = {l: p.scale(lam) for l, p in HAND_ETA.items()}
    assert ub(scaled, 1, {"x": 5}, EPS * lam, K * lam) == 151


def test_concentration_example():
    v = concentration_bound(30, Fraction(1, 5), Fraction(-102, 10), Fraction(86, 10), 50000)
    assert isinstance(v, mpmath.mpf)
    assert abs(float(v) - 1.3016e-5) / 1.3016e-5 <= 1e-3
    # eps (n - 1) == eta0 exactly: the bound does not apply
    assert concentration_bound(30, Fraction(1, 5), -1, 1, 151) is None
    assert minimal_M(30, Fraction(1, 5)) == 152
    with pytest.raises(ValueError):
        concentration_bound(30, Fraction(1, 5), 1, 1, 1000)


# ---------------------------------------------------------------------------
# soundness chain on synthesised certificates
# ---------------------------------------------------------------------------

def _synthesise(name, d, k):
    g = build(name)
    t = make_template(g, d)
    insts = extract_instances(g, t)
    ap = assemble(insts, HANDELMAN, k)
    res = simplex_solve(ap.problem)
    assert res.feasible
    return g, insts, ap, res


@pytest.mark.parametrize("name, d, k", [("gamblers_ruin", 2, 2), ("logistic_map", 1, 3)])
def test_synthesised_witnesses_check_exactly(name, d, k):
    g, insts, ap, res = _synthesise(name, d, k)
    for i, w in zip(insts, certify.handelman_witnesses(ap, res.values)):
        assert check_handelman_witness(i, w, res.values), i.tag


@pytest.mark.parametrize("name, d, k", [("gamblers_ruin", 2, 2), ("logistic_map", 1, 3)])
def test_synthesised_certificate_sampled_in_regions(name, d, k):
    g, insts, ap, res = _synthesise(name, d, k)
    rng = np.random.default_rng(11)
    box = certify.default_box(g, pad=Fraction(2))
    for i in insts:
        target = i.target.instantiate(res.values)
        vars_ = sorted(i.variables)
        lo = {v: float(box[v][0]) if v in box else -2.0 for v in vars_}
        hi = {v: float(box[v][1]) if v in box else 2.0 for v in vars_}
        found = 0
        for _ in range(50):
            pts = {v: rng.uniform(lo[v], hi[v], 4000) for v in vars_}
            inside = np.ones(4000, dtype=bool)
            for gp in i.gamma:
                inside &= gp.to_numpy(vars_)(*(pts[v] for v in vars_)) >= 0
            if inside.any():
                vals = np.broadcast_to(target.to_numpy(vars_)(*(pts[v][inside] for v in vars_)), (inside.sum(),))
                assert vals.min() >= -1e-9, i.tag
                found += int(inside.sum())
            if found >= 1000:
                break
        assert found >= 1000, i.tag


def test_certificate_json_round_trip():
    g, insts, ap, res = _synthesise("gamblers_ruin", 2, 2)
    eta = _concrete_eta(g, res.values)
    wit = {i.tag: w for i, w in zip(insts, certify.handelman_witnesses(ap, res.values))}
    cert = Certificate(programs.source("gamblers_ruin"), g.variables, HANDELMAN, 2, 2, Fraction(1), Fraction(-1),
                       eta, ub(eta, g.initial, g.init_valuation, 1, -1), wit)
    back = Certificate.loads(cert.dumps())
    assert back.eta == eta
    assert back.ub == cert.ub
    for i in insts:
        w = certify.witness_from_json(i, back.witnesses[i.tag], g.variables)
        assert check_handelman_witness(i, w, res.values)


def _concrete_eta(g, values):
    t = make_template(g, 2)
    return {l: p for l, p in t.instantiate(values).items() if l != g.terminal}
