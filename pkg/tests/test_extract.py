import json
from fractions import Fraction

from prsm import cfg, extract, lang
from prsm.extract import (
    DIFF_LOWER,
    DIFF_UPPER,
    PatternInstance,
    clean_gamma,
    extract_diff_bounded,
    extract_instances,
)
from prsm.poly import AffineExpr, Polynomial
from prsm.preexp import concrete_template, make_template

from conftest import EPS, K, HAND_ETA, x

LOOP_BODY = {x - 1, 10 - x}


def gammas(inst: PatternInstance) -> set:
    return set(inst.gamma)


def test_running_example_instances(gr):
    insts = extract_instances(gr, make_template(gr, 2))
    assert len(insts) == 13
    c2 = [i for i in insts if i.kind == "C2"]
    c4 = [i for i in insts if i.kind == "C4"]
    assert len(c2) == 6 and len(c4) == 7
    by_label = {}
    for i in c4:
        by_label.setdefault(i.label, []).append(i)
    assert gammas(by_label[1][0]) == {x - 1, 10 - x, x, 11 - x}
    assert len(by_label[2]) == 2
    assert all(len(by_label[l]) == 1 for l in (3, 4, 5, 6))
    assert all(gammas(i) == LOOP_BODY for l in (2, 3, 4, 5, 6) for i in by_label[l])
    (c2_1,) = [i for i in c2 if i.label == 1]
    assert gammas(c2_1) == {x, 11 - x}
    assert all(gammas(i) == LOOP_BODY for i in c2 if i.label != 1)


def test_trivial_invariant_gives_empty_gamma():
    g = cfg.build_cfg(lang.parse("init x = 0\nx := x + 1"))
    c2 = [i for i in extract_instances(g, make_template(g, 1)) if i.kind == "C2"]
    assert len(c2) == 1 and c2[0].gamma == ()


def test_false_term_gives_no_c4():
    # the loop guard is false: TERM at the head is empty, so no C4 there
    g = cfg.build_cfg(lang.parse("init x = 0\nwhile false do x := x + 1 od"))
    c4 = [i for i in extract_instances(g, make_template(g, 1)) if i.kind == "C4"]
    assert all(i.label != g.initial for i in c4)


def test_gamma_cleaning():
    assert clean_gamma([x, x, Polynomial.const(3)]) == (x,)
    assert clean_gamma([x, Polynomial.const(-1)]) is None


def test_handwritten_targets_nonnegative_on_grid(gr):
    t = concrete_template(gr, HAND_ETA, EPS, K)
    grid = [Fraction(i, 100) for i in range(0, 1101)]
    for inst in extract_instances(gr, t):
        target = inst.target.to_polynomial()
        for v in grid:
            pt = {"x": v}
            if all(g.evaluate(pt) >= 0 for g in inst.gamma):
                assert target.evaluate(pt) >= 0, (inst.tag, v)


def test_diff_bounded_assignment_case(gr):
    insts = extract_diff_bounded(gr, make_template(gr, 2))
    lab3 = [i for i in insts if i.label == 3]
    assert {i.kind for i in lab3} == {"DIFF-LO", "DIFF-HI"}
    r = Polynomial.var("r")
    for i in lab3:
        assert gammas(i) == {x - 1, 10 - x, r + 1, 1 - r}


def test_diff_bounded_exit_branch_is_clausewise(gr):
    insts = [i for i in extract_diff_bounded(gr, make_template(gr, 2)) if i.label == 1 and i.branch == 1]
    # x < 1 or x > 10 gives two clauses, each with a lower and an upper instance
    assert len(insts) == 4
    assert {frozenset(i.gamma) for i in insts} == {
        frozenset({x, 11 - x, 1 - x}),
        frozenset({x, 11 - x, x - 10}),
    }


def test_diff_bounded_identical_eta_reduces_to_bounds():
    g = cfg.build_cfg(lang.parse("init x = 0\nwhile x <= 1 do skip od"))
    same = x * x + 1
    t = concrete_template(g, {1: same, 2: same}, 1, -1)
    (lo,) = [i for i in extract_diff_bounded(g, t) if i.kind == "DIFF-LO" and i.label == 2]
    (hi,) = [i for i in extract_diff_bounded(g, t) if i.kind == "DIFF-HI" and i.label == 2]
    assert lo.target.terms == {Polynomial.const(1).monomials()[0]: -AffineExpr.unknown(DIFF_LOWER)}
    assert hi.target.terms == {Polynomial.const(1).monomials()[0]: AffineExpr.unknown(DIFF_UPPER)}


def test_handwritten_difference_bounds(gr):
    # the interval [-10.2, 8.6] makes every difference instance nonnegative
    t = concrete_template(gr, HAND_ETA, EPS, K)
    bounds = {DIFF_LOWER: Fraction(-102, 10), DIFF_UPPER: Fraction(86, 10)}
    for inst in extract_diff_bounded(gr, t):
        target = inst.target.instantiate(bounds)
        rs = [Fraction(-1), Fraction(1)] if "r" in inst.variables else [Fraction(0)]
        for i in range(0, 1101, 5):
            for rv in rs:
                pt = {"x": Fraction(i, 100), "r": rv}
                if all(g.evaluate(pt) >= 0 for g in inst.gamma):
                    assert target.evaluate(pt) >= 0, (inst.tag, pt)


def test_dump_is_json(gr):
    data = json.loads(extract.dump_instances(extract_instances(gr, make_template(gr, 1))))
    assert data[0]["tag"].startswith("C2")
