import dataclasses
from fractions import Fraction

import pytest

from prsm import cfg, lang, programs
from prsm.cfg import STAR, build_cfg, term_predicate, validate
from prsm.semantics import UniformScheduler, initial_configuration, simulate

from conftest import build


def test_running_example_shape(gr):
    assert gr.labels == {
        1: cfg.CONDITIONAL,
        2: cfg.DEMONIC,
        3: cfg.ASSIGNMENT,
        4: cfg.PROBABILISTIC,
        5: cfg.ASSIGNMENT,
        6: cfg.ASSIGNMENT,
        7: cfg.TERMINAL,
    }
    assert (gr.initial, gr.terminal) == (1, 7)
    assert len(gr.transitions) == 9
    probs = sorted(t.payload for t in gr.out(4))
    assert probs == [Fraction(49, 100), Fraction(51, 100)]
    assert {t.target for t in gr.out(2)} == {3, 4}
    assert all(t.payload is STAR for t in gr.out(2))


def test_loop_guards(gr):
    (into, out) = sorted(gr.out(1), key=lambda t: t.target)
    assert into.target == 2 and out.target == 7
    for v in (Fraction(0), Fraction(1), Fraction(21, 2), Fraction(10), Fraction(11)):
        inside = 1 <= v <= 10
        assert lang.eval_predicate(into.payload, {"x": v}) == inside
        assert lang.eval_predicate(out.payload, {"x": v}) == (not inside)


def test_dump_has_one_edge_per_line(gr):
    lines = gr.dump().splitlines()
    assert len(lines) == 9
    assert "4 probabilistic 0.51 5" in lines


def test_skip_program():
    g = build_cfg(lang.parse("init x = 0\nskip"))
    assert g.labels == {1: cfg.ASSIGNMENT, 2: cfg.TERMINAL}
    (t,) = g.transitions
    assert t.target == g.terminal and t.payload.is_identity()


def test_infinite_loop_never_enables_exit():
    g = build_cfg(lang.parse("init x = 0\nwhile true do skip od"))
    into_bottom = [t for t in g.transitions if t.target == g.terminal]
    # the exit edge is kept for shape but its guard is unsatisfiable
    assert all(not lang.eval_predicate(t.payload, {"x": v}) for t in into_bottom for v in range(-3, 4))


def test_term_predicate(gr):
    assert lang.to_dnf(term_predicate(gr, 1)) == lang.to_dnf(lang.parse_predicate("x >= 1 and x <= 10", ["x"]))
    for label in (2, 3, 4, 5, 6):
        assert term_predicate(gr, label) == lang.TRUE
    with pytest.raises(ValueError):
        term_predicate(gr, gr.terminal)


def test_term_predicate_without_exit():
    src = "init x = 0\nif x >= 0 then x := x + 1 else x := x - 1 fi"
    g = build_cfg(lang.parse(src))
    # both branches lead to assignments, so TERM is the disjunction of both guards (valid)
    t = term_predicate(g, g.initial)
    assert all(lang.eval_predicate(t, {"x": v}) for v in range(-3, 4))


@pytest.mark.parametrize("name", programs.NAMES)
def test_bundled_programs_validate(name):
    assert validate(build(name)) == []


def test_validate_bad_probabilities(gr):
    bad = dataclasses.replace(gr, transitions=[
        dataclasses.replace(t, payload=Fraction(6, 10)) if t.source == 4 else t for t in gr.transitions
    ])
    assert len(validate(bad)) == 1


def test_validate_lonely_demonic(gr):
    bad = dataclasses.replace(gr, transitions=[t for t in gr.transitions if not (t.source == 2 and t.target == 4)])
    problems = validate(bad)
    assert len(problems) >= 1 and any("2" in p for p in problems)


@pytest.mark.parametrize("name", programs.NAMES)
def test_runs_respect_invariants(name):
    g = build(name)
    stats = simulate(g, initial_configuration(g), UniformScheduler(), max_steps=20_000, trials=10_000,
                     seed=3, check_invariants=True)
    assert stats.invariant_violations == 0
