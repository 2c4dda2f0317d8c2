"""Shared fixtures: the running example and its hand-written ranking function."""

from fractions import Fraction

import pytest

from prsm import cfg, lang, programs
from prsm.poly import Polynomial


x = Polynomial.var("x")
# g(x) = (x - 1)(10 - x)
G = (x - 1) * (10 - x)

# Hand-written ranking function of the running example with eps = 0.2, K = -0.2.
HAND_ETA = {
    1: G + 10,
    2: G + Fraction(98, 10),
    3: G + Fraction(96, 10),
    4: G + Fraction(96, 10),
    5: G + 2 * x - Fraction(18, 10),
    6: G - 2 * x + Fraction(202, 10),
    7: Polynomial.const(Fraction(-2, 10)),
}
HAND_TEXT = {
    1: "(x-1)*(10-x)+10",
    2: "(x-1)*(10-x)+9.8",
    3: "(x-1)*(10-x)+9.6",
    4: "(x-1)*(10-x)+9.6",
    5: "(x-1)*(10-x)+2*x-1.8",
    6: "(x-1)*(10-x)-2*x+20.2",
}
EPS = Fraction(1, 5)
K = Fraction(-1, 5)


def build(name: str) -> cfg.ControlFlowGraph:
    return cfg.build_cfg(lang.parse(programs.source(name)))


@pytest.fixture(scope="session")
def gr():
    return build("gamblers_ruin")


@pytest.fixture(scope="session")
def hand_eta():
    return dict(HAND_ETA)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
