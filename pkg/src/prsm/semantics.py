"""Operational semantics: a step function and a Monte Carlo driver.

Each step draws fresh values for every sampling variable, resolves demonic
choice through a scheduler, probabilistic choice through an independent
Bernoulli draw, conditional branches by evaluating the guard, and applies
assignments.  The terminal label loops on itself.

:func:`step` works on one exact configuration.  :func:`simulate` advances a
whole batch of trials at once with numpy; schedulers that depend on the
full path (``vectorized = False``) fall back to the one-trial-at-a-time path.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from . import cfg as cfgmod
from . import lang
from .cfg import ControlFlowGraph, Transition
from .poly import Polynomial, to_fraction


class SemanticsError(RuntimeError):
    """The CFG does not determine a successor (e.g. no guard holds)."""


@dataclass(frozen=True)
class Configuration:
    label: int
    valuation: Mapping[str, object]

    def __str__(self):
        vals = ", ".join(f"{v}={x}" for v, x in self.valuation.items())
        return f"({self.label}, {vals})"


def initial_configuration(g: ControlFlowGraph, valuation: Mapping[str, object] | None = None) -> Configuration:
    val = dict(g.init_valuation)
    if valuation:
        val.update({v: to_fraction(x) if not isinstance(x, float) else x for v, x in valuation.items()})
    missing = set(g.variables) - set(val)
    if missing:
        raise ValueError(f"no initial value for {sorted(missing)}")
    return Configuration(g.initial, {v: val[v] for v in g.variables})


# ---------------------------------------------------------------------------
# schedulers
# ---------------------------------------------------------------------------


class Scheduler:
    """Resolves demonic choice.

    ``choose`` sees the whole path (a list of configurations ending at the
    current demonic one) and returns one of ``options``.  Schedulers whose
    decision depends only on the current configuration set
    ``vectorized = True`` and implement ``choose_many``.
    """

    vectorized = False
    name = "scheduler"

    def choose(self, g: ControlFlowGraph, path: Sequence[Configuration], options: Sequence[Transition], rng) -> Transition:
        raise NotImplementedError

    def choose_many(self, g, label, options, values: Mapping[str, np.ndarray], rng, n: int) -> np.ndarray:
        raise NotImplementedError


class UniformScheduler(Scheduler):
    """Picks a successor uniformly at random."""

    vectorized = True
    name = "uniform"

    def choose(self, g, path, options, rng):
        return options[int(rng.integers(len(options)))]

    def choose_many(self, g, label, options, values, rng, n):
        return rng.integers(len(options), size=n)


class GreedyEtaScheduler(Scheduler):
    """Picks the successor whose ``eta`` value is largest at the current
    valuation; ties go to the lowest target label id."""

    vectorized = True
    name = "greedy-eta"

    def __init__(self, eta: Mapping[int, Polynomial], variables: Sequence[str]):
        self.eta = dict(eta)
        self.variables = list(variables)
        self._fns = {l: p.to_numpy(self.variables) for l, p in self.eta.items()}

    def _order(self, options):
        return sorted(range(len(options)), key=lambda i: options[i].target)

    def choose(self, g, path, options, rng):
        x = path[-1].valuation
        best, best_val = None, None
        for i in self._order(options):
            v = self.eta[options[i].target].evaluate({k: to_fraction(x[k]) for k in self.variables})
            if best is None or v > best_val:
                best, best_val = i, v
        return options[best]

    def choose_many(self, g, label, options, values, rng, n):
        order = self._order(options)
        arrays = [values[v] for v in self.variables]
        scores = np.stack([np.broadcast_to(self._fns[options[i].target](*arrays), (n,)) for i in order])
        # argmax returns the first maximum, which is the lowest target id
        return np.array(order)[np.argmax(scores, axis=0)]


class ScriptedScheduler(Scheduler):
    """Always takes the successor with a fixed index at each demonic label
    (index 0 where no entry is given)."""

    vectorized = True
    name = "scripted"

    def __init__(self, choices: Mapping[int, int] | None = None):
        self.choices = dict(choices or {})

    def choose(self, g, path, options, rng):
        return options[self.choices.get(path[-1].label, 0)]

    def choose_many(self, g, label, options, values, rng, n):
        return np.full(n, self.choices.get(label, 0))


# ---------------------------------------------------------------------------
# single steps
# ---------------------------------------------------------------------------


def _sample_all(g: ControlFlowGraph, rng) -> dict[str, object]:
    out = {}
    for r, dist in g.sampling.items():
        if dist.kind == "discrete":
            vals = [v for v, _ in dist.points]
            probs = np.array([float(p) for _, p in dist.points])
            out[r] = vals[int(rng.choice(len(vals), p=probs / probs.sum()))]
        else:
            out[r] = Fraction(float(dist.sample(rng)))
    return out


def step(g: ControlFlowGraph, c: Configuration, rng, s: Scheduler, history: Sequence[Configuration] = ()) -> Configuration:
    """One step of the semantics from configuration ``c``."""
    samples = _sample_all(g, rng)  # fresh every step, used or not
    label = c.label
    kind = g.kind(label)
    if kind == cfgmod.TERMINAL:
        return c
    outs = g.out(label)
    x = dict(c.valuation)
    exact = {v: to_fraction(val) for v, val in x.items()}
    if kind == cfgmod.DEMONIC:
        t = s.choose(g, list(history) + [c], outs, rng)
        if t.source != label:
            raise SemanticsError(f"scheduler returned a transition leaving {t.source}, not {label}")
        return Configuration(t.target, x)
    if kind == cfgmod.PROBABILISTIC:
        u = rng.random()
        acc = Fraction(0)
        for t in outs:
            acc += t.payload
            if u < acc:
                return Configuration(t.target, x)
        return Configuration(outs[-1].target, x)
    if kind == cfgmod.CONDITIONAL:
        for t in outs:
            if lang.eval_predicate(t.payload, exact):
                return Configuration(t.target, x)
        raise SemanticsError(f"no guard holds at label {label} for {exact}")
    (t,) = outs
    point = {**exact, **samples}
    new = {v: p.evaluate(point) for v, p in t.payload.full(g.variables).items()}
    return Configuration(t.target, new)


def run(g: ControlFlowGraph, c: Configuration, rng, s: Scheduler, max_steps: int = 10**6) -> tuple[int | None, list[Configuration]]:
    """Run one trial; returns ``(T or None if censored, path)``."""
    path = [c]
    for n in range(max_steps):
        if path[-1].label == g.terminal:
            return n, path
        path.append(step(g, path[-1], rng, s, path[:-1]))
    return (max_steps if path[-1].label == g.terminal else None), path


# ---------------------------------------------------------------------------
# batched simulation
# ---------------------------------------------------------------------------


class _Compiled:
    """Numpy callables for every guard and update of a CFG."""

    def __init__(self, g: ControlFlowGraph):
        self.g = g
        self.vars = list(g.variables)
        self.samp = list(g.sampling)
        names = self.vars + self.samp
        self.updates: dict[int, list[tuple[str, object]]] = {}
        for label, kind in g.labels.items():
            if kind == cfgmod.ASSIGNMENT:
                (t,) = g.out(label)
                subst = t.payload.as_substitution()
                self.updates[label] = [(v, subst[v].to_numpy(names)) for v in self.vars if v in subst]
        self.names = names

    def advance(self, labels: np.ndarray, vals: dict[str, np.ndarray], rng, s: Scheduler) -> tuple[np.ndarray, dict]:
        g = self.g
        n = labels.shape[0]
        samples = {r: g.sampling[r].sample(rng, size=n) for r in self.samp}
        new_labels = labels.copy()
        new_vals = {v: a.copy() for v, a in vals.items()}
        for label in np.unique(labels):
            label = int(label)
            idx = np.nonzero(labels == label)[0]
            kind = g.kind(label)
            if kind == cfgmod.TERMINAL:
                continue
            outs = g.out(label)
            sub = {v: vals[v][idx] for v in self.vars}
            if kind == cfgmod.DEMONIC:
                pick = s.choose_many(g, label, outs, sub, rng, idx.size)
                new_labels[idx] = np.array([t.target for t in outs])[pick]
            elif kind == cfgmod.PROBABILISTIC:
                u = rng.random(idx.size)
                cum = np.cumsum([float(t.payload) for t in outs])
                pick = np.minimum(np.searchsorted(cum, u, side="right"), len(outs) - 1)
                new_labels[idx] = np.array([t.target for t in outs])[pick]
            elif kind == cfgmod.CONDITIONAL:
                arrays = [sub[v] for v in self.vars]
                done = np.zeros(idx.size, dtype=bool)
                for t in outs:
                    m = lang.predicate_mask(t.payload, self.vars, arrays) & ~done
                    new_labels[idx[m]] = t.target
                    done |= m
                if not done.all():
                    bad = idx[~done][0]
                    raise SemanticsError(
                        f"no guard holds at label {label} for "
                        + ", ".join(f"{v}={vals[v][bad]}" for v in self.vars)
                    )
            else:
                (t,) = outs
                arrays = [sub[v] for v in self.vars] + [samples[r][idx] for r in self.samp]
                for v, f in self.updates[label]:
                    new_vals[v][idx] = np.broadcast_to(f(*arrays), (idx.size,))
                new_labels[idx] = t.target
        return new_labels, new_vals


@dataclass
class RunStats:
    trials: int
    terminated: int
    censored: int
    times: np.ndarray
    max_steps: int
    tails: dict[int, float] = field(default_factory=dict)
    invariant_violations: int = 0

    @property
    def mean(self) -> float:
        """Empirical mean of T with censored trials counted at ``max_steps``
        (a lower bound on the true mean)."""
        if self.trials == 0:
            return math.nan
        total = float(np.sum(self.times)) + self.censored * self.max_steps
        return total / self.trials

    @property
    def stderr(self) -> float:
        if self.trials < 2:
            return math.nan
        full = np.concatenate([self.times.astype(float), np.full(self.censored, float(self.max_steps))])
        return float(np.std(full, ddof=1) / math.sqrt(self.trials))

    @property
    def censored_fraction(self) -> float:
        return self.censored / self.trials if self.trials else math.nan

    def tail(self, n: int) -> float:
        """Empirical ``P(T > n)``; censored trials count as exceeding any ``n < max_steps``."""
        exceed = int(np.sum(self.times > n)) + (self.censored if n < self.max_steps else 0)
        return exceed / self.trials

    def to_json(self) -> dict:
        return {
            "trials": self.trials,
            "terminated": self.terminated,
            "censored": self.censored,
            "max_steps": self.max_steps,
            "mean": self.mean,
            "stderr": self.stderr,
            "max_observed": int(self.times.max()) if self.times.size else None,
            "tails": {str(n): p for n, p in self.tails.items()},
            "invariant_violations": self.invariant_violations,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def simulate(g: ControlFlowGraph, init: Configuration, s: Scheduler, max_steps: int = 10**6, trials: int = 10**4,
             tail_points: Sequence[int] = (), seed: int | None = 0, batch_size: int = 100_000,
             check_invariants: bool = False) -> RunStats:
    """Independent trials from ``init``; a trial that has not reached the
    terminal label after ``max_steps`` steps is censored.

    Each batch of trials draws from its own Philox stream spawned from
    ``seed``, so results depend only on ``seed`` and ``batch_size``.
    """
    if max_steps < 1 or trials < 1:
        raise ValueError("max_steps and trials must be positive")
    streams = np.random.SeedSequence(seed).spawn(math.ceil(trials / batch_size))
    times = []
    censored = 0
    inv_bad = 0
    comp = _Compiled(g)
    for b, ss in enumerate(streams):
        rng = np.random.Generator(np.random.Philox(ss))
        n = min(batch_size, trials - b * batch_size)
        if s.vectorized:
            t, c, bad = _simulate_batch(comp, init, s, max_steps, n, rng, check_invariants)
        else:
            t, c, bad = _simulate_sequential(g, init, s, max_steps, n, rng, check_invariants)
        times.append(t)
        censored += c
        inv_bad += bad
    all_times = np.concatenate(times) if times else np.zeros(0, dtype=np.int64)
    stats = RunStats(trials, int(all_times.size), censored, all_times, max_steps, {}, inv_bad)
    stats.tails = {int(n): stats.tail(int(n)) for n in tail_points}
    return stats


def _invariant_violations(g, comp, labels, vals) -> int:
    bad = 0
    arrays = [vals[v] for v in comp.vars]
    for label in np.unique(labels):
        label = int(label)
        inv = g.invariant(label)
        if inv is lang.TRUE:
            continue
        idx = labels == label
        ok = lang.predicate_mask(inv, comp.vars, [a[idx] for a in arrays], 1e-9)
        bad += int(np.sum(~ok))
    return bad


def _simulate_batch(comp: _Compiled, init, s, max_steps, n, rng, check_invariants):
    g = comp.g
    labels = np.full(n, init.label, dtype=np.int64)
    vals = {v: np.full(n, float(init.valuation[v])) for v in comp.vars}
    ids = np.arange(n)
    times = np.full(n, -1, dtype=np.int64)
    bad = 0
    steps = 0
    if check_invariants:
        bad += _invariant_violations(g, comp, labels, vals)
    while ids.size and steps < max_steps:
        done = labels == g.terminal
        if done.any():
            times[ids[done]] = steps
            keep = ~done
            ids, labels = ids[keep], labels[keep]
            vals = {v: a[keep] for v, a in vals.items()}
            if not ids.size:
                break
        labels, vals = comp.advance(labels, vals, rng, s)
        steps += 1
        if check_invariants:
            bad += _invariant_violations(g, comp, labels, vals)
    if ids.size:
        done = labels == g.terminal
        times[ids[done]] = steps
    finished = times[times >= 0]
    return finished, int(np.sum(times < 0)), bad


def _simulate_sequential(g, init, s, max_steps, n, rng, check_invariants):
    times = []
    censored = 0
    bad = 0
    for _ in range(n):
        T, path = run(g, init, rng, s, max_steps)
        if T is None:
            censored += 1
        else:
            times.append(T)
        if check_invariants:
            for c in path:
                if not lang.eval_predicate(g.invariant(c.label), {v: to_fraction(x) for v, x in c.valuation.items()}):
                    bad += 1
    return np.array(times, dtype=np.int64), censored, bad


# ---------------------------------------------------------------------------
# one-step supermartingale check
# ---------------------------------------------------------------------------


@dataclass
class OneStepCheck:
    label: int
    valuation: dict[str, float]
    mean: float
    stderr: float
    pre: float
    samples: int

    @property
    def ok(self) -> bool:
        return self.mean <= self.pre + 4 * self.stderr + 1e-9 * (1 + abs(self.pre))


def pre_value(g: ControlFlowGraph, eta: Mapping[int, Polynomial], label: int, x: Mapping[str, object]) -> Fraction:
    """The pre-expectation of ``eta`` at ``(label, x)``, evaluated exactly
    (maximum over branches at demonic labels, guarded branch at conditional ones)."""
    from .poly import SymbolicPolynomial
    from .preexp import pre_expectation

    lifted = {l: SymbolicPolynomial.lift(p) for l, p in eta.items()}
    point = {v: to_fraction(c) for v, c in x.items()}
    branches = pre_expectation(g, lifted, label)
    kind = g.kind(label)
    if kind == cfgmod.CONDITIONAL:
        for br in branches:
            if lang.eval_predicate(br.guard, point):
                return br.value.to_polynomial().evaluate(point)
        raise SemanticsError(f"no guard holds at label {label}")
    return max(br.value.to_polynomial().evaluate(point) for br in branches)


def one_step_check(g: ControlFlowGraph, eta: Mapping[int, Polynomial], label: int, x: Mapping[str, object],
                   s: Scheduler, samples: int = 100_000, seed: int | None = 0) -> OneStepCheck:
    """Compare the sample mean of ``eta(next)`` from ``(label, x)`` with the
    pre-expectation there."""
    eta = dict(eta)
    comp = _Compiled(g)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    labels = np.full(samples, label, dtype=np.int64)
    vals = {v: np.full(samples, float(to_fraction(x[v]))) for v in comp.vars}
    if not s.vectorized:
        raise ValueError("one-step check needs a scheduler that only looks at the current configuration")
    nl, nv = comp.advance(labels, vals, rng, s)
    out = np.empty(samples)
    for t in np.unique(nl):
        idx = nl == t
        f = eta[int(t)].to_numpy(comp.vars)
        out[idx] = np.broadcast_to(f(*[nv[v][idx] for v in comp.vars]), (int(idx.sum()),))
    mean = float(out.mean())
    se = float(out.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    pre = float(pre_value(g, eta, label, x))
    return OneStepCheck(label, {v: float(to_fraction(x[v])) for v in comp.vars}, mean, se, pre, samples)
