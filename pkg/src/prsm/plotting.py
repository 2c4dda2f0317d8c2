"""Figures for analysis reports, written to files with the Agg backend."""

from __future__ import annotations

import os
from typing import TYPE_CHECKING

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import certify  # noqa: E402

if TYPE_CHECKING:
    from .analysis import AnalysisReport
    from .cfg import ControlFlowGraph


def _save(fig, path: str) -> str:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def eta_figure(report: "AnalysisReport", g: "ControlFlowGraph", path: str) -> str:
    """Per-label eta over the grid box: curves for one variable, a filled
    contour of the initial label otherwise."""
    box = certify.default_box(g)
    vars_ = list(g.variables)
    fig, ax = plt.subplots(figsize=(6, 4))
    if len(vars_) == 1:
        (v,) = vars_
        lo, hi = (float(b) for b in box[v])
        xs = np.linspace(lo, hi, 400)
        for label, p in sorted(report.eta.items()):
            ax.plot(xs, np.broadcast_to(p.to_numpy(vars_)(xs), xs.shape), label=f"label {label}")
        ax.axhline(0.0, color="grey", lw=0.8)
        ax.set_xlabel(v)
        ax.set_ylabel("eta")
        ax.legend(fontsize="small")
    else:
        a, b = vars_[:2]
        (alo, ahi), (blo, bhi) = ((float(s) for s in box[v]) for v in (a, b))
        A, B = np.meshgrid(np.linspace(alo, ahi, 200), np.linspace(blo, bhi, 200))
        rest = [np.full_like(A, float(report.initial.get(v, 0))) for v in vars_[2:]]
        Z = np.broadcast_to(report.eta[g.initial].to_numpy(vars_)(A, B, *rest), A.shape)
        cs = ax.contourf(A, B, Z, levels=30)
        fig.colorbar(cs, ax=ax, label=f"eta at label {g.initial}")
        ax.set_xlabel(a)
        ax.set_ylabel(b)
    ax.set_title(f"{report.program}: synthesised eta ({report.method}, d={report.degree})")
    return _save(fig, path)


def tail_figure(report: "AnalysisReport", path: str) -> str:
    """Empirical tail P(T>n) per scheduler, with the concentration bound when available."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, st in report.runs.items():
        if st.times.size:
            ns = np.arange(0, int(st.times.max()) + 2)
            srt = np.sort(st.times)
            exceed = (st.trials - np.searchsorted(srt, ns, side="right")) / st.trials
            ax.semilogy(ns, np.maximum(exceed, 1e-12), label=f"empirical ({name})")
    if report.ub is not None:
        ax.axvline(float(report.ub), color="black", ls="--", lw=0.8, label="UB")
    if report.diff is not None and report.runs:
        eta0 = report.eta[report.initial_label].evaluate(report.initial)
        top = max(int(st.times.max()) for st in report.runs.values() if st.times.size) + 2
        ns = np.linspace(report.minimal_M or 2, max(top, (report.minimal_M or 2) + 1), 200)
        vals = [certify.concentration_bound(eta0, report.epsilon, report.diff[0], report.diff[1], int(n)) for n in ns]
        pts = [(n, float(v)) for n, v in zip(ns, vals) if v is not None]
        if pts:
            ax.semilogy(*zip(*pts), label="concentration bound")
    ax.set_xlabel("n")
    ax.set_ylabel("P(T > n)")
    ax.set_title(f"{report.program}: termination time tail")
    ax.legend(fontsize="small")
    return _save(fig, path)


def analysis_figures(report: "AnalysisReport", g: "ControlFlowGraph", out_dir: str) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    if report.eta:
        paths.append(eta_figure(report, g, os.path.join(out_dir, f"{report.program}_eta.png")))
    if report.runs:
        paths.append(tail_figure(report, os.path.join(out_dir, f"{report.program}_tail.png")))
    return paths
