"""Adapter that solves SDPA problem files with an off-the-shelf conic solver.

The adapter deliberately works on the emitted text rather than on the
in-memory problem, so it exercises the same emit/ingest path an external
binary such as CSDP would.  cvxpy is an optional dependency.
"""

from __future__ import annotations

import numpy as np

from .sdp import SDPAData, SDPSolution, read_sdpa


class SolverUnavailable(RuntimeError):
    pass


def available(solver: str | None = None) -> bool:
    try:
        import cvxpy as cp
    except ImportError:
        return False
    return solver is None or solver.upper() in cp.installed_solvers()


def solve_sdpa(source, solver: str = "CLARABEL", **options) -> SDPSolution:
    """Solve the SDPA problem in ``source`` and return a CSDP-style solution.

    Raises :class:`RuntimeError` when the solver does not report an optimal
    (or inaccurate-optimal) status.
    """
    try:
        import cvxpy as cp
    except ImportError:  # pragma: no cover - depends on the environment
        raise SolverUnavailable("cvxpy is not installed") from None
    data: SDPAData = read_sdpa(source)
    if solver.upper() not in cp.installed_solvers():
        raise SolverUnavailable(f"solver {solver} is not available to cvxpy")

    blocks = []
    cons = []
    for size in data.block_sizes:
        if size > 0:
            X = cp.Variable((size, size), symmetric=True)
            cons.append(X >> 0)
        else:
            X = cp.Variable(-size, nonneg=True)
        blocks.append(X)

    def term(b, i, j, v):
        X = blocks[b - 1]
        if data.block_sizes[b - 1] < 0:
            return v * X[i - 1]
        if i == j:
            return v * X[i - 1, i - 1]
        return 2 * v * X[i - 1, j - 1]

    rows: list[list] = [[] for _ in range(data.m + 1)]
    for matno, b, i, j, v in data.entries:
        rows[matno].append(term(b, i, j, v))
    for k in range(1, data.m + 1):
        lhs = cp.sum(cp.hstack(rows[k])) if rows[k] else 0
        cons.append(lhs == data.c[k - 1])
    objective = cp.Maximize(cp.sum(cp.hstack(rows[0]))) if rows[0] else cp.Minimize(0)
    prob = cp.Problem(objective, cons)
    prob.solve(solver=solver.upper(), **options)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"external SDP solver returned status {prob.status}")

    X_out = []
    for size, X in zip(data.block_sizes, blocks):
        if size > 0:
            M = np.array(X.value, dtype=float)
            X_out.append((M + M.T) / 2)
        else:
            X_out.append(np.diag(np.array(X.value, dtype=float).reshape(-1)))
    y = []
    nblock_cons = sum(1 for s in data.block_sizes if s > 0)
    for c in cons[nblock_cons:]:
        dv = c.dual_value
        y.append(float(np.asarray(dv).reshape(-1)[0]) if dv is not None else 0.0)
    return SDPSolution(y, X_out)
