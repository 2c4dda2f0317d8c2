"""SDP problems and the sparse SDPA text exchange format.

Problems are written in the primal form used by CSDP and compatible
solvers::

    maximize tr(C X)  subject to  tr(A_k X) = a_k,  X PSD (block diagonal)

Matrix blocks hold the Gram matrices; free scalars (template unknowns) are
split into the difference of two entries of one trailing diagonal block.
Our problems minimise, so ``C`` is the negated objective.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, TextIO

import numpy as np

from ..poly import AffineExpr


class SDPFormatError(ValueError):
    """Malformed SDPA problem or solution text."""


class SDPDimensionError(SDPFormatError):
    """Solution text that does not fit the problem's block structure."""


@dataclass
class SDPBlock:
    name: str
    size: int
    entries: dict[tuple[int, int], str] = field(default_factory=dict)  # (i<=j) -> unknown name


@dataclass
class SDPProblem:
    """Scalar free unknowns plus symmetric PSD blocks tied by linear equalities.

    ``equalities`` are affine expressions that must vanish; they may mention
    both free scalars and Gram entry unknowns (an off-diagonal unknown
    ``Q[i,j]`` stands for both symmetric positions).
    """

    free: list[str] = field(default_factory=list)
    blocks: list[SDPBlock] = field(default_factory=list)
    equalities: list[AffineExpr] = field(default_factory=list)
    objective: AffineExpr | None = None

    def add_block(self, name: str, size: int) -> SDPBlock:
        blk = SDPBlock(name, size)
        for i in range(size):
            for j in range(i, size):
                blk.entries[(i, j)] = f"{name}[{i},{j}]"
        self.blocks.append(blk)
        return blk

    def entry_index(self) -> dict[str, tuple[int, int, int]]:
        out = {}
        for b, blk in enumerate(self.blocks):
            for (i, j), name in blk.entries.items():
                out[name] = (b, i, j)
        return out

    def matrices(self, values: Mapping[str, float]) -> list[np.ndarray]:
        mats = []
        for blk in self.blocks:
            q = np.zeros((blk.size, blk.size))
            for (i, j), name in blk.entries.items():
                q[i, j] = q[j, i] = float(values.get(name, 0.0))
            mats.append(q)
        return mats


def _num(v) -> str:
    return format(float(v), ".17g")


@dataclass
class SDPAData:
    """Raw contents of an SDPA sparse file (1-based block numbering)."""

    m: int
    block_sizes: list[int]
    c: list[float]
    entries: list[tuple[int, int, int, int, float]]  # matno, block, i, j, value


def to_sdpa(sdp: SDPProblem) -> SDPAData:
    index = sdp.entry_index()
    free_pos = {v: t for t, v in enumerate(sdp.free)}
    sizes = [blk.size for blk in sdp.blocks]
    diag = None
    if sdp.free:
        sizes.append(-2 * len(sdp.free))
        diag = len(sizes)

    def expand(expr: AffineExpr, scale: float) -> dict[tuple[int, int, int], float]:
        acc: dict[tuple[int, int, int], float] = {}
        for u, c in expr.coeffs.items():
            c = float(c) * scale
            if u in index:
                b, i, j = index[u]
                key = (b + 1, i + 1, j + 1)
                acc[key] = acc.get(key, 0.0) + (c if i == j else c / 2)
            elif u in free_pos:
                t = free_pos[u]
                for k, sgn in ((2 * t + 1, 1.0), (2 * t + 2, -1.0)):
                    key = (diag, k, k)
                    acc[key] = acc.get(key, 0.0) + sgn * c
            else:
                raise KeyError(f"unknown {u} is neither a free scalar nor a Gram entry")
        return acc

    entries = []
    if sdp.objective is not None:
        for (b, i, j), v in sorted(expand(sdp.objective, -1.0).items()):
            if v:
                entries.append((0, b, i, j, v))
    c = []
    for k, eq in enumerate(sdp.equalities, start=1):
        c.append(-float(eq.constant))
        for (b, i, j), v in sorted(expand(eq, 1.0).items()):
            if v:
                entries.append((k, b, i, j, v))
    return SDPAData(len(sdp.equalities), sizes, c, entries)


def write_sdpa(data: SDPAData, out: TextIO) -> None:
    out.write(f"{data.m}\n")
    out.write(f"{len(data.block_sizes)}\n")
    out.write(" ".join(str(s) for s in data.block_sizes) + "\n")
    out.write(" ".join(_num(v) for v in data.c) + "\n")
    for matno, b, i, j, v in data.entries:
        out.write(f"{matno} {b} {i} {j} {_num(v)}\n")


def sdp_emit(sdp: SDPProblem, destination=None) -> str:
    """Serialise ``sdp``; also write it to ``destination`` (path or stream) if given."""
    buf = io.StringIO()
    write_sdpa(to_sdpa(sdp), buf)
    text = buf.getvalue()
    if destination is not None:
        if isinstance(destination, (str, os.PathLike)):
            with open(destination, "w") as fh:
                fh.write(text)
        else:
            destination.write(text)
    return text


def _read_text(source) -> str:
    if isinstance(source, os.PathLike) or (isinstance(source, str) and "\n" not in source and os.path.exists(source)):
        with open(source) as fh:
            return fh.read()
    if hasattr(source, "read"):
        return source.read()
    return source


def _tokens(line: str) -> list[str]:
    return line.replace(",", " ").replace("{", " ").replace("}", " ").replace("(", " ").replace(")", " ").split()


def _data_lines(text: str, keep_blank: int = 0) -> list[str]:
    """Non-comment lines; the first ``keep_blank`` may be blank (empty header fields)."""
    out = []
    for ln in text.splitlines():
        if ln.lstrip().startswith(('"', "*")):
            continue
        if ln.strip() or len(out) < keep_blank:
            out.append(ln)
    return out


def read_sdpa(source) -> SDPAData:
    """Parse an SDPA sparse problem file."""
    lines = _data_lines(_read_text(source), keep_blank=4)
    if len(lines) < 4:
        raise SDPFormatError("SDPA problem needs four header lines")
    try:
        m = int(_tokens(lines[0])[0])
        nblocks = int(_tokens(lines[1])[0])
        sizes = [int(t) for t in _tokens(lines[2])]
        c = [float(t) for t in _tokens(lines[3])]
    except (ValueError, IndexError) as exc:
        raise SDPFormatError(f"bad SDPA header: {exc}") from None
    if len(sizes) != nblocks:
        raise SDPDimensionError(f"header announces {nblocks} blocks but lists {len(sizes)} sizes")
    if len(c) != m:
        raise SDPDimensionError(f"objective vector has {len(c)} entries, expected {m}")
    entries = []
    for ln in lines[4:]:
        if not ln.strip():
            continue
        tok = _tokens(ln)
        if len(tok) != 5:
            raise SDPFormatError(f"entry line needs five fields: {ln!r}")
        try:
            matno, b, i, j = (int(t) for t in tok[:4])
            v = float(tok[4])
        except ValueError:
            raise SDPFormatError(f"bad entry line: {ln!r}") from None
        _check_position(sizes, b, i, j)
        if not 0 <= matno <= m:
            raise SDPDimensionError(f"constraint index {matno} out of range")
        entries.append((matno, b, i, j, v))
    return SDPAData(m, sizes, c, entries)


def _check_position(sizes: list[int], b: int, i: int, j: int) -> None:
    if not 1 <= b <= len(sizes):
        raise SDPDimensionError(f"block {b} out of range (have {len(sizes)})")
    n = abs(sizes[b - 1])
    if not (1 <= i <= n and 1 <= j <= n):
        raise SDPDimensionError(f"entry ({i},{j}) outside block {b} of size {n}")
    if sizes[b - 1] < 0 and i != j:
        raise SDPDimensionError(f"off-diagonal entry in diagonal block {b}")


@dataclass
class SDPSolution:
    """Primal matrices ``X`` (one per block; diagonal blocks as full matrices) and dual ``y``."""

    y: list[float]
    X: list[np.ndarray]

    def write(self, out: TextIO, block_sizes: list[int]) -> None:
        out.write(" ".join(_num(v) for v in self.y) + "\n")
        for b, (size, mat) in enumerate(zip(block_sizes, self.X), start=1):
            n = abs(size)
            for i in range(n):
                for j in range(i, n if size > 0 else i + 1):
                    v = mat[i, j]
                    if v != 0:
                        out.write(f"2 {b} {i + 1} {j + 1} {_num(v)}\n")

    def text(self, block_sizes: list[int]) -> str:
        buf = io.StringIO()
        self.write(buf, block_sizes)
        return buf.getvalue()


def parse_solution(source, block_sizes: list[int], m: int | None = None) -> SDPSolution:
    """Parse a CSDP-style solution: line 1 is ``y``, then ``matno block i j value``
    lines where ``matno`` 1 is the dual slack ``Z`` and 2 the primal ``X``."""
    lines = _data_lines(_read_text(source), keep_blank=1)
    if not lines:
        raise SDPFormatError("empty solution")
    try:
        y = [float(t) for t in _tokens(lines[0])]
    except ValueError:
        raise SDPFormatError(f"bad dual vector line: {lines[0]!r}") from None
    if m is not None and len(y) != m:
        raise SDPDimensionError(f"dual vector has {len(y)} entries, expected {m}")
    X = [np.zeros((abs(s), abs(s))) for s in block_sizes]
    for ln in lines[1:]:
        tok = _tokens(ln)
        if len(tok) != 5:
            raise SDPFormatError(f"solution line needs five fields: {ln!r}")
        try:
            matno, b, i, j = (int(t) for t in tok[:4])
            v = float(tok[4])
        except ValueError:
            raise SDPFormatError(f"bad solution line: {ln!r}") from None
        if matno not in (1, 2):
            raise SDPFormatError(f"matrix number must be 1 or 2, got {matno}")
        _check_position(block_sizes, b, i, j)
        if matno == 2:
            X[b - 1][i - 1, j - 1] = v
            X[b - 1][j - 1, i - 1] = v
    return SDPSolution(y, X)


@dataclass
class SDPAssignment:
    """Values for an :class:`SDPProblem`'s unknowns recovered from a solution."""

    scalars: dict[str, float]
    entries: dict[str, float]
    matrices: list[np.ndarray]

    @property
    def values(self) -> dict[str, float]:
        return {**self.entries, **self.scalars}


def assignment_from_solution(sdp: SDPProblem, sol: SDPSolution) -> SDPAssignment:
    expected = len(sdp.blocks) + (1 if sdp.free else 0)
    if len(sol.X) != expected:
        raise SDPDimensionError(f"solution has {len(sol.X)} blocks, problem has {expected}")
    entries = {}
    mats = []
    for blk, X in zip(sdp.blocks, sol.X):
        if X.shape != (blk.size, blk.size):
            raise SDPDimensionError(f"block {blk.name} has shape {X.shape}, expected size {blk.size}")
        mats.append(X)
        for (i, j), name in blk.entries.items():
            entries[name] = float(X[i, j])
    scalars = {}
    if sdp.free:
        D = sol.X[-1]
        if D.shape != (2 * len(sdp.free),) * 2:
            raise SDPDimensionError("free-variable block has the wrong size")
        for t, v in enumerate(sdp.free):
            scalars[v] = float(D[2 * t, 2 * t] - D[2 * t + 1, 2 * t + 1])
    return SDPAssignment(scalars, entries, mats)


def sdp_ingest(source, sdp: SDPProblem) -> SDPAssignment:
    """Read an external solver's solution for ``sdp``.

    Only structure is validated here; whether the values certify anything is
    decided later by the witness checks.
    """
    data = to_sdpa(sdp)
    sol = parse_solution(source, data.block_sizes, data.m)
    return assignment_from_solution(sdp, sol)


def residuals(sdp: SDPProblem, values: Mapping[str, float]) -> np.ndarray:
    """Absolute residual of every equality at ``values``."""
    out = []
    for eq in sdp.equalities:
        r = float(eq.constant) + sum(float(c) * float(values.get(u, 0.0)) for u, c in eq.coeffs.items())
        out.append(abs(r))
    return np.array(out)
