"""Exact LP solving and SDP problem exchange."""

from .lp import (
    FREE,
    INFEASIBLE,
    NONNEG,
    OPTIMAL,
    UNBOUNDED,
    LPProblem,
    LPResult,
    simplex_solve,
)
from .sdp import (
    SDPAData,
    SDPAssignment,
    SDPBlock,
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

__all__ = [
    "FREE",
    "INFEASIBLE",
    "NONNEG",
    "OPTIMAL",
    "UNBOUNDED",
    "LPProblem",
    "LPResult",
    "simplex_solve",
    "SDPAData",
    "SDPAssignment",
    "SDPBlock",
    "SDPDimensionError",
    "SDPFormatError",
    "SDPProblem",
    "SDPSolution",
    "parse_solution",
    "read_sdpa",
    "residuals",
    "sdp_emit",
    "sdp_ingest",
]
