"""Moment relaxations of AC optimal power flow.

Builds order-gamma moment relaxations of the rectangular-coordinate OPF
problem, solves them with a built-in dense interior-point method, certifies
global optimality through the rank of the moment matrix, and extracts the
optimal voltage phasors.  Also exports SDPA files and samples feasible
regions of small cases.
"""

from .netmodel import (
    Branch,
    Bus,
    CaseParseError,
    CaseValidationError,
    Generator,
    Network,
    admittance_matrix,
    parse_case,
    serialize_case,
)
from .opf_poly import PolynomialProgram, assemble_opf
from .moment import OrderTooLowError, SdpProblem, assemble_relaxation
from .sdp import SdpSolution, SolverSettings, solve
from .extract import (
    CertifySettings,
    ExactnessReport,
    HierarchyResult,
    certify,
    extract_candidate,
    numerical_rank,
    solve_hierarchy,
    solve_order,
)
from .sdpa import export_sdpa, parse_sdpa

__version__ = "0.1.0"

__all__ = [
    "Branch", "Bus", "Generator", "Network",
    "CaseParseError", "CaseValidationError",
    "admittance_matrix", "parse_case", "serialize_case",
    "PolynomialProgram", "assemble_opf",
    "OrderTooLowError", "SdpProblem", "assemble_relaxation",
    "SdpSolution", "SolverSettings", "solve",
    "CertifySettings", "ExactnessReport", "HierarchyResult",
    "certify", "extract_candidate", "numerical_rank",
    "solve_hierarchy", "solve_order",
    "export_sdpa", "parse_sdpa",
]
