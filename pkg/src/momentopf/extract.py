"""Rank diagnostics, solution extraction and the order-escalation driver.

A relaxation is certified exact by inspecting the moment matrix at the
solver output: rank one means the moment vector lifts a single point, whose
voltage components sit in the degree-one moments.  The extracted candidate
is then checked against the original polynomial constraints, and the gap
between its cost and the relaxation bound decides the verdict.  Higher rank
with a closed gap is reported as suspected multiple optima; recovering the
individual optima in that situation is out of scope.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import sdp
from .moment import OrderTooLowError, SdpProblem, assemble_relaxation, minimum_order
from .netmodel import Network
from .opf_poly import ELIMINATED, PolynomialProgram, assemble_opf, shift_program

VERDICT_GLOBAL = "globally-optimal"
VERDICT_INEXACT = "inexact-lower-bound"
VERDICT_MULTIPLE = "multiple-optima-suspected"


@dataclass
class CertifySettings:
    """Thresholds for the exactness verdict.

    The rank tolerance is a relative eigenvalue threshold; verdicts are
    sensitive to it, which is why it is exposed rather than hard-wired.
    """

    rank_tol: float = 1e-6
    gap_tol: float = 1e-5
    feas_tol: float = 1e-6


def numerical_rank(matrix: np.ndarray, rank_tol: float = 1e-6) -> int:
    """Count of eigenvalues above rank_tol * max(1, largest eigenvalue)."""
    eigs = np.linalg.eigvalsh(np.asarray(matrix))
    if eigs.size == 0:
        return 0
    return int(np.sum(eigs > rank_tol * max(1.0, eigs[-1])))


def extract_candidate(y: np.ndarray, program: PolynomialProgram) -> tuple[np.ndarray, np.ndarray]:
    """Read voltages from the degree-one moments (positions 1..nvars).

    Divides by the constant moment for safety and restores the eliminated
    reference imaginary component as zero.  Always succeeds; certification
    decides whether the result means anything.
    """
    layout = program.layout
    y0 = y[0] if y[0] != 0.0 else 1.0
    point = np.asarray(y[1 : 1 + layout.nvars]) / y0
    return layout.phasors_from_point(point)


@dataclass
class ExactnessReport:
    """Rank, candidate quality and verdict for one solved relaxation."""

    rank: int
    eigenvalues: np.ndarray
    v_d: np.ndarray
    v_q: np.ndarray
    violations: dict[str, float]
    candidate_cost: float
    bound: float
    gap: float
    verdict: str

    @property
    def worst_violation(self) -> float:
        return max(self.violations.values(), default=0.0)


def certify(
    net: Network,
    candidate: tuple[np.ndarray, np.ndarray],
    bound: float,
    settings: CertifySettings | None = None,
    *,
    moment_matrix: np.ndarray,
    program: PolynomialProgram | None = None,
    mode: str = ELIMINATED,
) -> ExactnessReport:
    """Judge a candidate against the original problem and a relaxation bound.

    globally-optimal requires a rank-one moment matrix, a feasible candidate
    and a closed relative gap.  Rank above one with the gap still closed is
    flagged as suspected multiple optima rather than failure.
    """
    if settings is None:
        settings = CertifySettings()
    if program is None:
        program = assemble_opf(net, mode)
    v_d, v_q = candidate
    point = program.layout.point_from_phasors(v_d, v_q)
    violations = program.max_violation(point, by_kind=True)
    cost = program.objective.evaluate(point)
    gap = (cost - bound) / max(1.0, abs(bound))
    eigs = np.linalg.eigvalsh(np.asarray(moment_matrix))
    rank = int(np.sum(eigs > settings.rank_tol * max(1.0, eigs[-1]))) if eigs.size else 0

    feasible = max(violations.values(), default=0.0) <= settings.feas_tol
    closed = gap <= settings.gap_tol
    if feasible and closed:
        verdict = VERDICT_GLOBAL if rank == 1 else VERDICT_MULTIPLE
    else:
        verdict = VERDICT_INEXACT
    return ExactnessReport(
        rank=rank,
        eigenvalues=eigs,
        v_d=np.asarray(v_d, dtype=float),
        v_q=np.asarray(v_q, dtype=float),
        violations=violations,
        candidate_cost=cost,
        bound=bound,
        gap=gap,
        verdict=verdict,
    )


@dataclass
class OrderRecord:
    """One hierarchy rung: relaxation order, bound, report, solve statistics."""

    gamma: int
    bound: float
    solution: sdp.SdpSolution
    report: ExactnessReport | None
    assemble_seconds: float
    solve_seconds: float
    moment_dim: int
    error: str = ""


@dataclass
class HierarchyResult:
    orders: list[OrderRecord]
    final_verdict: str
    gamma_min: int | None
    best_bound: float


def moment_block_value(prob: SdpProblem, y: np.ndarray) -> np.ndarray:
    for blk in prob.psd_blocks:
        if blk.label == "moment":
            return blk.value(y)
    raise ValueError("problem has no moment block")


def solve_order(
    net: Network,
    gamma: int,
    mode: str = ELIMINATED,
    solver_settings: sdp.SolverSettings | None = None,
    certify_settings: CertifySettings | None = None,
    program: PolynomialProgram | None = None,
    recenter_retry: bool = True,
) -> OrderRecord:
    """Assemble, solve and certify a single relaxation order.

    If the first solve does not converge, the problem is rebuilt with the
    variables recentered at the extracted candidate and solved again; the
    recentered relaxation is congruent to the original (identical bound and
    moment-matrix rank) but numerically far better conditioned.
    """
    if program is None:
        program = assemble_opf(net, mode)
    t0 = time.perf_counter()
    prob = assemble_relaxation(program, gamma)
    t1 = time.perf_counter()
    sol = sdp.solve(prob, solver_settings)
    center = np.zeros(program.nvars)
    used_program, used_prob = program, prob
    if recenter_retry and sol.status != sdp.STATUS_OPTIMAL and np.isfinite(sol.y).all():
        shift = np.asarray(sol.y[1 : 1 + program.nvars]) / (sol.y[0] or 1.0)
        if np.isfinite(shift).all() and np.abs(shift).max() < 10.0:
            shifted = shift_program(program, shift)
            prob_shifted = assemble_relaxation(shifted, gamma)
            sol_shifted = sdp.solve(prob_shifted, solver_settings)
            if sol_shifted.status == sdp.STATUS_OPTIMAL or (
                sol.status != sdp.STATUS_OPTIMAL and sol_shifted.gap < sol.gap
            ):
                sol = sol_shifted
                center = shift
                used_program, used_prob = shifted, prob_shifted
    t2 = time.perf_counter()
    moment_dim = prob.psd_blocks[-1].dim
    if sol.status in (sdp.STATUS_OPTIMAL, sdp.STATUS_MAX_ITERATIONS):
        offset_d, offset_q = extract_candidate(sol.y, used_program)
        center_d, center_q = program.layout.phasors_from_point(center)
        candidate = (offset_d + center_d, offset_q + center_q)
        report = certify(
            net, candidate, sol.objective, certify_settings,
            moment_matrix=moment_block_value(used_prob, sol.y),
            program=program,
        )
        if sol.status != sdp.STATUS_OPTIMAL and report.verdict != VERDICT_INEXACT:
            # an unconverged bound cannot back a global-optimality claim
            report.verdict = VERDICT_INEXACT
        bound = sol.objective
        error = "" if sol.status == sdp.STATUS_OPTIMAL else sol.message or sol.status
    else:
        report = None
        bound = float("nan")
        error = sol.message or sol.status
    return OrderRecord(
        gamma=gamma,
        bound=bound,
        solution=sol,
        report=report,
        assemble_seconds=t1 - t0,
        solve_seconds=t2 - t1,
        moment_dim=moment_dim,
        error=error,
    )


def solve_hierarchy(
    net: Network,
    gamma_max: int,
    mode: str = ELIMINATED,
    solver_settings: sdp.SolverSettings | None = None,
    certify_settings: CertifySettings | None = None,
    gamma_start: int | None = None,
) -> HierarchyResult:
    """Escalate the relaxation order until the verdict is globally-optimal
    or the budget runs out.  Solver failures are recorded and escalation
    continues."""
    program = assemble_opf(net, mode)
    start = minimum_order(program) if gamma_start is None else gamma_start
    if gamma_max < start:
        raise OrderTooLowError(
            f"order budget {gamma_max} is below the minimum admissible order {start}"
        )
    orders: list[OrderRecord] = []
    gamma_min = None
    best_bound = -float("inf")
    for gamma in range(start, gamma_max + 1):
        record = solve_order(
            net, gamma, mode, solver_settings, certify_settings, program=program
        )
        orders.append(record)
        if record.report is not None and np.isfinite(record.bound):
            best_bound = max(best_bound, record.bound)
        if record.report is not None and record.report.verdict == VERDICT_GLOBAL:
            gamma_min = gamma
            break
    if gamma_min is not None:
        final = VERDICT_GLOBAL
    else:
        final = VERDICT_INEXACT
        for record in reversed(orders):
            if record.report is not None and record.report.verdict == VERDICT_MULTIPLE:
                final = VERDICT_MULTIPLE
                break
    return HierarchyResult(
        orders=orders,
        final_verdict=final,
        gamma_min=gamma_min,
        best_bound=best_bound,
    )
