"""Order-gamma moment relaxation: basis, moment matrix, localizing matrices,
and assembly into a linear-matrix-inequality form conic program.

The relaxation's decision vector y has one entry per monomial of degree up
to 2*gamma.  The moment matrix indexes entries by sums of basis exponents,
so repeated monomials automatically share one variable and no explicit
consistency equalities are needed.  Equality constraints contribute blocks
whose entries are all forced to zero (dense linear equalities on y) instead
of paired positive-semidefinite blocks; that is equivalent and much better
conditioned for an interior-point method.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import inf

import numpy as np

from .opf_poly import CONSTRAINED, KIND_REF, PolynomialProgram
from .polynomial import (
    LinearExpr,
    Monomial,
    MomentIndex,
    Polynomial,
    apply_functional,
    graded_monomials,
)


class OrderTooLowError(ValueError):
    """Relaxation order below half the degree of some problem polynomial."""


def monomial_basis(nvars: int, order: int) -> list[Monomial]:
    """All monomials of the variables up to the given order, graded lex,
    starting with the constant."""
    if order < 0:
        raise OrderTooLowError(f"order {order} is negative")
    return graded_monomials(nvars, order)


@dataclass
class SymbolicPsdBlock:
    """Symmetric matrix of linear expressions in the moment variables."""

    dim: int
    entries: list[list[LinearExpr]]
    label: str
    order: int

    def entry(self, i: int, j: int) -> LinearExpr:
        return self.entries[i][j]

    def value(self, y: np.ndarray) -> np.ndarray:
        """Evaluate the block at a moment vector."""
        out = np.zeros((self.dim, self.dim))
        for i in range(self.dim):
            for j in range(i, self.dim):
                v = self.entries[i][j].evaluate(y)
                out[i, j] = v
                out[j, i] = v
        return out


@dataclass
class SdpProblem:
    """Conic program in LMI form over the moment variables.

    Minimize ``objective . y`` subject to each psd block being positive
    semidefinite, each zero block vanishing entrywise, and the fixed
    variables taking their pinned values (position 0, the constant moment,
    is always fixed to 1).
    """

    num_vars: int
    objective: LinearExpr
    psd_blocks: list[SymbolicPsdBlock]
    zero_blocks: list[SymbolicPsdBlock]
    fixed_vars: dict[int, float]
    index: MomentIndex | None = None
    variable_names: tuple[str, ...] = ()

    def block_dims(self) -> list[int]:
        return [b.dim for b in self.psd_blocks]


def _symmetric_block(dim: int, label: str, order: int, gen) -> SymbolicPsdBlock:
    """Build a block from gen(i, j) for i <= j, sharing the mirrored entries."""
    entries = [[None] * dim for _ in range(dim)]
    for i in range(dim):
        for j in range(i, dim):
            expr = gen(i, j)
            entries[i][j] = expr
            entries[j][i] = expr
    return SymbolicPsdBlock(dim=dim, entries=entries, label=label, order=order)


def build_moment_matrix(basis: list[Monomial], idx: MomentIndex, label: str = "moment") -> SymbolicPsdBlock:
    """Moment matrix: entry (i, j) is the variable for basis[i] + basis[j]."""
    order = max(sum(m) for m in basis)

    def gen(i: int, j: int) -> LinearExpr:
        mono = tuple(a + b for a, b in zip(basis[i], basis[j]))
        return LinearExpr({idx.position(mono): 1.0})

    return _symmetric_block(len(basis), label, order, gen)


def localizing_order(poly_degree: int, gamma: int) -> int:
    """Order gamma - beta of the localizing matrix for a constraint polynomial
    of the given degree (beta = ceil(degree / 2))."""
    beta = (poly_degree + 1) // 2
    return gamma - beta


def build_localizing_matrix(
    g: Polynomial, gamma: int, idx: MomentIndex, label: str = "localizing"
) -> SymbolicPsdBlock:
    """Localizing matrix of a shifted constraint polynomial g = f - a.

    Entry (i, j) applies the moment substitution to g * basis_i * basis_j
    over the basis of order gamma - beta.  Raises OrderTooLowError when the
    polynomial degree demands a higher relaxation order.
    """
    order = localizing_order(g.degree, gamma)
    if order < 0:
        raise OrderTooLowError(
            f"constraint {label!r} of degree {g.degree} needs relaxation order "
            f">= {(g.degree + 1) // 2}, got {gamma}"
        )
    basis = monomial_basis(g.nvars, order)

    def gen(i: int, j: int) -> LinearExpr:
        shift = tuple(a + b for a, b in zip(basis[i], basis[j]))
        expr = LinearExpr()
        for mono, coef in g.terms.items():
            total = tuple(a + b for a, b in zip(mono, shift))
            expr.add_term(idx.position(total), coef)
        return expr

    return _symmetric_block(len(basis), label, order, gen)


def minimum_order(program: PolynomialProgram) -> int:
    """Smallest admissible relaxation order for a polynomial program."""
    return max(program.min_order, 1)


def assemble_relaxation(program: PolynomialProgram, gamma: int) -> SdpProblem:
    """Assemble the order-gamma relaxation of a polynomial program.

    One localizing block per finite inequality side; equality constraints
    become zero blocks; the reference-angle equality (constrained mode) is
    enforced by fixing every moment with a positive exponent on the
    reference imaginary component to zero.
    """
    nvars = program.nvars
    if gamma < 1:
        raise OrderTooLowError(f"relaxation order must be >= 1, got {gamma}")
    violating = [
        con.label
        for con in program.constraints
        if localizing_order(con.poly.degree, gamma) < 0
    ]
    if program.objective.degree > 2 * gamma:
        violating.insert(0, "objective")
    if violating:
        raise OrderTooLowError(
            f"relaxation order {gamma} too low for: {', '.join(violating)}"
        )

    idx = MomentIndex(nvars, 2 * gamma)
    objective = apply_functional(program.objective, idx)
    psd_blocks: list[SymbolicPsdBlock] = []
    zero_blocks: list[SymbolicPsdBlock] = []
    fixed_vars: dict[int, float] = {0: 1.0}

    ref_q_slot = None
    if program.layout.mode == CONSTRAINED:
        ref_q_slot = program.layout.q_index(program.layout.ref_pos)

    for con in program.constraints:
        if con.kind == KIND_REF and con.is_equality and ref_q_slot is not None:
            # angle reference: every moment with a positive exponent on the
            # reference imaginary component is zero
            for pos, mono in enumerate(idx.exponents):
                if mono[ref_q_slot] > 0:
                    fixed_vars.setdefault(pos, 0.0)
            continue
        if con.is_equality:
            g = con.poly - con.lb
            zero_blocks.append(
                build_localizing_matrix(g, gamma, idx, label=f"{con.label}=")
            )
            continue
        if con.lb > -inf:
            g = con.poly - con.lb
            psd_blocks.append(
                build_localizing_matrix(g, gamma, idx, label=f"{con.label}>=lb")
            )
        if con.ub < inf:
            g = con.ub - con.poly
            psd_blocks.append(
                build_localizing_matrix(g, gamma, idx, label=f"{con.label}<=ub")
            )
    basis = monomial_basis(nvars, gamma)
    psd_blocks.append(build_moment_matrix(basis, idx))
    return SdpProblem(
        num_vars=len(idx),
        objective=objective,
        psd_blocks=psd_blocks,
        zero_blocks=zero_blocks,
        fixed_vars=fixed_vars,
        index=idx,
        variable_names=program.layout.names,
    )
