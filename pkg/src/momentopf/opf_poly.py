"""Polynomial formulation of the AC optimal power flow problem.

Voltage phasors are split into rectangular components, making every power
flow quantity a polynomial: bus injections and squared voltage magnitudes
are quadratic, squared apparent-power branch flows are quartic, and the
generation cost is quadratic in the active injections (so quartic in the
voltage components when the quadratic cost coefficient is nonzero).

The reference bus fixes the angle: its imaginary component is zero (either
eliminated from the variable list or pinned by an equality) and its real
component is constrained nonnegative so the phasor points along the
positive real axis.  Without the orientation constraint every problem would
carry an exact sign symmetry (all components negated), which makes the
optimizer a two-point set and defeats rank-1 certification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .netmodel import Branch, Network, admittance_matrix
from .polynomial import Polynomial

ELIMINATED = "eliminated"
CONSTRAINED = "constrained"

KIND_P = "active-power"
KIND_Q = "reactive-power"
KIND_V = "voltage"
KIND_FLOW = "flow"
KIND_REF = "reference"


@dataclass(frozen=True)
class VariableLayout:
    """Ordering of voltage-component variables for one problem instance.

    Real components of all buses come first, then imaginary components;
    in eliminated mode the reference bus has no imaginary slot.
    """

    mode: str
    n_bus: int
    ref_pos: int
    names: tuple[str, ...]
    _q_slot: tuple[int, ...] = field(repr=False)  # -1 where eliminated

    @property
    def nvars(self) -> int:
        return len(self.names)

    def d_index(self, bus_pos: int) -> int:
        return bus_pos

    def q_index(self, bus_pos: int) -> int | None:
        slot = self._q_slot[bus_pos]
        return None if slot < 0 else slot

    def point_from_phasors(self, v_d, v_q) -> np.ndarray:
        point = np.zeros(self.nvars)
        for k in range(self.n_bus):
            point[k] = v_d[k]
            slot = self._q_slot[k]
            if slot >= 0:
                point[slot] = v_q[k]
        return point

    def phasors_from_point(self, point) -> tuple[np.ndarray, np.ndarray]:
        point = np.asarray(point, dtype=float)
        v_d = point[: self.n_bus].copy()
        v_q = np.zeros(self.n_bus)
        for k in range(self.n_bus):
            slot = self._q_slot[k]
            if slot >= 0:
                v_q[k] = point[slot]
        return v_d, v_q


def make_layout(net: Network, mode: str = ELIMINATED) -> VariableLayout:
    if mode not in (ELIMINATED, CONSTRAINED):
        raise ValueError(f"unknown reference mode {mode!r}")
    n = net.n_bus
    ref = net.reference_position
    names = [f"Vd{bus.id}" for bus in net.buses]
    q_slot = [-1] * n
    slot = n
    for k in range(n):
        if mode == ELIMINATED and k == ref:
            continue
        q_slot[k] = slot
        names.append(f"Vq{net.buses[k].id}")
        slot += 1
    return VariableLayout(
        mode=mode, n_bus=n, ref_pos=ref, names=tuple(names), _q_slot=tuple(q_slot)
    )


@dataclass(frozen=True)
class Constraint:
    """Polynomial constraint lb <= f(x) <= ub; equality when lb == ub."""

    poly: Polynomial
    lb: float
    ub: float
    kind: str
    label: str

    @property
    def is_equality(self) -> bool:
        return self.lb == self.ub

    def violation(self, point) -> float:
        """Max of lower/upper bound violations at a point (0 if satisfied)."""
        val = self.poly.evaluate(point)
        worst = 0.0
        if self.lb > -math.inf:
            worst = max(worst, self.lb - val)
        if self.ub < math.inf:
            worst = max(worst, val - self.ub)
        return worst


@dataclass(frozen=True)
class PolynomialProgram:
    """Objective and constraint polynomials of one OPF instance."""

    layout: VariableLayout
    objective: Polynomial
    constraints: tuple[Constraint, ...]

    @property
    def nvars(self) -> int:
        return self.layout.nvars

    @property
    def min_order(self) -> int:
        """Smallest relaxation order that can represent every polynomial."""
        deg = max(self.objective.degree, 1)
        for con in self.constraints:
            deg = max(deg, con.poly.degree)
        return (deg + 1) // 2

    def max_violation(self, point, by_kind: bool = False):
        """Worst constraint violation at a point, optionally split by kind."""
        if not by_kind:
            return max((c.violation(point) for c in self.constraints), default=0.0)
        worst: dict[str, float] = {}
        for con in self.constraints:
            v = con.violation(point)
            worst[con.kind] = max(worst.get(con.kind, 0.0), v)
        return worst


def shift_program(program: PolynomialProgram, center) -> PolynomialProgram:
    """Recenter a program: constraints and objective in offsets from center.

    The shifted program's variables are x - center; relaxations built from
    it are congruent to the original ones (same bounds, same moment-matrix
    rank), but the monomial basis is far better conditioned when center
    lies near the feasible region.
    """
    center = np.asarray(center, dtype=float)
    constraints = tuple(
        Constraint(con.poly.shifted(center), con.lb, con.ub, con.kind, con.label)
        for con in program.constraints
    )
    return PolynomialProgram(
        layout=program.layout,
        objective=program.objective.shifted(center),
        constraints=constraints,
    )


def _component(layout: VariableLayout, index: int | None) -> Polynomial:
    """Variable polynomial, or zero for an eliminated component."""
    if index is None:
        return Polynomial(layout.nvars)
    return Polynomial.variable(layout.nvars, index)


def build_injection_polys(net: Network, layout: VariableLayout | None = None):
    """Per-bus active/reactive injection polynomials (generation at the bus).

    Each is the quadratic network term of the corresponding power balance
    plus the constant load demand, so its value is the bus generation.
    """
    if layout is None:
        layout = make_layout(net)
    G, B = admittance_matrix(net)
    pu = net.per_unit()
    n = net.n_bus
    out = []
    for k in range(n):
        vd_k = _component(layout, layout.d_index(k))
        vq_k = _component(layout, layout.q_index(k))
        # current components: sum_i (G_ik Vdi - B_ik Vqi) and (B_ik Vdi + G_ik Vqi)
        re_cur = Polynomial(layout.nvars)
        im_cur = Polynomial(layout.nvars)
        for i in range(n):
            if G[i, k] == 0.0 and B[i, k] == 0.0:
                continue
            vd_i = _component(layout, layout.d_index(i))
            vq_i = _component(layout, layout.q_index(i))
            re_cur = re_cur + vd_i * G[i, k] - vq_i * B[i, k]
            im_cur = im_cur + vd_i * B[i, k] + vq_i * G[i, k]
        f_p = vd_k * re_cur + vq_k * im_cur + pu.p_load[k]
        f_q = -(vd_k * im_cur) + vq_k * re_cur + pu.q_load[k]
        out.append((f_p, f_q))
    return out


def build_voltage_poly(net: Network, bus_pos: int, layout: VariableLayout | None = None) -> Polynomial:
    """Squared voltage magnitude at a bus: Vd^2 + Vq^2."""
    if layout is None:
        layout = make_layout(net)
    vd = _component(layout, layout.d_index(bus_pos))
    vq = _component(layout, layout.q_index(bus_pos))
    return vd * vd + vq * vq


def build_flow_polys(net: Network, branch: Branch, layout: VariableLayout | None = None):
    """Directed branch-flow polynomials for both ends of a pi-model branch.

    Returns ((fP_lm, fQ_lm, fS_lm), (fP_ml, fQ_ml, fS_ml)) where fS is the
    squared apparent power, a quartic.  Losses make the two ends differ.
    """
    if layout is None:
        layout = make_layout(net)
    z2 = branch.r * branch.r + branch.x * branch.x
    g = branch.r / z2
    b = -branch.x / z2

    def one_end(l: int, m: int):
        vd_l = _component(layout, layout.d_index(l))
        vq_l = _component(layout, layout.q_index(l))
        vd_m = _component(layout, layout.d_index(m))
        vq_m = _component(layout, layout.q_index(m))
        cross = vd_l * vq_m - vd_m * vq_l
        sq_l = vd_l * vd_l + vq_l * vq_l
        dot = vd_l * vd_m + vq_l * vq_m
        f_p = cross * b + (sq_l - dot) * g
        f_q = (dot - sq_l) * b + cross * g - sq_l * (branch.b_sh / 2.0)
        f_s = f_p * f_p + f_q * f_q
        return f_p, f_q, f_s

    l = net.bus_position(branch.from_bus)
    m = net.bus_position(branch.to_bus)
    return one_end(l, m), one_end(m, l)


def build_cost_poly(net: Network, layout: VariableLayout | None = None) -> Polynomial:
    """Total generation cost polynomial over all generators."""
    if layout is None:
        layout = make_layout(net)
    pu = net.per_unit()
    injections = build_injection_polys(net, layout)
    total = Polynomial(layout.nvars)
    for k in range(net.n_bus):
        if not pu.has_gen[k]:
            continue
        c2, c1, c0 = pu.cost[k]
        f_p = injections[k][0]
        if c2 != 0.0:
            total = total + f_p * f_p * c2
        if c1 != 0.0:
            total = total + f_p * c1
        if c0 != 0.0:
            total = total + c0
    return total


def assemble_opf(net: Network, mode: str = ELIMINATED) -> PolynomialProgram:
    """Full polynomial program: cost objective plus injection, voltage,
    flow and reference constraints."""
    layout = make_layout(net, mode)
    pu = net.per_unit()
    injections = build_injection_polys(net, layout)
    constraints: list[Constraint] = []
    for k, bus in enumerate(net.buses):
        f_p, f_q = injections[k]
        constraints.append(Constraint(f_p, pu.p_min[k], pu.p_max[k], KIND_P, f"P@bus{bus.id}"))
        constraints.append(Constraint(f_q, pu.q_min[k], pu.q_max[k], KIND_Q, f"Q@bus{bus.id}"))
        f_v = build_voltage_poly(net, k, layout)
        constraints.append(Constraint(
            f_v, pu.v_min[k] ** 2, pu.v_max[k] ** 2, KIND_V, f"V@bus{bus.id}"
        ))
    for j, branch in enumerate(net.branches):
        if branch.s_max <= 0.0:
            continue
        limit = pu.s_max[j] ** 2
        fwd, rev = build_flow_polys(net, branch, layout)
        constraints.append(Constraint(
            fwd[2], -math.inf, limit, KIND_FLOW, f"S@{branch.from_bus}-{branch.to_bus}"
        ))
        constraints.append(Constraint(
            rev[2], -math.inf, limit, KIND_FLOW, f"S@{branch.to_bus}-{branch.from_bus}"
        ))
    ref = layout.ref_pos
    if mode == CONSTRAINED:
        vq_ref = _component(layout, layout.q_index(ref))
        constraints.append(Constraint(vq_ref, 0.0, 0.0, KIND_REF, "ref-angle"))
    vd_ref = _component(layout, layout.d_index(ref))
    constraints.append(Constraint(vd_ref, 0.0, math.inf, KIND_REF, "ref-orientation"))
    objective = build_cost_poly(net, layout)
    return PolynomialProgram(
        layout=layout, objective=objective, constraints=tuple(constraints)
    )
