import math

import numpy as np
import pytest

from momentopf.netmodel import Branch, Bus, Generator, Network
from momentopf.opf_poly import (
    CONSTRAINED,
    ELIMINATED,
    KIND_P,
    KIND_Q,
    KIND_REF,
    KIND_V,
    assemble_opf,
    build_cost_poly,
    build_flow_polys,
    build_injection_polys,
    build_voltage_poly,
    make_layout,
)
import oracles


def isolated_bus_net(p_load=50.0):
    return Network(
        100.0,
        (Bus(1, 0.95, 1.05, p_load, 0.0, True),),
        (Generator(1, 0.0, 100.0, -50.0, 50.0, c1=1.0),),
        (),
    )


def random_point(rng, layout):
    point = rng.uniform(-1.1, 1.1, layout.nvars)
    point[layout.ref_pos] = abs(point[layout.ref_pos])
    return point


def test_isolated_bus_injection_is_constant_load():
    net = isolated_bus_net(p_load=50.0)
    layout = make_layout(net)
    f_p, f_q = build_injection_polys(net, layout)[0]
    assert f_p.terms == {(0,): 0.5}
    assert f_q.is_zero()


def test_injections_match_complex_oracle(rng):
    for _ in range(10):
        net, _, _ = oracles.random_feasible_network(rng, 3)
        layout = make_layout(net)
        polys = build_injection_polys(net, layout)
        for _ in range(6):
            point = random_point(rng, layout)
            v_d, v_q = layout.phasors_from_point(point)
            p_gen, q_gen = oracles.injections(net, v_d, v_q)
            for k in range(net.n_bus):
                assert polys[k][0].evaluate(point) == pytest.approx(p_gen[k], rel=1e-9, abs=1e-9)
                assert polys[k][1].evaluate(point) == pytest.approx(q_gen[k], rel=1e-9, abs=1e-9)


def test_purely_reactive_line_structure():
    net = Network(
        100.0,
        (Bus(1, 0.9, 1.1, is_reference=True), Bus(2, 0.9, 1.1)),
        (),
        (Branch(1, 2, 0.0, 0.1),),
    )
    layout = make_layout(net)
    f_p1 = build_injection_polys(net, layout)[0][0]
    # with G = 0 the active injection at bus 1 has only Vd-Vq cross terms
    assert all(sum(m) == 2 for m in f_p1.terms)
    assert (2, 0, 0) not in f_p1.terms  # no Vd1^2 term when G vanishes


def test_voltage_poly_two_unit_terms(two_bus_net):
    layout = make_layout(two_bus_net)
    f_v2 = build_voltage_poly(two_bus_net, 1, layout)
    assert f_v2.terms == {(0, 2, 0): 1.0, (0, 0, 2): 1.0}
    # reference bus in eliminated mode: only the real component squared
    f_v1 = build_voltage_poly(two_bus_net, 0, layout)
    assert f_v1.terms == {(2, 0, 0): 1.0}
    assert f_v2.evaluate([0.0, 0.6, 0.8]) == pytest.approx(1.0)


def test_flow_zero_across_identical_phasors():
    net = Network(
        100.0,
        (Bus(1, 0.9, 1.1, is_reference=True), Bus(2, 0.9, 1.1)),
        (),
        (Branch(1, 2, 0.02, 0.1, b_sh=0.0, s_max=100.0),),
    )
    layout = make_layout(net)
    (f_p, f_q, _), _ = build_flow_polys(net, net.branches[0], layout)
    point = layout.point_from_phasors([1.01, 1.01], [0.0, 0.0])
    assert f_p.evaluate(point) == pytest.approx(0.0, abs=1e-12)
    assert f_q.evaluate(point) == pytest.approx(0.0, abs=1e-12)


def test_lossless_line_antisymmetric_active_flow(rng):
    net = Network(
        100.0,
        (Bus(1, 0.9, 1.1, is_reference=True), Bus(2, 0.9, 1.1)),
        (),
        (Branch(1, 2, 0.0, 0.15, s_max=100.0),),
    )
    layout = make_layout(net)
    fwd, rev = build_flow_polys(net, net.branches[0], layout)
    for _ in range(8):
        point = random_point(rng, layout)
        assert fwd[0].evaluate(point) + rev[0].evaluate(point) == pytest.approx(0.0, abs=1e-10)


def test_flow_polys_match_pi_model_oracle(rng):
    for _ in range(8):
        net, _, _ = oracles.random_feasible_network(rng, 3, with_flow_limits=True)
        layout = make_layout(net)
        for branch in net.branches:
            fwd, rev = build_flow_polys(net, branch, layout)
            for _ in range(4):
                point = random_point(rng, layout)
                v_d, v_q = layout.phasors_from_point(point)
                s_lm, s_ml = oracles.branch_flows(net, branch, v_d, v_q)
                assert fwd[0].evaluate(point) == pytest.approx(s_lm.real, rel=1e-9, abs=1e-9)
                assert fwd[1].evaluate(point) == pytest.approx(s_lm.imag, rel=1e-9, abs=1e-9)
                assert fwd[2].evaluate(point) == pytest.approx(abs(s_lm) ** 2, rel=1e-9, abs=1e-9)
                assert rev[0].evaluate(point) == pytest.approx(s_ml.real, rel=1e-9, abs=1e-9)


def test_cost_single_generator_linear_is_injection():
    net = isolated_bus_net(p_load=0.0)
    layout = make_layout(net)
    cost = build_cost_poly(net, layout)
    f_p = build_injection_polys(net, layout)[0][0]
    scaled = {m: c * 100.0 for m, c in f_p.terms.items()}  # c1 = 1 $/MWh on a 100 MVA base
    assert cost.terms == pytest.approx(scaled)


def test_cost_zero_coefficients_gives_zero_polynomial():
    net = Network(
        100.0,
        (Bus(1, 0.95, 1.05, is_reference=True),),
        (Generator(1, 0.0, 100.0, -50.0, 50.0),),
        (),
    )
    assert build_cost_poly(net).is_zero()


def test_cost_matches_complex_oracle(rng):
    for _ in range(10):
        net, _, _ = oracles.random_feasible_network(rng, int(rng.integers(2, 4)))
        layout = make_layout(net)
        cost = build_cost_poly(net, layout)
        for _ in range(5):
            point = random_point(rng, layout)
            v_d, v_q = layout.phasors_from_point(point)
            assert cost.evaluate(point) == pytest.approx(
                oracles.cost_of(net, v_d, v_q), rel=1e-9, abs=1e-9
            )


def test_assemble_eliminated_variable_list(two_bus_net):
    program = assemble_opf(two_bus_net, ELIMINATED)
    assert program.layout.names == ("Vd1", "Vd2", "Vq2")


def test_assemble_constrained_keeps_reference_component(two_bus_net):
    program = assemble_opf(two_bus_net, CONSTRAINED)
    assert program.layout.names == ("Vd1", "Vd2", "Vq1", "Vq2")
    ref_eq = [c for c in program.constraints if c.kind == KIND_REF and c.is_equality]
    assert len(ref_eq) == 1 and ref_eq[0].poly.terms == {(0, 0, 1, 0): 1.0}


def test_assemble_no_generator_case_structure():
    # without generators every injection is pinned at zero generation
    net = Network(
        100.0,
        (Bus(1, 0.95, 1.05, 10.0, 0.0, True), Bus(2, 0.95, 1.05, -10.0, 0.0)),
        (),
        (Branch(1, 2, 0.01, 0.1),),
    )
    program = assemble_opf(net)
    eq = [c for c in program.constraints if c.is_equality and c.kind in (KIND_P, KIND_Q)]
    bands = [c for c in program.constraints if c.kind == KIND_V]
    assert len(eq) == 2 * net.n_bus
    assert len(bands) == net.n_bus


def test_equality_constraint_recorded_for_pinned_generation():
    net = Network(
        100.0,
        (Bus(1, 0.95, 1.05, is_reference=True),),
        (Generator(1, 25.0, 25.0, -50.0, 50.0, c1=1.0),),
        (),
    )
    program = assemble_opf(net)
    pinned = [c for c in program.constraints if c.kind == KIND_P]
    assert pinned[0].is_equality and pinned[0].lb == pytest.approx(0.25)


def test_degree_ledger(two_bus_net, rng):
    net, _, _ = oracles.random_feasible_network(rng, 3, with_flow_limits=True,
                                                quadratic_cost=True)
    program = assemble_opf(net)
    degrees = {c.kind: set() for c in program.constraints}
    for con in program.constraints:
        degrees[con.kind].add(con.poly.degree)
    assert degrees[KIND_P] == {2} and degrees[KIND_Q] == {2} and degrees[KIND_V] == {2}
    if "flow" in degrees:
        assert degrees["flow"] == {4}
    assert program.objective.degree == 4
    assert program.min_order == 2


def test_feasibility_equivalence_with_oracle(rng):
    # polynomial-program feasibility agrees with the complex-arithmetic oracle
    for _ in range(6):
        net, v_d, v_q = oracles.random_feasible_network(rng, int(rng.integers(2, 4)))
        program = assemble_opf(net)
        layout = program.layout
        for _ in range(60):
            point = layout.point_from_phasors(
                v_d + rng.normal(0, 0.05, net.n_bus),
                v_q + rng.normal(0, 0.05, net.n_bus),
            )
            point[layout.ref_pos] = abs(point[layout.ref_pos])
            vd2, vq2 = layout.phasors_from_point(point)
            oracle_worst = oracles.worst_violation(net, vd2, vq2)
            poly_worst = program.max_violation(point)
            assert (oracle_worst <= 1e-9) == (poly_worst <= 1e-9) or (
                abs(oracle_worst - poly_worst) <= 2e-9
            )
            assert poly_worst == pytest.approx(oracle_worst, rel=1e-9, abs=1e-9)
