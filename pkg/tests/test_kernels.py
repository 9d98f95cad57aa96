import math

import numpy as np
import pytest

from momentopf import kernels
from momentopf.opf_poly import assemble_opf
from momentopf.polynomial import Polynomial
import oracles


def random_polys(rng, nvars, count=4):
    out = []
    for _ in range(count):
        terms = {}
        for _ in range(5):
            mono = tuple(int(e) for e in rng.integers(0, 3, nvars))
            terms[mono] = float(rng.normal())
        out.append(Polynomial(nvars, terms))
    return out


def test_backend_resolution(monkeypatch):
    monkeypatch.setenv("MOMENTOPF_BACKEND", "numpy")
    assert kernels.active_backend() == "numpy"
    monkeypatch.setenv("MOMENTOPF_BACKEND", "auto")
    assert kernels.active_backend() in ("numba", "numpy")
    monkeypatch.setenv("MOMENTOPF_BACKEND", "nonsense")
    with pytest.raises(ValueError):
        kernels.active_backend()


def test_eval_batch_matches_scalar_evaluation(rng):
    polys = random_polys(rng, 3)
    pack = kernels.PolyPack(polys)
    pts = rng.uniform(-1.5, 1.5, (50, 3))
    values = kernels.eval_batch(pack, pts, backend="numpy")
    for r in range(10):
        for c, poly in enumerate(polys):
            assert values[r, c] == pytest.approx(poly.evaluate(pts[r]), rel=1e-12, abs=1e-12)


def test_backends_agree(rng):
    if not kernels._HAVE_NUMBA:
        pytest.skip("numba unavailable")
    polys = random_polys(rng, 4, count=6)
    pack = kernels.PolyPack(polys)
    pts = rng.uniform(-2, 2, (400, 4))
    a = kernels.eval_batch(pack, pts, backend="numpy")
    b = kernels.eval_batch(pack, pts, backend="numba")
    assert np.allclose(a, b, rtol=1e-13, atol=1e-13)


def test_scan_feasible_flags_and_slack(rng):
    # single constraint 1 <= x0^2 + x1^2 <= 4 (annulus)
    p = Polynomial(2, {(2, 0): 1.0, (0, 2): 1.0})
    pack = kernels.PolyPack([p])
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.5, 0.0], [3.0, 0.0]])
    for backend in ("numpy", "numba") if kernels._HAVE_NUMBA else ("numpy",):
        feas, slack = kernels.scan_feasible(
            pack, np.array([1.0]), np.array([4.0]), pts, backend=backend
        )
        assert list(feas) == [False, True, True, False]
        assert slack[0] == pytest.approx(-1.0)
        assert slack[1] == pytest.approx(0.0)
        assert slack[2] == pytest.approx(1.25)


def test_scan_matches_program_violations(two_bus_tight_net, rng):
    program = assemble_opf(two_bus_tight_net)
    cons = list(program.constraints)
    pack = kernels.PolyPack([c.poly for c in cons])
    lb = np.array([c.lb for c in cons])
    ub = np.array([c.ub for c in cons])
    pts = rng.uniform(-1.1, 1.1, (200, program.nvars))
    feas, slack = kernels.scan_feasible(pack, lb, ub, pts, tol=1e-9, backend="numpy")
    for r in range(0, 200, 17):
        worst = program.max_violation(pts[r])
        assert feas[r] == (worst <= 1e-9)
        if worst > 0:
            assert slack[r] == pytest.approx(-worst, rel=1e-12, abs=1e-12)


def test_infinite_bounds_skipped():
    p = Polynomial(1, {(1,): 1.0})
    pack = kernels.PolyPack([p])
    feas, slack = kernels.scan_feasible(
        pack, np.array([-math.inf]), np.array([math.inf]),
        np.array([[5.0], [-7.0]]), backend="numpy",
    )
    assert feas.all()
    assert np.all(np.isinf(slack))


def test_pack_rejects_mixed_spaces():
    with pytest.raises(ValueError):
        kernels.PolyPack([Polynomial(2, {(1, 0): 1.0}), Polynomial(3, {(1, 0, 0): 1.0})])
