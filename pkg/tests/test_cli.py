import json

import numpy as np
import pytest
from click.testing import CliRunner

from momentopf.cli import main
from conftest import case_path
import oracles
from momentopf.netmodel import parse_case


@pytest.fixture
def runner():
    return CliRunner()


def strip_timings(doc):
    if isinstance(doc, dict):
        return {k: strip_timings(v) for k, v in doc.items() if k != "timings"}
    if isinstance(doc, list):
        return [strip_timings(v) for v in doc]
    return doc


def test_solve_exact_exit_zero(runner, tmp_path):
    out = tmp_path / "report.json"
    result = runner.invoke(main, ["solve", case_path("two_bus.json"), "-g", "2", "--out", str(out)])
    assert result.exit_code == 0, result.output
    doc = json.loads(out.read_text())
    assert doc["verdict"] == "globally-optimal"
    assert doc["rank"] == 1
    assert doc["order"] == 2


def test_solve_reports_generation_consistent_with_oracle(runner, tmp_path):
    out = tmp_path / "report.json"
    runner.invoke(main, ["solve", case_path("two_bus.json"), "-g", "2", "--out", str(out)])
    doc = json.loads(out.read_text())
    net = parse_case(open(case_path("two_bus.json")).read())
    v_d = np.array(doc["candidate"]["v_d"])
    v_q = np.array(doc["candidate"]["v_q"])
    p, q = oracles.injections(net, v_d, v_q)
    for rec, pk, qk in zip(doc["generation"], p, q):
        assert rec["p_mw"] == pytest.approx(pk * net.base_mva, abs=1e-6)
        assert rec["q_mvar"] == pytest.approx(qk * net.base_mva, abs=1e-6)


def test_solve_order_too_low_is_error(runner):
    result = runner.invoke(main, ["solve", case_path("two_bus.json"), "-g", "1"])
    assert result.exit_code == 1
    assert "order" in result.output.lower()


def test_solve_malformed_json_is_error(runner, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{\n  not json\n")
    result = runner.invoke(main, ["solve", str(bad)])
    assert result.exit_code == 1
    assert "line" in result.output


def test_solve_missing_file_is_error(runner):
    result = runner.invoke(main, ["solve", "/nonexistent/case.json"])
    assert result.exit_code == 1


def test_solve_report_deterministic(runner, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (a, b):
        res = runner.invoke(main, ["solve", case_path("two_bus_tight.json"), "-g", "2",
                                   "--out", str(out)])
        assert res.exit_code == 0
    da = strip_timings(json.loads(a.read_text()))
    db = strip_timings(json.loads(b.read_text()))
    assert da == db


def test_solve_csv_format(runner, tmp_path):
    out = tmp_path / "report.csv"
    res = runner.invoke(main, ["solve", case_path("two_bus.json"), "-g", "2",
                               "--format", "csv", "--out", str(out)])
    assert res.exit_code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "key,value"
    assert any(line.startswith("verdict,") for line in lines)


def test_hierarchy_exit_codes_and_records(runner, tmp_path):
    out = tmp_path / "h.json"
    res = runner.invoke(main, ["hierarchy", case_path("two_bus_tight.json"),
                               "--max-order", "3", "--out", str(out)])
    assert res.exit_code == 0
    doc = json.loads(out.read_text())
    assert doc["gamma_min"] == 2
    assert [o["order"] for o in doc["orders"]] == [1, 2]
    assert doc["orders"][0]["bound"] < doc["orders"][1]["bound"] - 1e-4


def test_hierarchy_budget_below_gamma_min(runner, tmp_path):
    out = tmp_path / "h.json"
    res = runner.invoke(main, ["hierarchy", case_path("two_bus_tight.json"),
                               "--max-order", "1", "--out", str(out)])
    assert res.exit_code == 2
    doc = json.loads(out.read_text())
    assert doc["final_verdict"] == "inexact-lower-bound"
    assert doc["gamma_min"] is None


def test_export_block_census(runner, tmp_path):
    out = tmp_path / "prob.dat-s"
    res = runner.invoke(main, ["export", case_path("two_bus.json"), "-g", "2",
                               "--out", str(out)])
    assert res.exit_code == 0
    assert "10x10: 1" in res.output
    text = out.read_text()
    assert text.splitlines()[0].startswith('"')


def test_export_gamma_one_linear_case(runner, tmp_path):
    out = tmp_path / "prob.dat-s"
    res = runner.invoke(main, ["export", case_path("two_bus_tight.json"), "-g", "1",
                               "--out", str(out)])
    assert res.exit_code == 0
    # largest block is the order-1 moment matrix: 1 + nvars
    assert "4x4: 1" in res.output


def test_sample_space_csv_layout(runner, tmp_path):
    out = tmp_path / "cloud.csv"
    res = runner.invoke(main, ["sample-space", case_path("two_bus_tight.json"),
                               "--steps", "7", "--out", str(out)])
    assert res.exit_code == 0, res.output
    lines = out.read_text().splitlines()
    assert lines[0] == "Vd1,Vd2,Vq2,feasible,cost,slack_min"
    assert len(lines) == 1 + 7 ** 3


def test_sample_space_grid_spec_and_squared(runner, tmp_path):
    out = tmp_path / "cloud.csv"
    res = runner.invoke(main, [
        "sample-space", case_path("two_bus_tight.json"),
        "--grid", "Vd1=0.95:1.05:5", "--grid", "Vd2=-1:1:4", "--grid", "Vq2=-1:1:3",
        "--squared", "--out", str(out),
    ])
    assert res.exit_code == 0, res.output
    lines = out.read_text().splitlines()
    assert lines[0] == "Vd1,Vd2,Vq2,Vd1_sq,Vd2_sq,Vq2_sq,feasible,cost,slack_min"
    assert len(lines) == 1 + 5 * 4 * 3


def test_sample_space_infeasible_box(runner, tmp_path):
    out = tmp_path / "cloud.csv"
    res = runner.invoke(main, [
        "sample-space", case_path("two_bus_tight.json"),
        "--grid", "Vd1=0.2:0.3:3", "--grid", "Vd2=0.0:0.1:3", "--grid", "Vq2=0.0:0.1:3",
        "--out", str(out),
    ])
    assert res.exit_code == 0
    rows = out.read_text().splitlines()[1:]
    assert all(row.split(",")[3] == "0" for row in rows)


def test_sample_space_all_feasible_single_bus(runner, tmp_path):
    case = tmp_path / "one.json"
    case.write_text(json.dumps({
        "base_mva": 100.0,
        "buses": [{"id": 1, "v_min": 0.5, "v_max": 1.5, "reference": True}],
        "generators": [{"bus": 1, "p_min": -10.0, "p_max": 10.0,
                        "q_min": -10.0, "q_max": 10.0, "c1": 1.0}],
        "branches": [],
    }))
    out = tmp_path / "cloud.csv"
    res = runner.invoke(main, ["sample-space", str(case),
                               "--grid", "Vd1=0.6:1.4:9", "--out", str(out)])
    assert res.exit_code == 0, res.output
    rows = out.read_text().splitlines()[1:]
    assert all(row.split(",")[1] == "1" for row in rows)


def test_sample_space_too_many_variables(runner, tmp_path):
    rng = np.random.default_rng(3)
    net, _, _ = oracles.random_feasible_network(rng, 4)
    case = tmp_path / "four.json"
    from momentopf.netmodel import serialize_case
    case.write_text(serialize_case(net))
    res = runner.invoke(main, ["sample-space", str(case)])
    assert res.exit_code == 1
    assert "at most 4" in res.output


def test_sample_space_disconnected_components(runner, tmp_path):
    import scipy.ndimage
    out = tmp_path / "cloud.csv"
    res = runner.invoke(main, [
        "sample-space", case_path("two_bus_tight.json"),
        "--steps", "61", "--tol", "0.25", "--out", str(out),
    ])
    assert res.exit_code == 0
    rows = np.genfromtxt(out, delimiter=",", names=True)
    mask = (rows["feasible"] > 0.5).reshape(61, 61, 61)
    _, ncomp = scipy.ndimage.label(mask)
    assert ncomp >= 2


def test_config_file_overridden_by_flags(runner, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"order": 2, "format": "json"}))
    out = tmp_path / "r.json"
    res = runner.invoke(main, ["solve", case_path("two_bus.json"),
                               "--config", str(cfg), "--out", str(out)])
    assert res.exit_code == 0
    assert json.loads(out.read_text())["order"] == 2
    # flag overrides the config value: order 3 is admissible too
    res = runner.invoke(main, ["solve", case_path("two_bus_tight.json"),
                               "--config", str(cfg), "-g", "1", "--out", str(out)])
    assert json.loads(out.read_text())["order"] == 1


def test_plot_stub_written(runner, tmp_path):
    out = tmp_path / "cloud.csv"
    res = runner.invoke(main, ["sample-space", case_path("two_bus_tight.json"),
                               "--steps", "5", "--out", str(out), "--plot-stub"])
    assert res.exit_code == 0
    assert (tmp_path / "cloud.csv.plot.py").exists()
