"""Command-line front end: solve, hierarchy, export and sample-space.

Reports are JSON (or flattened CSV) with stable field order and floats
rounded to 12 significant digits, so identical inputs produce identical
reports apart from the timing fields.  Exit codes: 0 when the relaxation
certified a global optimum, 2 when it solved but stayed a lower bound,
1 on any error.
"""

from __future__ import annotations

import json
import math
import sys
import time
from dataclasses import dataclass, field

import click
import numpy as np

from . import extract, kernels, sdp, sdpa
from .moment import OrderTooLowError, assemble_relaxation, minimum_order
from .netmodel import CaseParseError, CaseValidationError, Network, parse_case
from .opf_poly import ELIMINATED, assemble_opf, build_injection_polys

EXIT_EXACT = 0
EXIT_ERROR = 1
EXIT_INEXACT = 2


def _fmt(value):
    """Round floats to 12 significant digits, recursively."""
    if isinstance(value, float):
        if math.isfinite(value):
            return float(f"{value:.12g}")
        return value
    if isinstance(value, dict):
        return {k: _fmt(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_fmt(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_fmt(float(v)) for v in value]
    if isinstance(value, (np.floating,)):
        return _fmt(float(value))
    if isinstance(value, (np.integer,)):
        return int(value)
    return value


def _flatten(prefix: str, value, rows: list[tuple[str, str]]):
    if isinstance(value, dict):
        for k, v in value.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, rows)
    elif isinstance(value, list):
        for i, v in enumerate(value):
            _flatten(f"{prefix}[{i}]", v, rows)
    else:
        rows.append((prefix, json.dumps(value)))


def _emit(report: dict, out: str | None, fmt: str):
    report = _fmt(report)
    if fmt == "json":
        text = json.dumps(report, indent=2) + "\n"
    else:
        rows: list[tuple[str, str]] = []
        _flatten("", report, rows)
        text = "key,value\n" + "\n".join(f"{k},{v}" for k, v in rows) + "\n"
    if out:
        with open(out, "w") as handle:
            handle.write(text)
    else:
        click.echo(text, nl=False)


def _load_network(path: str) -> Network:
    try:
        with open(path) as handle:
            text = handle.read()
    except OSError as exc:
        raise click.ClickException(f"cannot read case file: {exc}")
    try:
        return parse_case(text)
    except (CaseParseError, CaseValidationError) as exc:
        raise click.ClickException(f"{path}: {exc}")


@dataclass
class RunConfig:
    """Merged configuration; config-file values are overridden by flags."""

    case: str = ""
    order: int | None = None
    max_order: int | None = None
    mode: str = ELIMINATED
    tol_gap: float | None = None
    tol_feas: float | None = None
    rank_tol: float | None = None
    max_iter: int | None = None
    out: str | None = None
    format: str = "json"
    grid: dict[str, tuple[float, float, int]] = field(default_factory=dict)
    squared: bool = False
    slacks: bool = False

    def solver_settings(self) -> sdp.SolverSettings:
        settings = sdp.SolverSettings()
        if self.tol_gap is not None:
            settings.gap_tol = self.tol_gap
        if self.tol_feas is not None:
            settings.feas_tol = self.tol_feas
        if self.max_iter is not None:
            settings.max_iterations = self.max_iter
        return settings

    def certify_settings(self) -> extract.CertifySettings:
        settings = extract.CertifySettings()
        if self.rank_tol is not None:
            settings.rank_tol = self.rank_tol
        return settings


def _parse_grid_spec(text: str) -> tuple[str, tuple[float, float, int]]:
    try:
        name, spec = text.split("=", 1)
        lo, hi, steps = spec.split(":")
        lo, hi, steps = float(lo), float(hi), int(steps)
    except ValueError:
        raise click.BadParameter(f"grid spec {text!r} is not VAR=min:max:steps")
    if steps < 2:
        raise click.BadParameter(f"grid spec {text!r}: steps must be >= 2")
    if hi < lo:
        raise click.BadParameter(f"grid spec {text!r}: max below min")
    return name.strip(), (lo, hi, steps)


def _merge_config(config_path, case, kwargs) -> RunConfig:
    cfg = RunConfig()
    if config_path:
        try:
            with open(config_path) as handle:
                doc = json.load(handle)
        except (OSError, json.JSONDecodeError) as exc:
            raise click.ClickException(f"config file: {exc}")
        for key, val in doc.items():
            if key == "grid":
                cfg.grid = {k: (float(v[0]), float(v[1]), int(v[2])) for k, v in val.items()}
            elif hasattr(cfg, key):
                setattr(cfg, key, val)
            else:
                raise click.ClickException(f"config file: unknown key {key!r}")
    cfg.case = case
    for key, val in kwargs.items():
        if key == "format_":
            key = "format"
        if val is None or key not in RunConfig.__dataclass_fields__:
            continue
        if key == "grid":
            if val:
                cfg.grid.update(dict(_parse_grid_spec(g) for g in val))
        elif key in ("squared", "slacks"):
            if val:
                setattr(cfg, key, True)
        else:
            setattr(cfg, key, val)
    return cfg


_common = [
    click.option("--config", type=click.Path(), default=None, help="JSON config file; flags override it."),
    click.option("--mode", type=click.Choice(["eliminated", "constrained"]), default=None,
                 help="Reference-bus handling (default eliminated)."),
    click.option("--tol-gap", type=float, default=None, help="Solver relative duality-gap tolerance."),
    click.option("--tol-feas", type=float, default=None, help="Solver feasibility tolerance."),
    click.option("--rank-tol", type=float, default=None, help="Relative eigenvalue threshold for rank."),
    click.option("--max-iter", type=int, default=None, help="Interior-point iteration budget."),
    click.option("--out", type=click.Path(), default=None, help="Write the report here instead of stdout."),
    click.option("--format", "format_", type=click.Choice(["json", "csv"]), default=None,
                 help="Report format (default json)."),
]


def _apply(options):
    def wrap(fn):
        for opt in reversed(options):
            fn = opt(fn)
        return fn
    return wrap


@click.group()
def main():
    """Moment relaxations of AC optimal power flow."""


def _candidate_payload(net: Network, record: extract.OrderRecord, program) -> dict:
    report = record.report
    injections = build_injection_polys(net, program.layout)
    point = program.layout.point_from_phasors(report.v_d, report.v_q)
    generation = []
    for k, bus in enumerate(net.buses):
        p = injections[k][0].evaluate(point) * net.base_mva
        q = injections[k][1].evaluate(point) * net.base_mva
        generation.append({"bus": bus.id, "p_mw": p, "q_mvar": q})
    return {
        "order": record.gamma,
        "bound": record.bound,
        "verdict": report.verdict,
        "gap": report.gap,
        "rank": report.rank,
        "moment_block_dim": record.moment_dim,
        "candidate": {"v_d": report.v_d, "v_q": report.v_q},
        "generation": generation,
        "worst_violation_by_kind": report.violations,
        "solver": {
            "status": record.solution.status,
            "iterations": record.solution.iterations,
            "final_gap": record.solution.gap,
        },
        "timings": {
            "assemble_s": record.assemble_seconds,
            "solve_s": record.solve_seconds,
        },
    }


@main.command()
@click.argument("case", type=click.Path())
@click.option("--order", "-g", type=int, default=None, help="Relaxation order (default: minimum admissible).")
@_apply(_common)
def solve(case, order, config, **kwargs):
    """Solve one moment relaxation of a case and certify the result."""
    cfg = _merge_config(config, case, dict(order=order, **kwargs))
    net = _load_network(cfg.case)
    program = assemble_opf(net, cfg.mode)
    gamma = cfg.order if cfg.order is not None else minimum_order(program)
    t0 = time.perf_counter()
    try:
        record = extract.solve_order(
            net, gamma, cfg.mode, cfg.solver_settings(), cfg.certify_settings(),
            program=program,
        )
    except OrderTooLowError as exc:
        raise click.ClickException(str(exc))
    total = time.perf_counter() - t0
    if record.report is None:
        raise click.ClickException(f"solver failed at order {gamma}: {record.error}")
    payload = {"case": cfg.case, "command": "solve", "mode": cfg.mode}
    payload.update(_candidate_payload(net, record, program))
    payload["timings"]["total_s"] = total
    _emit(payload, cfg.out, cfg.format)
    sys.exit(EXIT_EXACT if record.report.verdict == extract.VERDICT_GLOBAL else EXIT_INEXACT)


@main.command()
@click.argument("case", type=click.Path())
@click.option("--max-order", type=int, default=3, help="Highest relaxation order to try.")
@_apply(_common)
def hierarchy(case, max_order, config, **kwargs):
    """Escalate the relaxation order until global optimality is certified."""
    cfg = _merge_config(config, case, dict(max_order=max_order, **kwargs))
    net = _load_network(cfg.case)
    program = assemble_opf(net, cfg.mode)
    try:
        result = extract.solve_hierarchy(
            net, cfg.max_order, cfg.mode, cfg.solver_settings(), cfg.certify_settings()
        )
    except OrderTooLowError as exc:
        raise click.ClickException(str(exc))
    orders = []
    for record in result.orders:
        if record.report is None:
            orders.append({
                "order": record.gamma,
                "error": record.error,
                "solver_status": record.solution.status,
            })
        else:
            orders.append(_candidate_payload(net, record, program))
    payload = {
        "case": cfg.case,
        "command": "hierarchy",
        "mode": cfg.mode,
        "final_verdict": result.final_verdict,
        "gamma_min": result.gamma_min,
        "best_bound": result.best_bound,
        "orders": orders,
    }
    _emit(payload, cfg.out, cfg.format)
    sys.exit(EXIT_EXACT if result.final_verdict == extract.VERDICT_GLOBAL else EXIT_INEXACT)


@main.command()
@click.argument("case", type=click.Path())
@click.option("--order", "-g", type=int, default=None, help="Relaxation order (default: minimum admissible).")
@_apply(_common)
def export(case, order, config, **kwargs):
    """Write the assembled relaxation in SDPA sparse format (.dat-s)."""
    cfg = _merge_config(config, case, dict(order=order, **kwargs))
    net = _load_network(cfg.case)
    program = assemble_opf(net, cfg.mode)
    gamma = cfg.order if cfg.order is not None else minimum_order(program)
    try:
        prob = assemble_relaxation(program, gamma)
    except OrderTooLowError as exc:
        raise click.ClickException(str(exc))
    text = sdpa.export_sdpa(prob, comment=f"case {cfg.case}, relaxation order {gamma}")
    out = cfg.out or (cfg.case + f".order{gamma}.dat-s")
    with open(out, "w") as handle:
        handle.write(text)
    click.echo(f"wrote {out}")
    click.echo(f"moment variables: {len([p for p in range(prob.num_vars) if p not in prob.fixed_vars])}")
    click.echo("block census (dim x count):")
    dims = [b.dim for b in prob.psd_blocks] + [b.dim for b in prob.zero_blocks for _ in range(2)]
    for dim in sorted(set(dims), reverse=True):
        click.echo(f"  {dim}x{dim}: {dims.count(dim)}")


@main.command("sample-space")
@click.argument("case", type=click.Path())
@click.option("--grid", multiple=True, help="Per-variable grid VAR=min:max:steps (repeatable).")
@click.option("--steps", type=int, default=21, help="Default steps for variables without --grid.")
@click.option("--tol", type=float, default=1e-6, help="Feasibility slack tolerance.")
@click.option("--squared", is_flag=True, help="Also emit squared-coordinate projection columns.")
@click.option("--slacks", is_flag=True, help="Also emit per-constraint slack columns.")
@click.option("--plot-stub", is_flag=True, help="Write a matplotlib stub next to --out.")
@_apply(_common)
def sample_space(case, grid, steps, tol, squared, slacks, plot_stub, config, **kwargs):
    """Sample the OPF feasible region on a dense grid and emit a point cloud."""
    cfg = _merge_config(config, case, dict(grid=list(grid), squared=squared, slacks=slacks, **kwargs))
    net = _load_network(cfg.case)
    program = assemble_opf(net, cfg.mode)
    layout = program.layout
    if layout.nvars > 4:
        raise click.ClickException(
            f"{layout.nvars} free voltage variables; grid sampling supports at most 4 "
            "(use coarser tooling for larger networks)"
        )
    pu = net.per_unit()
    axes = []
    for idx, name in enumerate(layout.names):
        if name in cfg.grid:
            lo, hi, n = cfg.grid[name]
        else:
            bus_pos = idx if idx < layout.n_bus else None
            if bus_pos is not None:
                # real components: reference is oriented positive
                hi = pu.v_max[bus_pos]
                lo = pu.v_min[bus_pos] if bus_pos == layout.ref_pos else -hi
            else:
                vmax = 1.0
                for k in range(layout.n_bus):
                    if layout.q_index(k) == idx:
                        vmax = pu.v_max[k]
                lo, hi = -vmax, vmax
            n = steps
        axes.append(np.linspace(lo, hi, int(n)))
    unknown = set(cfg.grid) - set(layout.names)
    if unknown:
        raise click.ClickException(f"--grid names not in {layout.names}: {sorted(unknown)}")

    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    cons = list(program.constraints)
    pack = kernels.PolyPack([c.poly for c in cons] + [program.objective])
    lb = np.array([c.lb for c in cons] + [-math.inf])
    ub = np.array([c.ub for c in cons] + [math.inf])
    feasible, slack = kernels.scan_feasible(pack, lb, ub, pts, tol=tol)
    values = kernels.eval_batch(pack, pts)
    cost = values[:, -1]

    header = list(layout.names)
    if cfg.squared:
        header += [f"{name}_sq" for name in layout.names]
    header += ["feasible", "cost", "slack_min"]
    if cfg.slacks:
        header += [f"slack_{c.label}" for c in cons]
    lines = [",".join(header)]
    for row in range(pts.shape[0]):
        cells = [f"{v:.12g}" for v in pts[row]]
        if cfg.squared:
            cells += [f"{v * v:.12g}" for v in pts[row]]
        cells += ["1" if feasible[row] else "0", f"{cost[row]:.12g}", f"{slack[row]:.12g}"]
        if cfg.slacks:
            for c_i, con in enumerate(cons):
                s = math.inf
                if con.lb > -math.inf:
                    s = min(s, values[row, c_i] - con.lb)
                if con.ub < math.inf:
                    s = min(s, con.ub - values[row, c_i])
                cells.append(f"{s:.12g}")
        lines.append(",".join(cells))
    text = "\n".join(lines) + "\n"
    if cfg.out:
        with open(cfg.out, "w") as handle:
            handle.write(text)
        click.echo(f"wrote {cfg.out} ({int(feasible.sum())} feasible of {pts.shape[0]} points)")
        if plot_stub:
            stub = cfg.out + ".plot.py"
            with open(stub, "w") as handle:
                handle.write(_PLOT_STUB.format(csv=cfg.out, cols=layout.names))
            click.echo(f"wrote {stub}")
    else:
        click.echo(text, nl=False)


_PLOT_STUB = '''"""Scatter the feasible point cloud from {csv}."""
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

rows = np.genfromtxt("{csv}", delimiter=",", names=True)
feas = rows["feasible"] > 0.5
cols = {cols}
fig = plt.figure()
ax = fig.add_subplot(projection="3d") if len(cols) >= 3 else fig.add_subplot()
xyz = [rows[c][feas] for c in cols[:3]]
sc = ax.scatter(*xyz, c=rows["cost"][feas], s=4)
fig.colorbar(sc, label="cost")
ax.set_xlabel(cols[0]); ax.set_ylabel(cols[1])
fig.savefig("{csv}.png", dpi=150)
print("wrote {csv}.png")
'''


if __name__ == "__main__":
    main()
