"""Power network data model: buses, generators, branches, and the bus admittance matrix.

Case files use a small JSON schema with loads and limits in MW/MVAr/MVA and
branch impedances already in per unit.  Parsed networks keep the raw unit
values so that serialization round-trips bit-exactly; per-unit views for the
optimization layers are provided by :meth:`Network.per_unit`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np


class CaseParseError(ValueError):
    """Raised when a case file is not valid JSON or violates the schema."""


class CaseValidationError(ValueError):
    """Raised when a structurally valid case describes an inconsistent network."""


@dataclass(frozen=True)
class Bus:
    """Network bus with voltage-magnitude band and fixed load demand.

    Voltage bounds are in per unit, loads in MW/MVAr.
    """

    id: int
    v_min: float
    v_max: float
    p_load: float = 0.0
    q_load: float = 0.0
    is_reference: bool = False


@dataclass(frozen=True)
class Generator:
    """Dispatchable injection at a bus with box limits and quadratic cost.

    Limits are in MW/MVAr; cost coefficients are $/MW^2h, $/MWh and $/h.
    """

    bus: int
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    c2: float = 0.0
    c1: float = 0.0
    c0: float = 0.0


@dataclass(frozen=True)
class Branch:
    """Pi-model line: series impedance r + jx (pu), total shunt susceptance
    b_sh (pu) split across the two ends, and an MVA flow limit.

    s_max = 0 means the branch flow is unconstrained.
    """

    from_bus: int
    to_bus: int
    r: float
    x: float
    b_sh: float = 0.0
    s_max: float = 0.0


@dataclass(frozen=True)
class PerUnitData:
    """Per-unit view of a network, ordered by bus position.

    Cost coefficients are rescaled so that evaluating them on per-unit active
    power reproduces the original $/h figures.  Buses without a generator get
    degenerate [0, 0] generation bands.
    """

    p_load: np.ndarray
    q_load: np.ndarray
    p_min: np.ndarray
    p_max: np.ndarray
    q_min: np.ndarray
    q_max: np.ndarray
    v_min: np.ndarray
    v_max: np.ndarray
    cost: np.ndarray  # (n, 3) columns c2, c1, c0 in per-unit-consistent $
    has_gen: np.ndarray
    s_max: np.ndarray  # per branch, 0 = unconstrained


@dataclass(frozen=True)
class Network:
    """Validated power network. Immutable; safe to share across threads."""

    base_mva: float
    buses: tuple[Bus, ...]
    generators: tuple[Generator, ...]
    branches: tuple[Branch, ...]
    _bus_pos: dict[int, int] = field(repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        object.__setattr__(
            self, "_bus_pos", {bus.id: i for i, bus in enumerate(self.buses)}
        )

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    def bus_position(self, bus_id: int) -> int:
        """Position of a bus id in the bus ordering used by all matrices."""
        return self._bus_pos[bus_id]

    @property
    def reference_position(self) -> int:
        for i, bus in enumerate(self.buses):
            if bus.is_reference:
                return i
        raise CaseValidationError("network has no reference bus")

    def generator_at(self, position: int) -> Generator | None:
        for gen in self.generators:
            if self._bus_pos[gen.bus] == position:
                return gen
        return None

    def per_unit(self) -> PerUnitData:
        """Per-unit quantities on the system base, ordered by bus position."""
        n = self.n_bus
        base = self.base_mva
        p_load = np.array([b.p_load for b in self.buses]) / base
        q_load = np.array([b.q_load for b in self.buses]) / base
        v_min = np.array([b.v_min for b in self.buses])
        v_max = np.array([b.v_max for b in self.buses])
        p_min = np.zeros(n)
        p_max = np.zeros(n)
        q_min = np.zeros(n)
        q_max = np.zeros(n)
        cost = np.zeros((n, 3))
        has_gen = np.zeros(n, dtype=bool)
        for gen in self.generators:
            k = self._bus_pos[gen.bus]
            has_gen[k] = True
            p_min[k] = gen.p_min / base
            p_max[k] = gen.p_max / base
            q_min[k] = gen.q_min / base
            q_max[k] = gen.q_max / base
            cost[k] = (gen.c2 * base * base, gen.c1 * base, gen.c0)
        s_max = np.array([br.s_max for br in self.branches]) / base if self.branches else np.zeros(0)
        return PerUnitData(
            p_load=p_load, q_load=q_load,
            p_min=p_min, p_max=p_max, q_min=q_min, q_max=q_max,
            v_min=v_min, v_max=v_max, cost=cost, has_gen=has_gen, s_max=s_max,
        )


def validate_network(net: Network) -> None:
    """Check structural invariants; raise CaseValidationError on the first failure."""
    seen: set[int] = set()
    refs = 0
    for i, bus in enumerate(net.buses):
        if bus.id in seen:
            raise CaseValidationError(f"duplicate bus id {bus.id}")
        seen.add(bus.id)
        if not (0.0 < bus.v_min <= bus.v_max):
            raise CaseValidationError(
                f"bus {bus.id}: voltage bounds must satisfy 0 < v_min <= v_max"
            )
        refs += bool(bus.is_reference)
    if len(net.buses) == 0:
        raise CaseValidationError("network has no buses")
    if refs != 1:
        raise CaseValidationError(f"exactly one reference bus required, found {refs}")
    gen_buses: set[int] = set()
    for gen in net.generators:
        if gen.bus not in seen:
            raise CaseValidationError(f"generator references unknown bus {gen.bus}")
        if gen.bus in gen_buses:
            raise CaseValidationError(
                f"bus {gen.bus} has more than one generator; aggregate them first"
            )
        gen_buses.add(gen.bus)
        if gen.p_min > gen.p_max or gen.q_min > gen.q_max:
            raise CaseValidationError(f"generator at bus {gen.bus}: min limit exceeds max")
        if gen.c2 < 0:
            raise CaseValidationError(
                f"generator at bus {gen.bus}: quadratic cost coefficient must be >= 0"
            )
    for br in net.branches:
        if br.from_bus == br.to_bus:
            raise CaseValidationError(f"branch {br.from_bus}-{br.to_bus} is a self-loop")
        if br.from_bus not in seen or br.to_bus not in seen:
            raise CaseValidationError(
                f"branch {br.from_bus}-{br.to_bus} references an unknown bus"
            )
        if br.r == 0.0 and br.x == 0.0:
            raise CaseValidationError(
                f"branch {br.from_bus}-{br.to_bus} has zero series impedance"
            )
        if br.s_max < 0:
            raise CaseValidationError(f"branch {br.from_bus}-{br.to_bus}: s_max < 0")
    if net.base_mva <= 0:
        raise CaseValidationError("base_mva must be positive")


def admittance_matrix(net: Network) -> tuple[np.ndarray, np.ndarray]:
    """Bus admittance matrix Y = G + jB from the pi-model branches.

    Off-diagonals carry the negated series admittance; diagonals accumulate
    the series admittance plus half the shunt susceptance of each incident
    branch.  Symmetric because phase shifters are not modeled.
    """
    n = net.n_bus
    Y = np.zeros((n, n), dtype=complex)
    for br in net.branches:
        if br.r == 0.0 and br.x == 0.0:
            raise CaseValidationError(
                f"branch {br.from_bus}-{br.to_bus} has zero series impedance"
            )
        y = 1.0 / complex(br.r, br.x)
        l = net.bus_position(br.from_bus)
        m = net.bus_position(br.to_bus)
        Y[l, m] -= y
        Y[m, l] -= y
        Y[l, l] += y + 0.5j * br.b_sh
        Y[m, m] += y + 0.5j * br.b_sh
    return Y.real.copy(), Y.imag.copy()


_MISSING = object()


def _expect(obj: Any, key: str, kind, path: str, default=_MISSING):
    if key not in obj:
        if default is not _MISSING:
            return default
        raise CaseParseError(f"{path}.{key}: missing required field")
    val = obj[key]
    if kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise CaseParseError(f"{path}.{key}: expected a number, got {val!r}")
        return float(val)
    if kind is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise CaseParseError(f"{path}.{key}: expected an integer, got {val!r}")
        return val
    if kind is bool:
        if not isinstance(val, bool):
            raise CaseParseError(f"{path}.{key}: expected a boolean, got {val!r}")
        return val
    if kind is list:
        if not isinstance(val, list):
            raise CaseParseError(f"{path}.{key}: expected a list")
        return val
    raise AssertionError(kind)


def parse_case(text: str) -> Network:
    """Parse and validate a JSON case file; all ids resolved, invariants checked."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseParseError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise CaseParseError("$: top level must be an object")

    base = _expect(doc, "base_mva", float, "$")
    buses = []
    for i, raw in enumerate(_expect(doc, "buses", list, "$")):
        path = f"$.buses[{i}]"
        if not isinstance(raw, dict):
            raise CaseParseError(f"{path}: expected an object")
        buses.append(Bus(
            id=_expect(raw, "id", int, path),
            v_min=_expect(raw, "v_min", float, path),
            v_max=_expect(raw, "v_max", float, path),
            p_load=_expect(raw, "p_load", float, path, 0.0),
            q_load=_expect(raw, "q_load", float, path, 0.0),
            is_reference=_expect(raw, "reference", bool, path, False),
        ))
    gens = []
    for i, raw in enumerate(_expect(doc, "generators", list, "$", [])):
        path = f"$.generators[{i}]"
        if not isinstance(raw, dict):
            raise CaseParseError(f"{path}: expected an object")
        gens.append(Generator(
            bus=_expect(raw, "bus", int, path),
            p_min=_expect(raw, "p_min", float, path),
            p_max=_expect(raw, "p_max", float, path),
            q_min=_expect(raw, "q_min", float, path),
            q_max=_expect(raw, "q_max", float, path),
            c2=_expect(raw, "c2", float, path, 0.0),
            c1=_expect(raw, "c1", float, path, 0.0),
            c0=_expect(raw, "c0", float, path, 0.0),
        ))
    branches = []
    for i, raw in enumerate(_expect(doc, "branches", list, "$", [])):
        path = f"$.branches[{i}]"
        if not isinstance(raw, dict):
            raise CaseParseError(f"{path}: expected an object")
        branches.append(Branch(
            from_bus=_expect(raw, "from", int, path),
            to_bus=_expect(raw, "to", int, path),
            r=_expect(raw, "r", float, path),
            x=_expect(raw, "x", float, path),
            b_sh=_expect(raw, "b_sh", float, path, 0.0),
            s_max=_expect(raw, "s_max", float, path, 0.0),
        ))
    net = Network(
        base_mva=base,
        buses=tuple(buses),
        generators=tuple(gens),
        branches=tuple(branches),
    )
    validate_network(net)
    return net


def serialize_case(net: Network) -> str:
    """Serialize back to the JSON case schema with the original unit values."""
    doc = {
        "base_mva": net.base_mva,
        "buses": [
            {"id": b.id, "v_min": b.v_min, "v_max": b.v_max,
             "p_load": b.p_load, "q_load": b.q_load, "reference": b.is_reference}
            for b in net.buses
        ],
        "generators": [
            {"bus": g.bus, "p_min": g.p_min, "p_max": g.p_max,
             "q_min": g.q_min, "q_max": g.q_max, "c2": g.c2, "c1": g.c1, "c0": g.c0}
            for g in net.generators
        ],
        "branches": [
            {"from": br.from_bus, "to": br.to_bus, "r": br.r, "x": br.x,
             "b_sh": br.b_sh, "s_max": br.s_max}
            for br in net.branches
        ],
    }
    return json.dumps(doc, indent=2)
