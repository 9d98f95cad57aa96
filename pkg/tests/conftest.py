import pathlib

import numpy as np
import pytest

from momentopf.netmodel import parse_case

CASES = pathlib.Path(__file__).resolve().parent.parent / "cases"


@pytest.fixture(scope="session")
def two_bus_net():
    """Stressed two-bus case, quadratic cost, loose upper voltage limit."""
    return parse_case((CASES / "two_bus.json").read_text())


@pytest.fixture(scope="session")
def two_bus_tight_net():
    """Same topology, linear cost, upper voltage limit cutting the feasible set."""
    return parse_case((CASES / "two_bus_tight.json").read_text())


@pytest.fixture(scope="session")
def three_bus_discrete_net():
    """Purely resistive ring with unit-pinned voltages and zero reactive injections."""
    return parse_case((CASES / "three_bus_discrete.json").read_text())


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)


def case_path(name: str) -> str:
    return str(CASES / name)
