import numpy as np
import pytest

from gridrisk.grid import Branch, Bus, Generator, GridTopology, load_bundled_grid


def make_grid(n_bus=3, edges=None, loads=None, zones=None, gens=None, limit=100.0, susceptance=1.0):
    """Small test grid. ``gens`` is a list of (bus, kind, p_min, p_max, cost)."""
    edges = edges if edges is not None else [(i, i + 1) for i in range(n_bus - 1)]
    loads = loads if loads is not None else [10.0] * n_bus
    zones = zones if zones is not None else [0] * n_bus
    gens = gens if gens is not None else [(0, "thermal", 0.0, 100.0, 10.0)]
    buses = [Bus(i, zones[i], float(loads[i])) for i in range(n_bus)]
    lim = limit if np.ndim(limit) else [limit] * len(edges)
    sus = susceptance if np.ndim(susceptance) else [susceptance] * len(edges)
    branches = [Branch(a, b, float(s), float(f)) for (a, b), s, f in zip(edges, sus, lim)]
    generators = [
        Generator(k, bus, kind, float(lo), float(hi), float(cost), 1e9, 1, 1)
        for k, (bus, kind, lo, hi, cost) in enumerate(gens)
    ]
    return GridTopology(tuple(buses), tuple(branches), tuple(generators), tuple(sorted(set(zones))), 0)


@pytest.fixture(scope="session")
def case118():
    return load_bundled_grid()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance verdicts, one line per criterion, repeated in the terminal summary
VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
