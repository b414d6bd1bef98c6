"""Grid data model, on-disk schema, validation and DC network matrices."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

THERMAL = "thermal"
WIND = "wind"

_BUS_KEYS = {"id", "zone", "base_load"}
_BRANCH_KEYS = {"from", "to", "susceptance", "flow_limit"}
_GEN_KEYS = {"id", "bus", "kind", "p_min", "p_max", "cost", "ramp", "min_up", "min_down"}
_TOP_KEYS = {"buses", "branches", "generators", "zones", "reference_bus"}


class GridParseError(ValueError):
    """The grid file is not valid JSON or does not follow the schema."""


class GridValidationError(ValueError):
    """A grid invariant is violated."""


class GridStructureError(ValueError):
    """The network matrices are singular (e.g. the graph is disconnected)."""


@dataclass(frozen=True)
class Bus:
    id: int
    zone_id: int
    base_load: float


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    susceptance: float  # MW per rad of angle difference
    flow_limit: float


@dataclass(frozen=True)
class Generator:
    id: int
    bus_id: int
    kind: str
    p_min: float
    p_max: float
    cost: float = 0.0
    ramp_limit: float = 1e9
    min_up: int = 1
    min_down: int = 1

    @property
    def is_thermal(self) -> bool:
        return self.kind == THERMAL


@dataclass(frozen=True)
class GridTopology:
    """Immutable network description shared by the oracle and the surrogate.

    Buses are stored sorted by id; derived arrays and matrices are computed
    lazily and cached.
    """

    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    zones: tuple[int, ...]
    reference_bus: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "buses", tuple(sorted(self.buses, key=lambda b: b.id)))
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "generators", tuple(self.generators))
        object.__setattr__(self, "zones", tuple(self.zones))
        validate_grid(self)

    # -- sizes -------------------------------------------------------------
    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    @property
    def n_zones(self) -> int:
        return len(self.zones)

    # -- cached arrays -----------------------------------------------------
    @cached_property
    def bus_zone(self) -> np.ndarray:
        """Zone *position* (index into ``zones``) of every bus."""
        pos = {z: k for k, z in enumerate(self.zones)}
        return np.array([pos[b.zone_id] for b in self.buses], dtype=int)

    @cached_property
    def base_load(self) -> np.ndarray:
        return np.array([b.base_load for b in self.buses], dtype=float)

    @cached_property
    def thermal(self) -> tuple[Generator, ...]:
        return tuple(g for g in self.generators if g.kind == THERMAL)

    @cached_property
    def wind(self) -> tuple[Generator, ...]:
        return tuple(g for g in self.generators if g.kind == WIND)

    @cached_property
    def thermal_bus(self) -> np.ndarray:
        return np.array([g.bus_id for g in self.thermal], dtype=int)

    @cached_property
    def wind_bus(self) -> np.ndarray:
        return np.array([g.bus_id for g in self.wind], dtype=int)

    @cached_property
    def thermal_zone(self) -> np.ndarray:
        return self.bus_zone[self.thermal_bus]

    @cached_property
    def wind_zone(self) -> np.ndarray:
        return self.bus_zone[self.wind_bus]

    @cached_property
    def zonal_thermal_capacity(self) -> np.ndarray:
        cap = np.zeros(self.n_zones)
        np.add.at(cap, self.thermal_zone, [g.p_max for g in self.thermal])
        return cap

    @cached_property
    def zonal_wind_capacity(self) -> np.ndarray:
        cap = np.zeros(self.n_zones)
        np.add.at(cap, self.wind_zone, [g.p_max for g in self.wind])
        return cap

    @cached_property
    def incidence(self) -> np.ndarray:
        """Branch-bus incidence matrix: +1 at from_bus, -1 at to_bus."""
        a = np.zeros((self.n_branches, self.n_buses))
        for k, br in enumerate(self.branches):
            a[k, br.from_bus] = 1.0
            a[k, br.to_bus] = -1.0
        return a

    @cached_property
    def susceptance(self) -> np.ndarray:
        return np.array([br.susceptance for br in self.branches], dtype=float)

    @cached_property
    def flow_limit(self) -> np.ndarray:
        return np.array([br.flow_limit for br in self.branches], dtype=float)

    @cached_property
    def ptdf(self) -> np.ndarray:
        """Power transfer distribution factors (branches x buses).

        Column ``reference_bus`` is zero; flows = ptdf @ net injection.
        """
        b_red, flow_mat = build_dc_matrices(self)
        keep = _non_reference(self)
        out = np.zeros((self.n_branches, self.n_buses))
        out[:, keep] = np.linalg.solve(b_red, flow_mat[:, keep].T).T
        return out

    @cached_property
    def angle_matrix(self) -> np.ndarray:
        """Maps net bus injections to bus angles (reference angle 0)."""
        b_red, _ = build_dc_matrices(self)
        keep = _non_reference(self)
        out = np.zeros((self.n_buses, self.n_buses))
        if keep.size:
            out[np.ix_(keep, keep)] = np.linalg.inv(b_red)
        return out

    @cached_property
    def content_hash(self) -> str:
        blob = json.dumps(grid_to_dict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _non_reference(grid: GridTopology) -> np.ndarray:
    return np.array([i for i in range(grid.n_buses) if i != grid.reference_bus], dtype=int)


def validate_grid(grid: GridTopology) -> None:
    """Raise GridValidationError naming the first violated invariant."""
    ids = [b.id for b in grid.buses]
    if not ids:
        raise GridValidationError("grid has no buses")
    if ids != list(range(len(ids))):
        raise GridValidationError("bus ids must be unique and contiguous from 0")
    if len(set(grid.zones)) != len(grid.zones):
        raise GridValidationError("zone ids must be unique")
    zones = set(grid.zones)
    for b in grid.buses:
        if b.base_load < 0:
            raise GridValidationError(f"bus {b.id}: base_load must be >= 0")
        if b.zone_id not in zones:
            raise GridValidationError(f"bus {b.id}: zone {b.zone_id} does not exist")
    n = len(ids)
    for k, br in enumerate(grid.branches):
        if not (0 <= br.from_bus < n and 0 <= br.to_bus < n):
            raise GridValidationError(f"branch {k}: endpoint is not a bus")
        if br.from_bus == br.to_bus:
            raise GridValidationError(f"branch {k}: from_bus == to_bus (self-loop)")
        if not br.susceptance > 0:
            raise GridValidationError(f"branch {k}: susceptance must be > 0")
        if not br.flow_limit > 0:
            raise GridValidationError(f"branch {k}: flow_limit must be > 0")
    gen_ids = [g.id for g in grid.generators]
    if len(set(gen_ids)) != len(gen_ids):
        raise GridValidationError("generator ids must be unique")
    for g in grid.generators:
        if g.kind not in (THERMAL, WIND):
            raise GridValidationError(f"generator {g.id}: unknown kind {g.kind!r}")
        if not 0 <= g.bus_id < n:
            raise GridValidationError(f"generator {g.id}: bus {g.bus_id} does not exist")
        if not 0 <= g.p_min <= g.p_max:
            raise GridValidationError(f"generator {g.id}: need 0 <= p_min <= p_max")
        if g.cost < 0:
            raise GridValidationError(f"generator {g.id}: cost must be >= 0")
        if not g.ramp_limit > 0:
            raise GridValidationError(f"generator {g.id}: ramp must be > 0")
        if g.kind == THERMAL and (g.min_up < 1 or g.min_down < 1):
            raise GridValidationError(f"generator {g.id}: min_up and min_down must be >= 1")
    if not 0 <= grid.reference_bus < n:
        raise GridValidationError(f"reference_bus {grid.reference_bus} does not exist")
    if not _is_connected(n, [(br.from_bus, br.to_bus) for br in grid.branches]):
        raise GridValidationError("graph is not connected")
    thermal_zones = {grid.buses[g.bus_id].zone_id for g in grid.generators if g.kind == THERMAL}
    for z in grid.zones:
        if z not in thermal_zones:
            raise GridValidationError(f"zone {z} has no thermal generator")


def _is_connected(n: int, edges: list[tuple[int, int]]) -> bool:
    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = {0}
    stack = [0]
    while stack:
        for v in adj[stack.pop()]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == n


# -- matrices ---------------------------------------------------------------

def build_dc_matrices(grid: GridTopology) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(B_red, F)``.

    ``B_red`` is the susceptance-weighted Laplacian with the reference bus
    row and column deleted. ``F`` (branches x buses) maps the full angle
    vector (reference angle 0) to branch flows.
    """
    a = grid.incidence
    flow_mat = grid.susceptance[:, None] * a
    lap = a.T @ flow_mat
    keep = _non_reference(grid)
    b_red = lap[np.ix_(keep, keep)]
    if b_red.size:
        try:
            np.linalg.cholesky(b_red)
        except np.linalg.LinAlgError as exc:
            raise GridStructureError("bus susceptance matrix is singular; is the grid connected?") from exc
    return b_red, flow_mat


def zone_membership_matrix(grid: GridTopology) -> np.ndarray:
    """zones x buses 0/1 matrix; rows follow ``grid.zones`` order."""
    z = np.zeros((grid.n_zones, grid.n_buses))
    z[grid.bus_zone, np.arange(grid.n_buses)] = 1.0
    return z


# -- I/O --------------------------------------------------------------------

def _check_keys(obj, allowed: set[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise GridParseError(f"{where}: expected an object")
    unknown = set(obj) - allowed
    if unknown:
        raise GridParseError(f"{where}: unknown keys {sorted(unknown)}")
    missing = allowed - set(obj)
    if missing:
        raise GridParseError(f"{where}: missing keys {sorted(missing)}")


def grid_from_dict(data: dict) -> GridTopology:
    _check_keys(data, _TOP_KEYS, "grid")
    try:
        buses = []
        for i, b in enumerate(data["buses"]):
            _check_keys(b, _BUS_KEYS, f"buses[{i}]")
            buses.append(Bus(int(b["id"]), int(b["zone"]), float(b["base_load"])))
        branches = []
        for i, br in enumerate(data["branches"]):
            _check_keys(br, _BRANCH_KEYS, f"branches[{i}]")
            branches.append(
                Branch(int(br["from"]), int(br["to"]), float(br["susceptance"]), float(br["flow_limit"]))
            )
        gens = []
        for i, g in enumerate(data["generators"]):
            _check_keys(g, _GEN_KEYS, f"generators[{i}]")
            gens.append(
                Generator(
                    id=int(g["id"]),
                    bus_id=int(g["bus"]),
                    kind=str(g["kind"]),
                    p_min=float(g["p_min"]),
                    p_max=float(g["p_max"]),
                    cost=float(g["cost"]),
                    ramp_limit=float(g["ramp"]),
                    min_up=int(g["min_up"]),
                    min_down=int(g["min_down"]),
                )
            )
        zones = [int(z) for z in data["zones"]]
        ref = int(data["reference_bus"])
    except (TypeError, KeyError) as exc:
        raise GridParseError(f"malformed grid data: {exc}") from exc
    return GridTopology(tuple(buses), tuple(branches), tuple(gens), tuple(zones), ref)


def grid_to_dict(grid: GridTopology) -> dict:
    return {
        "buses": [{"id": b.id, "zone": b.zone_id, "base_load": b.base_load} for b in grid.buses],
        "branches": [
            {"from": br.from_bus, "to": br.to_bus, "susceptance": br.susceptance, "flow_limit": br.flow_limit}
            for br in grid.branches
        ],
        "generators": [
            {
                "id": g.id,
                "bus": g.bus_id,
                "kind": g.kind,
                "p_min": g.p_min,
                "p_max": g.p_max,
                "cost": g.cost,
                "ramp": g.ramp_limit,
                "min_up": g.min_up,
                "min_down": g.min_down,
            }
            for g in grid.generators
        ],
        "zones": list(grid.zones),
        "reference_bus": grid.reference_bus,
    }


def load_grid(path) -> GridTopology:
    try:
        text = Path(path).read_text(encoding="utf-8")
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GridParseError(f"{path}: {exc}") from exc
    return grid_from_dict(data)


def save_grid(grid: GridTopology, path) -> None:
    Path(path).write_text(json.dumps(grid_to_dict(grid), indent=1) + "\n", encoding="utf-8")


def bundled_grid_path() -> Path:
    return Path(__file__).parent / "data" / "case118.grid.json"


def load_bundled_grid() -> GridTopology:
    return load_grid(bundled_grid_path())
