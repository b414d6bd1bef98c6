"""Ground-truth dispatch and commitment.

Single-period DC optimal power flow with load shedding (PTDF formulation,
solved by :mod:`gridrisk.lp`), a priority-list unit commitment with
minimum up/down repair, and the sequential multi-hour solve that produces
the zonal thermal generation / shedding labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import GridTopology, zone_membership_matrix
from .lp import LpProblem, solve_lp
from .scenarios import WindCurve, disaggregate_load, disaggregate_wind, zonal_mw

BALANCE_TOL = 1e-6
FLOW_TOL = 1e-6
QOI_SNAP = 1e-7  # MW; below the solver's feasibility tolerance


class OracleError(RuntimeError):
    """The dispatch LP failed or returned an infeasible point."""


@dataclass(frozen=True)
class OracleConfig:
    voll: float = 1000.0
    reserve_margin: float = 0.1
    wind_curve: WindCurve = field(default_factory=WindCurve)
    # relative spread of the shedding penalty across buses; makes the
    # optimal shedding pattern unique (larger base loads are shed first)
    shed_tiebreak: float = 1e-4


@dataclass
class DispatchSolution:
    thermal: np.ndarray
    wind: np.ndarray
    shed: np.ndarray
    angles: np.ndarray
    flows: np.ndarray
    objective: float
    iterations: int = 0


@dataclass
class CommitmentSchedule:
    """``status[g, t]`` for thermal unit g (order of ``grid.thermal``)."""

    status: np.ndarray
    inadequate: np.ndarray

    @property
    def horizon(self) -> int:
        return self.status.shape[1]


@dataclass
class QoiVector:
    """Zonal and system QoIs, each indexed [t, zone] or [t]."""

    generation: np.ndarray
    shed: np.ndarray

    @property
    def system_generation(self) -> np.ndarray:
        return self.generation.sum(axis=-1)

    @property
    def system_shed(self) -> np.ndarray:
        return self.shed.sum(axis=-1)


@dataclass
class HorizonSolution:
    schedule: CommitmentSchedule
    dispatch: list[DispatchSolution]
    qoi: QoiVector

    @property
    def objective(self) -> float:
        return float(sum(d.objective for d in self.dispatch))


def shed_costs(grid: GridTopology, voll: float, tiebreak: float) -> np.ndarray:
    peak = grid.base_load.max()
    rel = grid.base_load / peak if peak > 0 else np.zeros(grid.n_buses)
    return voll * (1.0 + tiebreak * (1.0 - rel))


def dispatch_bounds(grid: GridTopology, committed, prev_dispatch=None) -> tuple[np.ndarray, np.ndarray]:
    """Thermal output bounds for one hour.

    Offline units are pinned to zero. With ``prev_dispatch`` the output may
    move at most ``ramp_limit`` from the previous hour; a unit coming online
    starts from zero, so its first-hour output is capped at
    ``max(p_min, ramp_limit)``.
    """
    committed = np.asarray(committed, dtype=bool)
    pmin = np.array([g.p_min for g in grid.thermal])
    pmax = np.array([g.p_max for g in grid.thermal])
    lo, hi = pmin.copy(), pmax.copy()
    if prev_dispatch is not None:
        prev = np.asarray(prev_dispatch, dtype=float)
        ramp = np.array([g.ramp_limit for g in grid.thermal])
        lo = np.maximum(pmin, prev - ramp)
        hi = np.minimum(pmax, np.maximum(pmin, prev + ramp))
    lo = np.where(committed, lo, 0.0)
    hi = np.where(committed, hi, 0.0)
    return lo, hi


def solve_dc_opf(
    grid: GridTopology,
    bus_loads,
    wind_available,
    committed,
    prev_dispatch=None,
    voll: float = 1000.0,
    shed_tiebreak: float = 1e-4,
    check: bool = True,
) -> DispatchSolution:
    """Least-cost dispatch with DC line limits; unserved load costs ``voll``."""
    bus_loads = np.asarray(bus_loads, dtype=float)
    wind_available = np.asarray(wind_available, dtype=float)
    committed = np.asarray(committed)
    n_t, n_w, n_br = len(grid.thermal), len(grid.wind), grid.n_branches
    if bus_loads.shape != (grid.n_buses,):
        raise ValueError(f"bus_loads has shape {bus_loads.shape}, expected ({grid.n_buses},)")
    if wind_available.shape != (n_w,):
        raise ValueError(f"wind_available has shape {wind_available.shape}, expected ({n_w},)")
    if committed.shape != (n_t,):
        raise ValueError(f"committed has shape {committed.shape}, expected ({n_t},)")

    shed_bus = np.flatnonzero(bus_loads > 0)
    n_s = shed_bus.size
    n = n_t + n_w + n_s + n_br
    ptdf = grid.ptdf

    c = np.zeros(n)
    c[:n_t] = [g.cost for g in grid.thermal]
    c[n_t + n_w : n_t + n_w + n_s] = shed_costs(grid, voll, shed_tiebreak)[shed_bus]

    a_eq = np.zeros((1 + n_br, n))
    a_eq[0, : n_t + n_w + n_s] = 1.0
    a_eq[1:, :n_t] = -ptdf[:, grid.thermal_bus]
    a_eq[1:, n_t : n_t + n_w] = -ptdf[:, grid.wind_bus]
    a_eq[1:, n_t + n_w : n_t + n_w + n_s] = -ptdf[:, shed_bus]
    a_eq[1:, n_t + n_w + n_s :] = np.eye(n_br)
    b_eq = np.concatenate([[bus_loads.sum()], -ptdf @ bus_loads])

    lo_t, hi_t = dispatch_bounds(grid, committed, prev_dispatch)
    wind_cap = np.minimum(np.maximum(wind_available, 0.0), [g.p_max for g in grid.wind])
    lower = np.concatenate([lo_t, np.zeros(n_w + n_s), -grid.flow_limit])
    upper = np.concatenate([hi_t, wind_cap, bus_loads[shed_bus], grid.flow_limit])

    sol = solve_lp(LpProblem(c, a_eq, b_eq, lower=lower, upper=upper))
    if not sol.ok:
        raise OracleError(f"dispatch LP returned status {sol.status!r}")
    x = sol.x
    shed = np.zeros(grid.n_buses)
    shed[shed_bus] = x[n_t + n_w : n_t + n_w + n_s]
    out = DispatchSolution(
        thermal=x[:n_t].copy(),
        wind=x[n_t : n_t + n_w].copy(),
        shed=shed,
        angles=_angles(grid, _injection(grid, x[:n_t], x[n_t : n_t + n_w], shed, bus_loads)),
        flows=x[n_t + n_w + n_s :].copy(),
        objective=sol.objective,
        iterations=sol.iterations,
    )
    if check:
        check_dispatch(out, grid, bus_loads, wind_cap, lo_t, hi_t)
    return out


def _injection(grid, thermal, wind, shed, loads) -> np.ndarray:
    inj = shed - loads
    np.add.at(inj, grid.thermal_bus, thermal)
    np.add.at(inj, grid.wind_bus, wind)
    return inj


def _angles(grid: GridTopology, injection: np.ndarray) -> np.ndarray:
    return grid.angle_matrix @ injection


def check_dispatch(sol: DispatchSolution, grid, bus_loads, wind_cap, lo_t, hi_t) -> None:
    """Raise OracleError if any feasibility invariant is violated."""
    inj = _injection(grid, sol.thermal, sol.wind, sol.shed, bus_loads)
    resid = inj - grid.incidence.T @ sol.flows
    if np.abs(resid).max(initial=0.0) > BALANCE_TOL:
        raise OracleError(f"nodal balance residual {np.abs(resid).max():.3g} MW")
    dc = grid.susceptance * (grid.incidence @ sol.angles)
    if np.abs(dc - sol.flows).max(initial=0.0) > BALANCE_TOL:
        raise OracleError("flows are inconsistent with DC angles")
    if np.any(np.abs(sol.flows) > grid.flow_limit + FLOW_TOL):
        raise OracleError("branch flow limit violated")
    tol = 1e-7
    if np.any(sol.thermal < lo_t - tol) or np.any(sol.thermal > hi_t + tol):
        raise OracleError("thermal dispatch outside its bounds")
    if np.any(sol.wind < -tol) or np.any(sol.wind > wind_cap + tol):
        raise OracleError("wind dispatch outside availability")
    if np.any(sol.shed < -tol) or np.any(sol.shed > bus_loads + tol):
        raise OracleError("shedding outside [0, load]")


# -- commitment ---------------------------------------------------------------

def commit_units(grid: GridTopology, zonal_net_load, reserve_margin: float = 0.1) -> CommitmentSchedule:
    """Priority-list commitment with forward min-up / min-down repair.

    Each hour units are switched on in ascending cost order until online
    capacity covers ``(1 + reserve_margin)`` times the system net load.
    The repair pass only ever turns units on: on-runs shorter than min_up
    are extended forward and off-gaps shorter than min_down are filled.
    """
    net = np.atleast_2d(np.asarray(zonal_net_load, dtype=float))
    if reserve_margin < 0:
        raise ValueError("reserve_margin must be >= 0")
    horizon = net.shape[0]
    units = grid.thermal
    cap = np.array([g.p_max for g in units])
    order = sorted(range(len(units)), key=lambda k: (units[k].cost, units[k].id))
    target = (1.0 + reserve_margin) * np.maximum(net.sum(axis=1), 0.0)

    status = np.zeros((len(units), horizon), dtype=np.int8)
    for t in range(horizon):
        online = 0.0
        for k in order:
            if online >= target[t]:
                break
            status[k, t] = 1
            online += cap[k]
    inadequate = cap.sum() < target

    for k, g in enumerate(units):
        status[k] = _repair_runs(status[k], g.min_up, g.min_down)
    return CommitmentSchedule(status, inadequate)


def _repair_runs(u: np.ndarray, min_up: int, min_down: int) -> np.ndarray:
    u = u.copy()
    horizon = u.size
    changed = True
    while changed:
        changed = False
        t = 0
        while t < horizon:
            if u[t] == 1 and (t == 0 or u[t - 1] == 0):
                end = min(t + min_up, horizon)
                if not u[t:end].all():
                    u[t:end] = 1
                    changed = True
            if u[t] == 0 and t > 0 and u[t - 1] == 1:
                stop = t
                while stop < horizon and u[stop] == 0:
                    stop += 1
                # a gap closed by a restart inside the horizon must last min_down
                if stop < horizon and stop - t < min_down:
                    u[t:stop] = 1
                    changed = True
            t += 1
    return u


def check_run_lengths(u: np.ndarray, min_up: int, min_down: int) -> bool:
    """True if every interior on/off run satisfies the minimum durations."""
    runs = []
    t = 0
    while t < u.size:
        s = t
        while t < u.size and u[t] == u[s]:
            t += 1
        runs.append((int(u[s]), s, t))
    for val, s, e in runs:
        if val == 1 and e < u.size and e - s < min_up:
            return False
        if val == 0 and s > 0 and e < u.size and e - s < min_down:
            return False
    return True


# -- multi-period -------------------------------------------------------------

def extract_qoi(dispatch, grid: GridTopology) -> QoiVector:
    """Zonal thermal generation and shedding for one or more hours."""
    if isinstance(dispatch, HorizonSolution):
        dispatch = dispatch.dispatch
    if isinstance(dispatch, DispatchSolution):
        dispatch = [dispatch]
    zmat = zone_membership_matrix(grid)
    gen = np.zeros((len(dispatch), grid.n_zones))
    shed = np.zeros((len(dispatch), grid.n_zones))
    for t, d in enumerate(dispatch):
        bus_gen = np.zeros(grid.n_buses)
        np.add.at(bus_gen, grid.thermal_bus, d.thermal)
        gen[t] = zmat @ bus_gen
        shed[t] = zmat @ d.shed
    # LP round-off must not leak into the labels: with a strict A > 0 test a
    # 1e-13 MW basic shed variable would count as a shedding event
    gen[np.abs(gen) < QOI_SNAP] = 0.0
    shed[shed < QOI_SNAP] = 0.0
    return QoiVector(np.maximum(gen, 0.0), shed)


def solve_multiperiod(grid: GridTopology, sample, config: OracleConfig | None = None) -> HorizonSolution:
    """Commit on the scenario's net load, then dispatch hour by hour."""
    config = config or OracleConfig()
    sample = np.atleast_2d(np.asarray(sample, dtype=float))
    loads, wind = zonal_mw(sample, grid, config.wind_curve)
    schedule = commit_units(grid, loads - wind, config.reserve_margin)
    dispatch: list[DispatchSolution] = []
    prev = None
    for t in range(sample.shape[0]):
        try:
            d = solve_dc_opf(
                grid,
                disaggregate_load(loads[t], grid),
                disaggregate_wind(wind[t], grid),
                schedule.status[:, t],
                prev,
                voll=config.voll,
                shed_tiebreak=config.shed_tiebreak,
            )
        except OracleError as exc:
            raise OracleError(f"hour {t}: {exc}") from exc
        dispatch.append(d)
        prev = d.thermal
    return HorizonSolution(schedule, dispatch, extract_qoi(dispatch, grid))
