"""Build the bundled 118-bus fixture ``src/gridrisk/data/case118.grid.json``.

Connectivity, reactances, bus loads (used as disaggregation weights) and
generator locations come from the IEEE 118-bus case. Everything else is
assigned here from a fixed seed:

* zones: I = buses 1-32, 113-115, 117; II = 33-67; III = 68-112, 116, 118
* 16 of the 54 generator buses become wind plants (5 / 5 / 6 per zone)
* thermal capacities, costs, ramp rates and min up/down times are drawn so
  that zonal thermal fleets are comparable to the zonal load marginals
* tie lines between zones are rated low enough to congest; internal lines
  are rated well above any flow they can carry

Run from the repository root:  python scripts/build_case118.py
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))
import case118_data as data  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
DEFAULT_OUT = ROOT / "src" / "gridrisk" / "data" / "case118.grid.json"

WIND_PER_ZONE = (5, 5, 6)


def zone_of(bus: int) -> int:
    if bus <= 32 or bus in (113, 114, 115, 117):
        return 0
    if bus <= 67:
        return 1
    return 2


def build(args) -> dict:
    rng = np.random.default_rng(args.seed)
    buses = [
        {"id": b - 1, "zone": zone_of(b), "base_load": float(load)}
        for b, load in enumerate(data.BUS_LOAD, start=1)
    ]

    branches = []
    for a, b, x in data.BRANCHES:
        tie = zone_of(a) != zone_of(b)
        branches.append(
            {
                "from": a - 1,
                "to": b - 1,
                "susceptance": round(100.0 / x, 6),
                "flow_limit": args.tie_limit if tie else args.internal_limit,
            }
        )

    gen_buses = list(data.GEN_BUSES)
    wind_buses: set[int] = set()
    for z, count in enumerate(WIND_PER_ZONE):
        pool = [b for b in gen_buses if zone_of(b) == z]
        wind_buses.update(int(b) for b in rng.choice(pool, size=count, replace=False))

    thermal_cap = (args.cap_i, args.cap_ii, args.cap_iii)
    gens = []
    for gid, b in enumerate(gen_buses):
        z = zone_of(b)
        if b in wind_buses:
            gens.append(
                {
                    "id": gid,
                    "bus": b - 1,
                    "kind": "wind",
                    "p_min": 0.0,
                    "p_max": args.wind_unit,
                    "cost": 0.0,
                    "ramp": args.wind_unit,
                    "min_up": 1,
                    "min_down": 1,
                }
            )
        else:
            gens.append({"id": gid, "bus": b - 1, "kind": "thermal", "zone": z})

    for z in range(3):
        units = [g for g in gens if g.get("zone") == z]
        shares = rng.dirichlet(np.full(len(units), 4.0))
        for g, share in zip(units, shares):
            pmax = round(float(thermal_cap[z] * share), 2)
            del g["zone"]
            g.update(
                kind="thermal",
                p_min=0.0,
                p_max=pmax,
                ramp=round(float(pmax * rng.uniform(0.4, 0.8)), 2),
                min_up=int(rng.integers(1, 5)),
                min_down=int(rng.integers(1, 4)),
            )
    # strictly distinct costs keep the merit order and the dispatch unique
    thermal = [g for g in gens if g["kind"] == "thermal"]
    cents = rng.choice(np.arange(1500, 6001), size=len(thermal), replace=False)
    for g, c in zip(thermal, cents):
        g["cost"] = float(c) / 100.0

    return {
        "buses": buses,
        "branches": branches,
        "generators": gens,
        "zones": [0, 1, 2],
        "reference_bus": 0,
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=DEFAULT_OUT)
    ap.add_argument("--seed", type=int, default=118)
    ap.add_argument("--cap-i", type=float, default=70.0)
    ap.add_argument("--cap-ii", type=float, default=75.0)
    ap.add_argument("--cap-iii", type=float, default=95.0)
    ap.add_argument("--wind-unit", type=float, default=6.0)
    ap.add_argument("--tie-limit", type=float, default=8.0)
    ap.add_argument("--internal-limit", type=float, default=100.0)
    args = ap.parse_args()

    from gridrisk.grid import grid_from_dict, save_grid

    grid = grid_from_dict(build(args))
    save_grid(grid, args.out)
    print(f"wrote {args.out}: {grid.n_buses} buses, {grid.n_branches} branches, "
          f"{len(grid.thermal)} thermal + {len(grid.wind)} wind units")
    print("zonal thermal capacity", grid.zonal_thermal_capacity, "wind capacity", grid.zonal_wind_capacity)


if __name__ == "__main__":
    main()
