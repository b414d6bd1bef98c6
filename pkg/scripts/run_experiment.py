"""Run the real-time (T=1) and hours-ahead (T=12) desk experiments end to end.

Each horizon goes through every pipeline stage in its own output directory,
then a short summary is printed: zonal MRE per QoI on the test split, oracle
vs surrogate shedding probabilities and risks, and the inference speedup.

    python scripts/run_experiment.py --out runs --samples 1000
    python scripts/run_experiment.py --horizons 1 --samples 200 --epochs 50
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np

from gridrisk import cli
from gridrisk.config import load_config
from gridrisk.risk import compare_reports, report_from_csv
from gridrisk.surrogate import evaluate_mre

ZONE_NAMES = ("I", "II", "III")


def run_horizon(args, horizon: int) -> None:
    out = Path(args.out) / f"T{horizon}"
    out.mkdir(parents=True, exist_ok=True)
    cfg = load_config(args.config, samples=args.samples, horizon=horizon, seed=args.seed,
                      out=str(out), threads=args.threads)
    if args.epochs is not None:
        cfg.train.epochs = args.epochs
    print(f"== T={horizon}: N={cfg.samples}, seed={cfg.seed}, output {out}")
    cli.cmd_pipeline(cfg, out)

    ids, labels = cli.qoi_from_csv(out / cli.LABELS)
    pred_ids, pred = cli.qoi_from_csv(out / cli.PREDICTIONS)
    truth = labels[np.searchsorted(ids, pred_ids)]
    mre = evaluate_mre(pred, truth, cfg.eps_denom)["zonal"]
    print(f"   test samples: {pred_ids.size}")
    for j in range(mre.shape[0]):
        name = ZONE_NAMES[j] if j < len(ZONE_NAMES) else str(j)
        print(f"   zone {name:>3}: max MRE generation {mre[j, :, 0].max():.4f}  shedding {mre[j, :, 1].max():.4f}")

    deltas = compare_reports(report_from_csv((out / cli.RISK.format("oracle")).read_text()),
                             report_from_csv((out / cli.RISK.format("gnn")).read_text()))
    print("   zone    t   P_oracle  P_gnn    R_oracle    R_gnn")
    for d in deltas:
        if d.t in (0, horizon - 1):
            zone = "sys" if d.zone is None else ZONE_NAMES[d.zone]
            print(f"   {zone:>4} {d.t:>4}   {d.p_ref:.3f}    {d.p_other:.3f}  {d.risk_ref:10.1f}  {d.risk_other:10.1f}")

    solve = json.loads((out / cli.SOLVE_TIMING).read_text())["mean_seconds"]
    predict = json.loads((out / cli.PREDICT_TIMING).read_text())["mean_seconds"]
    print(f"   mean solve {solve * 1e3:.1f} ms, mean inference {predict * 1e3:.3f} ms, "
          f"speedup {solve / predict:.0f}x")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, help="base YAML/JSON run configuration")
    ap.add_argument("--out", default="runs")
    ap.add_argument("--samples", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--epochs", type=int)
    ap.add_argument("--horizons", type=int, nargs="+", default=[1, 12])
    args = ap.parse_args()
    for horizon in args.horizons:
        run_horizon(args, horizon)


if __name__ == "__main__":
    main()
