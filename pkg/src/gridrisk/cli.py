"""``gridrisk`` command line: generate -> solve -> train -> predict -> assess -> compare.

Stages talk to each other only through files with fixed names under
``--out``. Wall-clock timings go to separate ``*_timing.json`` files so every
other output is byte-identical across reruns with the same seed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from scipy import stats

from . import gcn, risk
from .config import ConfigError, RunConfig, load_config
from .distributions import DomainError, std_normal_ppf
from .grid import GridParseError, GridStructureError, GridTopology, GridValidationError
from .oracle import OracleConfig, OracleError, solve_multiperiod
from .scenarios import (
    ConfigurationError as ScenarioConfigError,
    FactorizationError,
    ScenarioSet,
    load_scenarios,
    sample_scenarios,
    save_scenarios,
)
from .surrogate import (
    CheckpointError,
    ConfigurationError as TrainConfigError,
    build_dataset,
    history_csv,
    load_checkpoint,
    save_checkpoint,
    train,
)

log = logging.getLogger("gridrisk")

SCENARIOS = "scenarios.bin"
LABELS = "labels.csv"
FAILURES = "solve_failures.csv"
CHECKPOINT = "model.ckpt"
HISTORY = "train_history.csv"
PREDICTIONS = "predictions.csv"
RISK = "risk_{}.csv"
RISK_JSON = "risk_{}.json"
COMPARE = "compare.csv"
SOLVE_TIMING = "solve_timing.json"
PREDICT_TIMING = "predict_timing.json"

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
QOI_HEADER = ("sample", "t", "zone", "generation", "shed")


class StageError(RuntimeError):
    """A stage finished but some of its work failed (exit code 2)."""


# -- QoI tables ----------------------------------------------------------------------

def qoi_to_csv(samples: np.ndarray, qoi: np.ndarray) -> str:
    """``qoi`` is (N, zones, T, 2); one row per (sample, t, zone)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(QOI_HEADER)
    n, z, horizon, _ = qoi.shape
    for k in range(n):
        for t in range(horizon):
            for j in range(z):
                w.writerow([int(samples[k]), t, j, repr(float(qoi[k, j, t, 0])), repr(float(qoi[k, j, t, 1]))])
    return buf.getvalue()


def qoi_from_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`qoi_to_csv`: (sample ids, (N, zones, T, 2) array)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != QOI_HEADER:
        raise ConfigError(f"{path}: expected header {','.join(QOI_HEADER)}")
    body = np.array([[float(v) for v in r] for r in rows[1:]]).reshape(-1, 5)
    samples = np.unique(body[:, 0].astype(int))
    horizon = int(body[:, 1].max()) + 1 if body.size else 0
    zones = int(body[:, 2].max()) + 1 if body.size else 0
    if body.shape[0] != samples.size * horizon * zones:
        raise ConfigError(f"{path}: rows do not form a complete sample x hour x zone table")
    out = np.zeros((samples.size, zones, horizon, 2))
    pos = np.searchsorted(samples, body[:, 0].astype(int))
    t, z = body[:, 1].astype(int), body[:, 2].astype(int)
    out[pos, z, t, 0] = body[:, 3]
    out[pos, z, t, 1] = body[:, 4]
    return samples, out


# -- stages --------------------------------------------------------------------------

def cmd_generate(cfg: RunConfig, out: Path) -> ScenarioSet:
    sset = sample_scenarios(cfg.samples, cfg.horizon, cfg.marginals, cfg.correlation, cfg.seed)
    save_scenarios(sset, out / SCENARIOS)
    print(f"wrote {out / SCENARIOS}: {sset.values.shape[0]} x {sset.values.shape[1]} x {sset.values.shape[2]}")
    _print_diagnostics(sset)
    return sset


def _print_diagnostics(sset: ScenarioSet) -> None:
    """KS p-value per column (pooled over hours) and latent correlation error."""
    w = sset.values.reshape(-1, sset.n_vars)
    z = np.empty_like(w)
    for i, marg in enumerate(sset.marginals):
        ks = stats.kstest(w[:, i], marg.cdf)
        print(f"  column {i}: KS stat {ks.statistic:.4f}  p {ks.pvalue:.3f}")
        u = np.clip(marg.cdf(w[:, i]), 1e-12, 1 - 1e-12)
        z[:, i] = std_normal_ppf(u)
    if w.shape[0] > 2:
        err = np.abs(np.corrcoef(z, rowvar=False) - sset.correlation).max()
        print(f"  max |latent corr - C| = {err:.4f}")


def _solve_one(args):
    grid, sample, oracle = args
    t0 = time.perf_counter()
    try:
        h = solve_multiperiod(grid, sample, oracle)
    except (OracleError, ValueError, np.linalg.LinAlgError) as exc:
        return None, f"{type(exc).__name__}: {exc}", time.perf_counter() - t0
    qoi = np.stack([h.qoi.generation.T, h.qoi.shed.T], axis=-1)
    return qoi, None, time.perf_counter() - t0


def cmd_solve(cfg: RunConfig, out: Path, grid: GridTopology | None = None) -> np.ndarray:
    grid = grid or cfg.load_grid()
    sset = load_scenarios(out / SCENARIOS)
    if sset.n_vars != 2 * grid.n_zones:
        raise ConfigError(f"scenario file has {sset.n_vars} columns; grid has {grid.n_zones} zones")
    oracle = cfg.oracle()
    jobs = [(grid, sset.values[i], oracle) for i in range(sset.n_samples)]
    if cfg.threads > 1:
        with ProcessPoolExecutor(cfg.threads) as pool:
            results = list(pool.map(_solve_one, jobs, chunksize=8))
    else:
        results = []
        for i, job in enumerate(jobs):
            results.append(_solve_one(job))
            if (i + 1) % 100 == 0:
                log.info("solved %d / %d", i + 1, len(jobs))
    ok = [i for i, r in enumerate(results) if r[0] is not None]
    failed = [(i, r[1]) for i, r in enumerate(results) if r[0] is None]
    qoi = np.stack([results[i][0] for i in ok]) if ok else np.zeros((0, grid.n_zones, sset.horizon, 2))
    (out / LABELS).write_text(qoi_to_csv(np.asarray(ok, dtype=int), qoi))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample", "error"])
    w.writerows(failed)
    (out / FAILURES).write_text(buf.getvalue())
    seconds = [r[2] for r in results]
    _write_timing(out / SOLVE_TIMING, seconds, threads=cfg.threads)
    shed_any = float((qoi[..., 1].sum(axis=1) > 0).any(axis=1).mean()) if ok else 0.0
    print(f"solved {len(ok)} / {len(jobs)} samples; mean {np.mean(seconds):.4f} s per sample; "
          f"{shed_any:.3f} of samples shed load in some hour")
    if failed:
        raise StageError(f"{len(failed)} sample(s) failed; see {out / FAILURES}")
    return qoi


def _write_timing(path: Path, seconds, **extra) -> None:
    doc = {"n": len(seconds), "mean_seconds": float(np.mean(seconds)) if len(seconds) else 0.0,
           "per_sample_seconds": [float(s) for s in seconds], **extra}
    path.write_text(json.dumps(doc, indent=1) + "\n")


def _aligned_dataset(cfg: RunConfig, out: Path, grid: GridTopology):
    sset = load_scenarios(out / SCENARIOS)
    samples, qoi = qoi_from_csv(out / LABELS)
    if samples.size and (samples.max() >= sset.n_samples or qoi.shape[2] != sset.horizon):
        raise ConfigError("labels do not match the scenario file (sample ids or horizon)")
    return build_dataset(grid, sset.values[samples], cfg.wind_curve, qoi), samples


def cmd_train(cfg: RunConfig, out: Path, grid: GridTopology | None = None):
    grid = grid or cfg.load_grid()
    data, samples = _aligned_dataset(cfg, out, grid)
    model = train(grid, data, cfg.train)
    # splits are stored as scenario sample ids, not dataset rows
    model.split = {k: samples[v] for k, v in model.split.items()}
    save_checkpoint(model, out / CHECKPOINT, cfg.train)
    (out / HISTORY).write_text(history_csv(model))
    sizes = "/".join(str(model.split[k].size) for k in ("train", "val", "test"))
    print(f"trained on split {sizes}; best val loss {min(h[2] for h in model.history) if model.history else float('nan'):.6g}")
    return model


def cmd_predict(cfg: RunConfig, out: Path, grid: GridTopology | None = None, subset: str = "test") -> np.ndarray:
    grid = grid or cfg.load_grid()
    model = load_checkpoint(out / CHECKPOINT, grid)
    sset = load_scenarios(out / SCENARIOS)
    if sset.horizon != model.horizon:
        raise ConfigError(f"checkpoint is for T={model.horizon}, scenarios have T={sset.horizon}")
    samples = np.arange(sset.n_samples) if subset == "all" else np.asarray(model.split.get("test", []), dtype=int)
    samples = samples[samples < sset.n_samples]
    data = build_dataset(grid, sset.values[samples], cfg.wind_curve)
    graph = gcn.Graph.from_grid(grid)
    preds = np.empty((samples.size, grid.n_zones, sset.horizon, 2))
    seconds = []
    for k in range(samples.size):
        # one scenario at a time so the timing is a per-scenario figure
        t0 = time.perf_counter()
        preds[k] = model.predict(data.take(slice(k, k + 1)), graph)[0]
        seconds.append(time.perf_counter() - t0)
    (out / PREDICTIONS).write_text(qoi_to_csv(samples, preds))
    _write_timing(out / PREDICT_TIMING, seconds)
    print(f"predicted {samples.size} samples; mean {np.mean(seconds) if seconds else 0:.6f} s per sample")
    return preds


def cmd_assess(cfg: RunConfig, out: Path, source: str, grid: GridTopology | None = None) -> risk.RiskReport:
    """Risk report for ``source`` in {oracle, gnn} on the samples that have predictions."""
    grid = grid or cfg.load_grid()
    pred_ids, preds = qoi_from_csv(out / PREDICTIONS)
    if source == "gnn":
        qoi = preds
    elif source == "oracle":
        ids, labels = qoi_from_csv(out / LABELS)
        missing = np.setdiff1d(pred_ids, ids)
        if missing.size:
            raise ConfigError(f"no oracle labels for predicted samples {missing[:5].tolist()}...")
        qoi = labels[np.searchsorted(ids, pred_ids)]
    else:
        raise ConfigError(f"unknown source {source!r}")
    report = risk.assess(qoi, cfg.failure_specs(grid.n_zones), source)
    (out / RISK.format(source)).write_text(risk.report_to_csv(report))
    (out / RISK_JSON.format(source)).write_text(risk.report_to_json(report))
    print(f"{source}: {len(report)} risk entries over {qoi.shape[0]} samples")
    return report


def cmd_compare(out: Path) -> list[risk.RiskDelta]:
    ref = risk.report_from_csv((out / RISK.format("oracle")).read_text())
    other = risk.report_from_csv((out / RISK.format("gnn")).read_text())
    deltas = risk.compare_reports(ref, other)
    (out / COMPARE).write_text(risk.deltas_to_csv(deltas))
    dp, dr = risk.max_deltas(deltas)
    print(f"max |dP| = {dp:.4f}   max relative dR = {dr:.4f}")
    return deltas


def cmd_pipeline(cfg: RunConfig, out: Path) -> None:
    grid = cfg.load_grid()
    cmd_generate(cfg, out)
    cmd_solve(cfg, out, grid)
    cmd_train(cfg, out, grid)
    cmd_predict(cfg, out, grid)
    cmd_assess(cfg, out, "oracle", grid)
    cmd_assess(cfg, out, "gnn", grid)
    cmd_compare(out)


# -- entry point ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML or JSON run configuration")
    common.add_argument("--grid", help="grid file (default: bundled 118-bus fixture)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--horizon", type=int, help="hours per scenario (1, 12, ...)")
    common.add_argument("--samples", type=int, help="number of scenarios N")
    common.add_argument("--threads", type=int, help="worker processes for solve")
    common.add_argument("--epochs", type=int, help="override train.epochs")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="gridrisk", description="Grid operational-risk pipeline")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("generate", "solve", "train", "pipeline", "compare"):
        sub.add_parser(name, parents=[common])
    p = sub.add_parser("predict", parents=[common])
    p.add_argument("--all", action="store_true", help="predict every scenario, not just the test split")
    p = sub.add_parser("assess", parents=[common])
    p.add_argument("--source", choices=("oracle", "gnn"), required=True)
    return ap


def _run(args) -> None:
    overrides = {k: getattr(args, k) for k in ("grid", "out", "seed", "horizon", "samples", "threads")}
    cfg = load_config(args.config, **overrides)
    if args.epochs is not None:
        cfg.train.epochs = args.epochs
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.command == "generate":
        cmd_generate(cfg, out)
    elif args.command == "solve":
        cmd_solve(cfg, out)
    elif args.command == "train":
        cmd_train(cfg, out)
    elif args.command == "predict":
        cmd_predict(cfg, out, subset="all" if args.all else "test")
    elif args.command == "assess":
        cmd_assess(cfg, out, args.source)
    elif args.command == "compare":
        cmd_compare(out)
    else:
        cmd_pipeline(cfg, out)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _run(args)
    except (FactorizationError, DomainError, OracleError, GridValidationError, GridStructureError,
            StageError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ScenarioConfigError, TrainConfigError, CheckpointError, GridParseError,
            risk.ConfigurationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
