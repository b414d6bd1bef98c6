"""Training, inference, accuracy metrics and checkpoints for the GCN surrogate."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import gcn
from .grid import GridTopology
from .scenarios import WindCurve, disaggregate_load, disaggregate_wind, zonal_mw

log = logging.getLogger(__name__)

BOUNDS_POLICY = "shed in [0, zonal load]; generation in [0, zonal thermal p_max]"


class ConfigurationError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 500
    batch_size: int = 32
    split: tuple[float, float, float] = (0.7, 0.1, 0.2)
    seed: int = 0
    hidden: int = 64
    patience: int = 50

    def __post_init__(self) -> None:
        self.split = tuple(float(f) for f in self.split)
        if len(self.split) != 3 or abs(sum(self.split) - 1.0) > 1e-9 or min(self.split) < 0:
            raise ConfigurationError("split fractions must be three non-negative numbers summing to 1")
        if self.epochs < 0 or self.batch_size < 1 or self.hidden < 1:
            raise ConfigurationError("epochs >= 0, batch_size >= 1 and hidden >= 1 required")


@dataclass
class Dataset:
    """Model inputs and targets for N samples.

    ``features`` (N, buses, F) raw node features; ``truth``, ``lower`` and
    ``upper`` are (N, zones, T, 2) in MW.
    """

    features: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    truth: np.ndarray | None = None

    def __len__(self) -> int:
        return self.features.shape[0]

    def take(self, idx) -> Dataset:
        return Dataset(
            self.features[idx],
            self.lower[idx],
            self.upper[idx],
            None if self.truth is None else self.truth[idx],
        )


def build_dataset(grid: GridTopology, values: np.ndarray, curve: WindCurve, truth=None) -> Dataset:
    """Features and QoI bounds from scenario values (N, T, M)."""
    values = np.asarray(values, dtype=float)
    loads, wind = zonal_mw(values, grid, curve)
    bus_loads = disaggregate_load(loads, grid)
    unit_wind = disaggregate_wind(wind, grid)
    bus_wind = unit_wind @ gcn.bus_wind_matrix(grid)
    feats = gcn.node_features(grid, bus_loads, bus_wind)
    n, horizon, z = loads.shape
    lower = np.zeros((n, z, horizon, 2))
    upper = np.empty((n, z, horizon, 2))
    upper[..., gcn.GEN] = grid.zonal_thermal_capacity[None, :, None]
    upper[..., gcn.SHED] = loads.transpose(0, 2, 1)
    return Dataset(feats, lower, upper, None if truth is None else np.asarray(truth, dtype=float))


def split_indices(n: int, fractions, seed: int) -> dict[str, np.ndarray]:
    rng = np.random.Generator(np.random.Philox(key=(int(seed) & ((1 << 64) - 1)) | (1 << 64)))
    perm = rng.permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    return {
        "train": np.sort(perm[:n_train]),
        "val": np.sort(perm[n_train : n_train + n_val]),
        "test": np.sort(perm[n_train + n_val :]),
    }


@dataclass
class Surrogate:
    params: gcn.ModelParams
    feature_mean: np.ndarray
    feature_std: np.ndarray
    grid_hash: str
    seed: int
    split: dict[str, np.ndarray] = field(default_factory=dict)
    history: list[tuple[int, float, float]] = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return self.params.horizon

    def normalize(self, features: np.ndarray) -> np.ndarray:
        return (features - self.feature_mean) / self.feature_std

    def predict_raw(self, features: np.ndarray, graph: gcn.Graph) -> np.ndarray:
        return gcn.forward(self.params, self.normalize(features), graph)

    def predict(self, data: Dataset, graph: gcn.Graph) -> np.ndarray:
        """Predictions in MW clamped to the per-sample QoI bounds."""
        return np.clip(self.predict_raw(data.features, graph), data.lower, data.upper)


def feature_statistics(features: np.ndarray, horizon: int) -> tuple[np.ndarray, np.ndarray]:
    """Standardization statistics, shape (buses, F).

    The per-hour load and wind columns are standardized per bus: a bus's
    value is a fixed share of its zone's total, so pooling over buses would
    bury the sample-to-sample signal under the spread between buses. Static
    columns (capacity, susceptance, zone) are standardized over all buses.
    """
    dyn = slice(0, 2 * horizon)
    mean = np.broadcast_to(features.mean(axis=(0, 1)), features.shape[1:]).copy()
    std = np.broadcast_to(features.std(axis=(0, 1)), features.shape[1:]).copy()
    mean[:, dyn] = features[:, :, dyn].mean(axis=0)
    std[:, dyn] = features[:, :, dyn].std(axis=0)
    std = np.where(std > 1e-9 * np.maximum(np.abs(mean), 1.0), std, 1.0)
    return mean, std


def _scale_from(truth: np.ndarray) -> np.ndarray:
    # one scale per (zone, kind), shared across hours
    std = truth.std(axis=(0, 2))
    scale = np.maximum(std, 1.0)
    return np.broadcast_to(scale[:, None, :], truth.shape[1:]).copy()


def train(grid: GridTopology, data: Dataset, config: TrainConfig, graph: gcn.Graph | None = None) -> Surrogate:
    """Fit the surrogate; returns the parameters with the best validation loss."""
    if data.truth is None or len(data) == 0:
        raise ConfigurationError("training needs a non-empty labelled dataset")
    graph = graph or gcn.Graph.from_grid(grid)
    split = split_indices(len(data), config.split, config.seed)
    if split["train"].size == 0:
        raise ConfigurationError("training split is empty")
    train_set = data.take(split["train"])
    val_set = data.take(split["val"]) if split["val"].size else train_set

    horizon = data.truth.shape[2]
    mean, std = feature_statistics(train_set.features, horizon)
    params = gcn.init_params(data.features.shape[2], config.hidden, grid.n_zones, horizon, config.seed)
    params.out_scale = _scale_from(train_set.truth)
    params.readout_b = (train_set.truth.mean(axis=0) / params.out_scale).reshape(-1)
    model = Surrogate(params, mean, std, grid.content_hash, config.seed, split)

    x_train = model.normalize(train_set.features)
    x_val = model.normalize(val_set.features)
    state = gcn.AdamState.zeros_like(params.arrays())
    best_val = _eval_loss(params, x_val, val_set, graph)
    best = params.copy()
    since_best = 0
    shuffle = np.random.Generator(np.random.Philox(key=(int(config.seed) & ((1 << 64) - 1)) | (2 << 64)))
    if config.epochs == 0:
        log.warning("epochs=0: returning the initial parameters")
    for epoch in range(config.epochs):
        order = shuffle.permutation(len(train_set))
        total = 0.0
        for start in range(0, order.size, config.batch_size):
            idx = order[start : start + config.batch_size]
            val, grads = gcn.scaled_loss_and_grads(
                params, x_train[idx], graph, train_set.truth[idx], train_set.lower[idx], train_set.upper[idx]
            )
            arrays, state = gcn.adam_step(
                params.arrays(), grads, state, config.lr, config.beta1, config.beta2, config.eps
            )
            params = params.with_arrays(arrays)
            total += val * idx.size
        val_loss = _eval_loss(params, x_val, val_set, graph)
        model.history.append((epoch, total / len(train_set), val_loss))
        if val_loss < best_val:
            best_val, best, since_best = val_loss, params.copy(), 0
        else:
            since_best += 1
        if epoch % 25 == 0:
            log.info("epoch %d train %.5f val %.5f", epoch, total / len(train_set), val_loss)
        if since_best >= config.patience:
            log.info("early stop at epoch %d (best val %.5f)", epoch, best_val)
            break
    model.params = best
    return model


def _eval_loss(params, x, data: Dataset, graph) -> float:
    pred = gcn.forward(params, x, graph)
    s = params.out_scale
    return gcn.loss(pred / s, data.truth / s, data.lower / s, data.upper / s)


# -- accuracy ------------------------------------------------------------------------

def evaluate_mre(pred: np.ndarray, truth: np.ndarray, eps_denom: float = 1.0) -> dict[str, np.ndarray]:
    """Mean relative error over samples.

    Returns ``zonal`` (zones, T, 2) and ``system`` (T, 2); system values use
    the sum over zones of predictions and of truth.
    """
    if pred.shape != truth.shape or pred.shape[0] == 0:
        raise ConfigurationError("prediction and truth must be non-empty and aligned")

    def mre(p, t):
        return np.mean(np.abs(p - t) / np.maximum(np.abs(t), eps_denom), axis=0)

    return {"zonal": mre(pred, truth), "system": mre(pred.sum(axis=1), truth.sum(axis=1))}


# -- checkpoint ----------------------------------------------------------------------

def save_checkpoint(model: Surrogate, path, config: TrainConfig | None = None) -> None:
    p = model.params
    doc = {
        "format": "gridrisk-gcn-1",
        "grid_hash": model.grid_hash,
        "T": p.horizon,
        "H": p.hidden,
        "zones": p.n_zones,
        "seed": model.seed,
        "bounds_policy": BOUNDS_POLICY,
        "train_config": asdict(config) if config is not None else None,
        "layers": [{"W": _arr(w), "b": _arr(b)} for w, b in p.layers],
        "readout": {"W": _arr(p.readout_w), "b": _arr(p.readout_b)},
        "out_scale": _arr(p.out_scale),
        "feature_mean": _arr(model.feature_mean),
        "feature_std": _arr(model.feature_std),
        "split": {k: v.tolist() for k, v in model.split.items()},
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def _arr(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=float)
    # json writes floats with repr, so values round-trip exactly
    return {"shape": list(a.shape), "data": a.reshape(-1).tolist()}


def _unarr(d: dict) -> np.ndarray:
    return np.asarray(d["data"], dtype=float).reshape(d["shape"])


def load_checkpoint(path, grid: GridTopology | None = None) -> Surrogate:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "gridrisk-gcn-1":
        raise CheckpointError(f"{path}: unknown checkpoint format")
    if grid is not None and doc["grid_hash"] != grid.content_hash:
        raise CheckpointError("checkpoint was trained on a different grid (hash mismatch)")
    params = gcn.ModelParams(
        [(_unarr(layer["W"]), _unarr(layer["b"])) for layer in doc["layers"]],
        _unarr(doc["readout"]["W"]),
        _unarr(doc["readout"]["b"]),
        int(doc["zones"]),
        int(doc["T"]),
        _unarr(doc["out_scale"]),
    )
    return Surrogate(
        params,
        _unarr(doc["feature_mean"]),
        _unarr(doc["feature_std"]),
        doc["grid_hash"],
        int(doc["seed"]),
        {k: np.asarray(v, dtype=int) for k, v in doc["split"].items()},
    )


def history_csv(model: Surrogate) -> str:
    lines = ["epoch,train_loss,val_loss"]
    lines += [f"{e},{tr!r},{va!r}" for e, tr, va in model.history]
    return "\n".join(lines) + "\n"


def mre_within(mre: np.ndarray, bound: float) -> bool:
    return bool(np.all(mre <= bound)) and not math.isnan(float(np.max(mre)))
