"""Graph-convolutional surrogate written directly in numpy.

Each layer is ``H' = relu(A_hat @ H @ W + b)`` with the symmetric-normalized
adjacency (self-loops included). Node embeddings of the last layer are
mean-pooled per zone, concatenated across zones and mapped by one affine
readout to ``zones x T x 2`` outputs (thermal generation, shedding). The
readout output is multiplied by a fixed per-output scale so the network
works in O(1) units while predictions come out in MW.

Gradients are hand-written reverse mode; training uses Adam.

Arrays inside the network are node-major: ``(n_nodes, batch, width)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .grid import GridTopology, zone_membership_matrix

GEN, SHED = 0, 1


class ShapeError(ValueError):
    pass


# -- graph operators ------------------------------------------------------------

def build_normalized_adjacency(grid: GridTopology) -> np.ndarray:
    """Dense ``A_hat[u, v] = 1 / sqrt(|N(u)| |N(v)|)`` over edges and self-loops.

    ``|N(.)|`` counts distinct neighbours plus the node itself; parallel
    branches collapse to one edge.
    """
    n = grid.n_buses
    adj = np.eye(n, dtype=bool)
    for br in grid.branches:
        adj[br.from_bus, br.to_bus] = adj[br.to_bus, br.from_bus] = True
    deg = adj.sum(axis=1).astype(float)
    inv = 1.0 / np.sqrt(deg)
    return np.where(adj, inv[:, None] * inv[None, :], 0.0)


def pooling_matrix(grid: GridTopology) -> np.ndarray:
    """Row-normalized zone membership: zone-mean pooling."""
    z = zone_membership_matrix(grid)
    return z / z.sum(axis=1, keepdims=True)


def node_features(grid: GridTopology, bus_loads: np.ndarray, bus_wind: np.ndarray) -> np.ndarray:
    """Raw node features for a batch.

    ``bus_loads`` and ``bus_wind`` are (batch, T, buses). Returns
    (batch, buses, 2T + 2 + zones): per-hour load, per-hour available wind,
    thermal capacity, incident susceptance and zone one-hot.
    """
    bsz, horizon, n = bus_loads.shape
    static = np.zeros((n, 2 + grid.n_zones))
    np.add.at(static[:, 0], grid.thermal_bus, [g.p_max for g in grid.thermal])
    np.add.at(static[:, 1], [br.from_bus for br in grid.branches], grid.susceptance)
    np.add.at(static[:, 1], [br.to_bus for br in grid.branches], grid.susceptance)
    static[np.arange(n), 2 + grid.bus_zone] = 1.0
    feats = np.empty((bsz, n, 2 * horizon + static.shape[1]))
    feats[:, :, :horizon] = bus_loads.transpose(0, 2, 1)
    feats[:, :, horizon : 2 * horizon] = bus_wind.transpose(0, 2, 1)
    feats[:, :, 2 * horizon :] = static
    return feats


def bus_wind_matrix(grid: GridTopology) -> np.ndarray:
    """(wind units x buses) 0/1 map from unit availability to bus totals."""
    m = np.zeros((len(grid.wind), grid.n_buses))
    m[np.arange(len(grid.wind)), grid.wind_bus] = 1.0
    return m


# -- parameters -------------------------------------------------------------------

@dataclass
class ModelParams:
    """Weights of the surrogate.

    ``layers`` is a list of ``(W, b)`` propagation layers; ``readout_w`` maps
    the concatenated zone embeddings (zones * H) to zones * T * 2 outputs.
    ``out_scale`` (zones, T, 2) converts readout units to MW.
    """

    layers: list[tuple[np.ndarray, np.ndarray]]
    readout_w: np.ndarray
    readout_b: np.ndarray
    n_zones: int
    horizon: int
    out_scale: np.ndarray = field(default=None)

    def __post_init__(self) -> None:
        if self.out_scale is None:
            self.out_scale = np.ones((self.n_zones, self.horizon, 2))
        width = None
        for w, b in self.layers:
            if width is not None and w.shape[0] != width:
                raise ShapeError("layer widths do not chain")
            if b.shape != (w.shape[1],):
                raise ShapeError("bias does not match layer width")
            width = w.shape[1]
        if width is not None and self.readout_w.shape[0] != self.n_zones * width:
            raise ShapeError("readout input must be zones * hidden width")
        if self.readout_w.shape[1] != self.n_zones * self.horizon * 2:
            raise ShapeError("readout output must be zones * T * 2")

    @property
    def hidden(self) -> int:
        return self.layers[-1][0].shape[1]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in self.layers:
            out += [w, b]
        return out + [self.readout_w, self.readout_b]

    def with_arrays(self, arrays: list[np.ndarray]) -> ModelParams:
        k = len(self.layers)
        layers = [(arrays[2 * i], arrays[2 * i + 1]) for i in range(k)]
        return ModelParams(layers, arrays[2 * k], arrays[2 * k + 1], self.n_zones, self.horizon, self.out_scale)

    def copy(self) -> ModelParams:
        return self.with_arrays([a.copy() for a in self.arrays()])

    @property
    def n_parameters(self) -> int:
        return sum(a.size for a in self.arrays())


def init_params(n_features: int, hidden: int, n_zones: int, horizon: int, seed: int, n_layers: int = 3) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.Generator(np.random.Philox(key=int(seed) & ((1 << 64) - 1)))

    def glorot(fan_in, fan_out):
        lim = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=(fan_in, fan_out))

    layers = []
    width = n_features
    for _ in range(n_layers):
        layers.append((glorot(width, hidden), np.zeros(hidden)))
        width = hidden
    n_out = n_zones * horizon * 2
    return ModelParams(layers, glorot(n_zones * hidden, n_out), np.zeros(n_out), n_zones, horizon)


# -- forward / backward ---------------------------------------------------------------

@dataclass
class Graph:
    """Propagation and pooling operators shared by every sample."""

    a_hat: np.ndarray
    pool: np.ndarray

    def __post_init__(self) -> None:
        self._sparse = sp.csr_matrix(self.a_hat)

    @classmethod
    def from_grid(cls, grid: GridTopology) -> Graph:
        return cls(build_normalized_adjacency(grid), pooling_matrix(grid))

    def propagate(self, h: np.ndarray) -> np.ndarray:
        n = h.shape[0]
        return (self._sparse @ h.reshape(n, -1)).reshape(h.shape)

    # A_hat is symmetric so the adjoint is the same operator
    propagate_adjoint = propagate


def _check_input(params: ModelParams, x: np.ndarray, graph: Graph) -> None:
    if x.ndim != 3:
        raise ShapeError("features must be (batch, nodes, features)")
    if x.shape[1] != graph.a_hat.shape[0]:
        raise ShapeError(f"features have {x.shape[1]} nodes, adjacency has {graph.a_hat.shape[0]}")
    if params.layers and x.shape[2] != params.layers[0][0].shape[0]:
        raise ShapeError(f"features have width {x.shape[2]}, first layer expects {params.layers[0][0].shape[0]}")
    if graph.pool.shape != (params.n_zones, x.shape[1]):
        raise ShapeError("pooling matrix does not match zones x nodes")


def embed(params: ModelParams, x: np.ndarray, graph: Graph, cache: list | None = None) -> np.ndarray:
    """Node embeddings after all propagation layers, node-major (n, B, H)."""
    h = x.transpose(1, 0, 2)
    for w, b in params.layers:
        agg = graph.propagate(h)
        z = agg @ w + b
        if cache is not None:
            cache.append((agg, z))
        h = np.maximum(z, 0.0)
    return h


def forward(params: ModelParams, x: np.ndarray, graph: Graph, cache: dict | None = None) -> np.ndarray:
    """Raw predictions in MW, shape (batch, zones, T, 2). Not clamped."""
    _check_input(params, x, graph)
    layer_cache: list | None = [] if cache is not None else None
    h = embed(params, x, graph, layer_cache)
    n, bsz, width = h.shape
    pooled = (graph.pool @ h.reshape(n, -1)).reshape(params.n_zones, bsz, width)
    flat = pooled.transpose(1, 0, 2).reshape(bsz, params.n_zones * width)
    out = flat @ params.readout_w + params.readout_b
    if cache is not None:
        cache.update(layers=layer_cache, h_last=h, flat=flat)
    return out.reshape(bsz, params.n_zones, params.horizon, 2) * params.out_scale


def penalty(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return np.maximum(x - hi, 0.0) - np.minimum(x - lo, 0.0)


def loss(pred: np.ndarray, truth: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> float:
    """Mean squared error plus mean squared bound violation."""
    zeta = penalty(pred, lo, hi)
    return float(np.mean((pred - truth) ** 2) + np.mean(zeta**2))


def loss_grad(pred, truth, lo, hi) -> np.ndarray:
    k = pred.size
    zeta = penalty(pred, lo, hi)
    dzeta = (pred > hi).astype(float) - (pred < lo).astype(float)
    return (2.0 / k) * ((pred - truth) + zeta * dzeta)


def scaled_loss_and_grads(params: ModelParams, x, graph: Graph, truth, lo, hi):
    """Loss in readout units (MW divided by ``out_scale``) and its gradients.

    Returns ``(loss, grads)`` with ``grads`` aligned to ``params.arrays()``.
    """
    cache: dict = {}
    pred = forward(params, x, graph, cache)
    s = params.out_scale
    val = loss(pred / s, truth / s, lo / s, hi / s)
    d_out = loss_grad(pred / s, truth / s, lo / s, hi / s)
    return val, backward(params, graph, cache, d_out)


def backward(params: ModelParams, graph: Graph, cache: dict, d_out: np.ndarray) -> list[np.ndarray]:
    """Reverse pass given dL/d(readout output) shaped (B, zones, T, 2)."""
    bsz = d_out.shape[0]
    d_out = d_out.reshape(bsz, -1)
    flat = cache["flat"]
    grads_readout = [flat.T @ d_out, d_out.sum(axis=0)]
    d_flat = d_out @ params.readout_w.T
    h = cache["h_last"]
    n, _, width = h.shape
    d_pooled = d_flat.reshape(bsz, params.n_zones, width).transpose(1, 0, 2)
    d_h = (graph.pool.T @ d_pooled.reshape(params.n_zones, -1)).reshape(n, bsz, width)

    layer_grads: list[np.ndarray] = []
    for k in range(len(params.layers) - 1, -1, -1):
        w, _ = params.layers[k]
        agg, z = cache["layers"][k]
        d_z = d_h * (z > 0.0)
        d_w = agg.reshape(-1, agg.shape[-1]).T @ d_z.reshape(-1, d_z.shape[-1])
        d_b = d_z.sum(axis=(0, 1))
        layer_grads = [d_w, d_b] + layer_grads
        if k > 0:
            d_h = graph.propagate_adjoint(d_z @ w.T)
    return layer_grads + grads_readout


# -- optimizer -------------------------------------------------------------------------

@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, arrays: list[np.ndarray]) -> AdamState:
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays])


def adam_step(arrays, grads, state: AdamState, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update. Returns (new arrays, new state)."""
    t = state.step + 1
    new_m, new_v, new_p = [], [], []
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for p, g, m, v in zip(arrays, grads, state.m, state.v):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        new_p.append(p - lr * (m / c1) / (np.sqrt(v / c2) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(new_m, new_v, t)
