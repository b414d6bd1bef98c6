"""Spatio-temporally correlated scenario sampling and zone-to-bus mapping.

Temporal dependence comes from a Gaussian random walk rescaled to unit
variance at every step; spatial dependence from the Cholesky factor of the
zonal correlation matrix; the marginals are imposed through the normal CDF
followed by each marginal's inverse CDF (a Gaussian copula).
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .distributions import (
    MarginalSpec,
    TruncNormal,
    Weibull,
    marginal_from_dict,
    marginal_to_dict,
    std_normal_cdf,
)
from .grid import GridTopology

_MAGIC = b"GRSCEN1\n"
_SEED_MASK = (1 << 64) - 1

# Zonal load (truncated normal, MW) and wind-speed (Weibull, m/s) marginals
# for zones I, II, III, and their 6x6 correlation matrix; variable order is
# (load I, load II, load III, wind I, wind II, wind III).
DEFAULT_MARGINALS: tuple[MarginalSpec, ...] = (
    TruncNormal(location=85.0, scale=10.0, left=55.0, right=115.0),
    TruncNormal(location=90.0, scale=12.0, left=55.0, right=125.0),
    TruncNormal(location=95.0, scale=15.0, left=40.0, right=150.0),
    Weibull(location=1.0, shape=20.0, scale=11.0),
    Weibull(location=3.0, shape=15.0, scale=8.0),
    Weibull(location=1.0, shape=10.0, scale=6.0),
)
DEFAULT_CORRELATION = np.array(
    [
        [1.0, 0.7, 0.5, 0.1, 0.05, 0.03],
        [0.7, 1.0, 0.4, 0.02, 0.08, 0.05],
        [0.5, 0.4, 1.0, 0.06, 0.04, 0.1],
        [0.1, 0.02, 0.06, 1.0, 0.3, 0.4],
        [0.05, 0.08, 0.04, 0.3, 1.0, 0.6],
        [0.03, 0.05, 0.1, 0.4, 0.6, 1.0],
    ]
)


class FactorizationError(ValueError):
    """Correlation matrix is not symmetric positive definite."""


class ConfigurationError(ValueError):
    pass


def cholesky(c) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == c``.

    Raises FactorizationError naming the first non-positive pivot.
    """
    c = np.asarray(c, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise FactorizationError("matrix must be square")
    if not np.allclose(c, c.T, rtol=0.0, atol=1e-12):
        raise FactorizationError("matrix is not symmetric")
    m = c.shape[0]
    low = np.zeros_like(c)
    for j in range(m):
        pivot = c[j, j] - low[j, :j] @ low[j, :j]
        if not pivot > 0.0:
            raise FactorizationError(f"matrix is not positive definite: pivot {j} = {pivot:.6g}")
        low[j, j] = math.sqrt(pivot)
        low[j + 1 :, j] = (c[j + 1 :, j] - low[j + 1 :, :j] @ low[j, :j]) / low[j, j]
    return low


def check_correlation(c) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise FactorizationError("correlation matrix must be square")
    if not np.allclose(np.diag(c), 1.0, rtol=0.0, atol=1e-12):
        raise FactorizationError("correlation matrix must have a unit diagonal")
    cholesky(c)
    return c


@dataclass
class ScenarioSet:
    """``values[n, t, m]``: sample n, hour t, variable m (physical units)."""

    values: np.ndarray
    seed: int
    marginals: tuple[MarginalSpec, ...]
    correlation: np.ndarray
    latent: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def horizon(self) -> int:
        return self.values.shape[1]

    @property
    def n_vars(self) -> int:
        return self.values.shape[2]

    def subset(self, idx) -> ScenarioSet:
        return replace(self, values=self.values[idx], latent=None)


def normalized_walk(n: int, horizon: int, m: int, seed: int) -> np.ndarray:
    """Random walk x_t = x_{t-1} + eps rescaled by 1/sqrt(t), shape (n, T, m).

    Sample ``i`` draws from its own Philox stream keyed by ``(seed, i)`` so
    results do not depend on how samples are partitioned across workers.
    """
    if n < 1 or horizon < 1 or m < 1:
        raise ConfigurationError("N, T and M must all be >= 1")
    seed = int(seed) & _SEED_MASK
    eps = np.empty((n, horizon, m))
    for i in range(n):
        gen = np.random.Generator(np.random.Philox(key=seed | (i << 64)))
        eps[i] = gen.standard_normal((horizon, m))
    walk = np.cumsum(eps, axis=1)
    return walk / np.sqrt(np.arange(1, horizon + 1))[None, :, None]


def sample_scenarios(
    n: int,
    horizon: int,
    marginals,
    correlation,
    seed: int,
    keep_latent: bool = False,
) -> ScenarioSet:
    marginals = tuple(marginals)
    correlation = np.asarray(correlation, dtype=float)
    m = len(marginals)
    if correlation.shape != (m, m):
        raise ConfigurationError(f"correlation is {correlation.shape}, expected ({m}, {m})")
    low = cholesky(check_correlation(correlation))
    s = normalized_walk(n, horizon, m, seed)
    xc = s @ low.T  # row-vector form of L @ s_t^T
    u = std_normal_cdf(xc)
    # keep u inside the open unit interval where Phi saturates in float64
    u = np.clip(u, 1e-16, 1.0 - 1e-16)
    w = np.empty_like(u)
    for i, marg in enumerate(marginals):
        w[..., i] = marg.ppf(u[..., i])
    return ScenarioSet(w, int(seed), marginals, correlation, latent=xc if keep_latent else None)


# -- wind conversion and disaggregation -------------------------------------

@dataclass(frozen=True)
class WindCurve:
    cut_in: float = 3.0
    rated_speed: float = 12.0
    cut_out: float = 25.0
    rated_power: float = 1.0

    def __post_init__(self) -> None:
        if not 0 < self.cut_in < self.rated_speed < self.cut_out:
            raise ValueError("wind curve needs 0 < cut_in < rated_speed < cut_out")
        if not self.rated_power > 0:
            raise ValueError("rated_power must be > 0")


def wind_speed_to_power(v, curve: WindCurve):
    """Piecewise cubic power curve, zero outside [cut_in, cut_out]."""
    v = np.asarray(v, dtype=float)
    ci, vr = curve.cut_in, curve.rated_speed
    ramp = curve.rated_power * (v**3 - ci**3) / (vr**3 - ci**3)
    out = np.where(v < ci, 0.0, np.where(v < vr, ramp, np.where(v <= curve.cut_out, curve.rated_power, 0.0)))
    return float(out) if out.ndim == 0 else out


def zonal_mw(values: np.ndarray, grid: GridTopology, curve: WindCurve) -> tuple[np.ndarray, np.ndarray]:
    """Split scenario columns into zonal load MW and zonal available wind MW.

    ``values[..., :Z]`` are zone loads, ``values[..., Z:2Z]`` zone wind speeds.
    Each zone's wind fleet follows the curve scaled to its installed capacity.
    """
    z = grid.n_zones
    if values.shape[-1] != 2 * z:
        raise ConfigurationError(f"scenario has {values.shape[-1]} columns, grid needs {2 * z}")
    loads = values[..., :z]
    factor = np.asarray(wind_speed_to_power(values[..., z:], replace(curve, rated_power=1.0)))
    return loads, factor * grid.zonal_wind_capacity


def disaggregate_load(zonal_load, grid: GridTopology) -> np.ndarray:
    """Per-bus load, proportional to base_load inside each zone.

    The zone's largest-load bus absorbs the rounding remainder so each zone
    sums exactly to its input.
    """
    zonal_load = np.asarray(zonal_load, dtype=float)
    weights = _load_weights(grid)
    out = zonal_load[..., grid.bus_zone] * weights
    for k, anchor in enumerate(_load_anchor(grid)):
        members = grid.bus_zone == k
        members[anchor] = False
        out[..., anchor] = zonal_load[..., k] - out[..., members].sum(axis=-1)
    return out


def disaggregate_wind(zonal_wind, grid: GridTopology) -> np.ndarray:
    """Per wind-generator availability: equal split inside each zone."""
    zonal_wind = np.asarray(zonal_wind, dtype=float)
    counts = np.bincount(grid.wind_zone, minlength=grid.n_zones)
    out = zonal_wind[..., grid.wind_zone] / np.maximum(counts, 1)[grid.wind_zone]
    for k in range(grid.n_zones):
        idx = np.flatnonzero(grid.wind_zone == k)
        if idx.size:
            out[..., idx[-1]] = zonal_wind[..., k] - out[..., idx[:-1]].sum(axis=-1)
        elif np.any(zonal_wind[..., k] != 0):
            raise ConfigurationError(f"zone {grid.zones[k]} has wind output but no wind generators")
    return out


def disaggregate(zonal_load, zonal_wind, grid: GridTopology) -> tuple[np.ndarray, np.ndarray]:
    return disaggregate_load(zonal_load, grid), disaggregate_wind(zonal_wind, grid)


def _load_weights(grid: GridTopology) -> np.ndarray:
    totals = np.bincount(grid.bus_zone, weights=grid.base_load, minlength=grid.n_zones)
    if np.any(totals <= 0):
        bad = [grid.zones[k] for k in np.flatnonzero(totals <= 0)]
        raise ConfigurationError(f"zones {bad} have zero total base_load")
    return grid.base_load / totals[grid.bus_zone]


def _load_anchor(grid: GridTopology) -> list[int]:
    anchors = []
    for k in range(grid.n_zones):
        idx = np.flatnonzero(grid.bus_zone == k)
        anchors.append(int(idx[np.argmax(grid.base_load[idx])]))
    return anchors


# -- persistence --------------------------------------------------------------

def save_scenarios(sset: ScenarioSet, path) -> None:
    header = {
        "N": sset.n_samples,
        "T": sset.horizon,
        "M": sset.n_vars,
        "seed": sset.seed,
        "marginals": [marginal_to_dict(m) for m in sset.marginals],
        "C": sset.correlation.tolist(),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(sset.values, dtype="<f8").tobytes())


def load_scenarios(path) -> ScenarioSet:
    raw = Path(path).read_bytes()
    if not raw.startswith(_MAGIC):
        raise ConfigurationError(f"{path}: not a scenario file")
    pos = len(_MAGIC)
    (hlen,) = struct.unpack_from("<Q", raw, pos)
    pos += 8
    header = json.loads(raw[pos : pos + hlen])
    pos += hlen
    shape = (header["N"], header["T"], header["M"])
    values = np.frombuffer(raw, dtype="<f8", offset=pos).astype(float)
    if values.size != math.prod(shape):
        raise ConfigurationError(f"{path}: value block has {values.size} entries, header says {shape}")
    return ScenarioSet(
        values.reshape(shape),
        int(header["seed"]),
        tuple(marginal_from_dict(m) for m in header["marginals"]),
        np.asarray(header["C"], dtype=float),
    )


def scenarios_to_csv(sset: ScenarioSet, path) -> None:
    m = sset.n_vars
    lines = ["sample,t," + ",".join(f"v{i}" for i in range(m))]
    for n in range(sset.n_samples):
        for t in range(sset.horizon):
            lines.append(f"{n},{t}," + ",".join(repr(float(v)) for v in sset.values[n, t]))
    Path(path).write_text("\n".join(lines) + "\n")
