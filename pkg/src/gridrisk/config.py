"""Run configuration: one YAML (or JSON) file plus command-line overrides."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .distributions import marginal_from_dict, marginal_to_dict
from .grid import GridTopology, bundled_grid_path, load_grid
from .oracle import OracleConfig
from .risk import FailureSpec, default_specs, spec_from_dict, spec_to_dict
from .scenarios import DEFAULT_CORRELATION, DEFAULT_MARGINALS, WindCurve
from .surrogate import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    grid: str | None = None  # None: the bundled 118-bus fixture
    samples: int = 1000
    horizon: int = 12
    seed: int = 0
    marginals: list = field(default_factory=lambda: list(DEFAULT_MARGINALS))
    correlation: np.ndarray = field(default_factory=lambda: DEFAULT_CORRELATION.copy())
    wind_curve: WindCurve = field(default_factory=WindCurve)
    voll: float = 1000.0
    reserve_margin: float = 0.1
    train: TrainConfig = field(default_factory=TrainConfig)
    specs: list[FailureSpec] | None = None  # None: shedding, E = 0, priced at VOLL
    eps_denom: float = 1.0
    out: str = "out"
    threads: int = 1

    def __post_init__(self) -> None:
        if self.samples < 1:
            raise ConfigError("samples must be >= 1")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        self.correlation = np.asarray(self.correlation, dtype=float)
        m = len(self.marginals)
        if self.correlation.shape != (m, m):
            raise ConfigError(f"correlation must be {m}x{m} to match the marginals")
        if self.grid is not None and not Path(self.grid).is_file():
            raise ConfigError(f"grid file {self.grid} does not exist")

    @property
    def grid_path(self) -> Path:
        return Path(self.grid) if self.grid is not None else bundled_grid_path()

    def load_grid(self) -> GridTopology:
        return load_grid(self.grid_path)

    def oracle(self) -> OracleConfig:
        return OracleConfig(voll=self.voll, reserve_margin=self.reserve_margin, wind_curve=self.wind_curve)

    def failure_specs(self, n_zones: int) -> list[FailureSpec]:
        return list(self.specs) if self.specs is not None else default_specs(n_zones, self.voll)

    def to_dict(self) -> dict:
        return {
            "grid": self.grid,
            "samples": self.samples,
            "horizon": self.horizon,
            "seed": self.seed,
            "marginals": [marginal_to_dict(m) for m in self.marginals],
            "correlation": self.correlation.tolist(),
            "wind_curve": asdict(self.wind_curve),
            "voll": self.voll,
            "reserve_margin": self.reserve_margin,
            "train": {**asdict(self.train), "split": list(self.train.split)},
            "specs": None if self.specs is None else [spec_to_dict(s) for s in self.specs],
            "eps_denom": self.eps_denom,
            "out": self.out,
            "threads": self.threads,
        }


def config_from_dict(d: dict | None) -> RunConfig:
    d = dict(d or {})
    known = {f.name for f in fields(RunConfig)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    try:
        if "marginals" in d:
            d["marginals"] = [marginal_from_dict(m) for m in d["marginals"]]
        if "wind_curve" in d:
            d["wind_curve"] = WindCurve(**d["wind_curve"])
        if "train" in d:
            d["train"] = TrainConfig(**d["train"])
        if d.get("specs") is not None:
            d["specs"] = [spec_from_dict(s) for s in d["specs"]]
        return RunConfig(**d)
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"bad config: {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path=None, **overrides) -> RunConfig:
    """Read ``path`` (YAML or JSON) and apply non-None keyword overrides."""
    d: dict = {}
    if path is not None:
        try:
            d = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError(f"config {path} must be a mapping")
    d.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_dict(d)
