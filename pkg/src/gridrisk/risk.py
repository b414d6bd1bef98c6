"""Probability of failure and expected monetary consequence over QoI ensembles.

An adverse event for a QoI sample ``A`` and threshold ``E`` is ``A > E``
(strict; ties are not failures). The consequence of one sample integrates a
marginal cost over the exceedance ``A - E``; risk is the mean consequence over
all samples, non-failing ones included.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

GEN, SHED = 0, 1
QOI_INDEX = {"generation": GEN, "shed": SHED}
SYSTEM = "system"
CSV_COLUMNS = ("source", "qoi", "zone", "t", "E", "P", "se", "risk")


class DomainError(ValueError):
    pass


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class ConstantCost:
    """Marginal cost c $/MWh for every MW above the threshold."""

    c: float = 1000.0

    def __post_init__(self) -> None:
        if not self.c >= 0:
            raise ConfigurationError(f"cost c must be >= 0, got {self.c}")

    def integral(self, excess):
        return self.c * excess


@dataclass(frozen=True)
class LinearCost:
    """Marginal cost growing as c·x $/MWh at exceedance x MW."""

    c: float = 10.0

    def __post_init__(self) -> None:
        if not self.c >= 0:
            raise ConfigurationError(f"cost c must be >= 0, got {self.c}")

    def integral(self, excess):
        return 0.5 * self.c * excess * excess


CostModel = Union[ConstantCost, LinearCost]


def _samples(samples) -> np.ndarray:
    a = np.asarray(samples, dtype=float).reshape(-1)
    if a.size == 0:
        raise DomainError("need at least one sample")
    return a


def probability_of_exceedance(samples, threshold: float) -> float:
    a = _samples(samples)
    return float(np.count_nonzero(a > threshold)) / a.size


def consequence(a, threshold: float, cost: CostModel):
    """Monetary consequence of QoI value(s) ``a``; zero when ``a <= threshold``."""
    excess = np.maximum(np.asarray(a, dtype=float) - threshold, 0.0)
    out = cost.integral(excess)
    return float(out) if np.ndim(out) == 0 else out


def risk(samples, threshold: float, cost: CostModel) -> float:
    a = _samples(samples)
    return float(np.mean(consequence(a, threshold, cost)))


def standard_error(p: float, n: int) -> float:
    return math.sqrt(p * (1.0 - p) / n)


@dataclass(frozen=True)
class FailureSpec:
    """Which QoI fails, when, and what it costs.

    ``zone`` is a zone index or ``None`` for the system total; ``t`` is an
    hour index or ``None`` for every hour of the ensemble.
    """

    qoi: str = "shed"
    zone: int | None = None
    t: int | None = None
    threshold: float = 0.0
    cost: CostModel = field(default_factory=ConstantCost)

    def __post_init__(self) -> None:
        if self.qoi not in QOI_INDEX:
            raise ConfigurationError(f"qoi must be one of {sorted(QOI_INDEX)}, got {self.qoi!r}")
        if not self.threshold >= 0:
            raise ConfigurationError(f"threshold must be >= 0, got {self.threshold}")
        if self.zone is not None and self.zone < 0 or self.t is not None and self.t < 0:
            raise ConfigurationError("zone and t must be non-negative")


def default_specs(n_zones: int, voll: float = 1000.0) -> list[FailureSpec]:
    """Any shedding is adverse, priced at VOLL, for every zone and the system."""
    zones: list[int | None] = list(range(n_zones))
    return [FailureSpec("shed", z, None, 0.0, ConstantCost(voll)) for z in zones + [None]]


def spec_to_dict(spec: FailureSpec) -> dict:
    kind = "constant" if isinstance(spec.cost, ConstantCost) else "linear"
    return {
        "qoi": spec.qoi,
        "zone": SYSTEM if spec.zone is None else spec.zone,
        "t": spec.t,
        "threshold": spec.threshold,
        "cost": {"model": kind, "c": spec.cost.c},
    }


def spec_from_dict(d: dict) -> FailureSpec:
    unknown = set(d) - {"qoi", "zone", "t", "threshold", "cost"}
    if unknown:
        raise ConfigurationError(f"unknown failure-spec keys {sorted(unknown)}")
    cost = d.get("cost", {"model": "constant", "c": 1000.0})
    models = {"constant": ConstantCost, "linear": LinearCost}
    if cost.get("model") not in models:
        raise ConfigurationError(f"cost model must be 'constant' or 'linear', got {cost.get('model')!r}")
    zone = d.get("zone", SYSTEM)
    return FailureSpec(
        qoi=d.get("qoi", "shed"),
        zone=None if zone in (None, SYSTEM) else int(zone),
        t=None if d.get("t") is None else int(d["t"]),
        threshold=float(d.get("threshold", 0.0)),
        cost=models[cost["model"]](float(cost.get("c", 1000.0))),
    )


@dataclass(frozen=True)
class RiskEntry:
    qoi: str
    zone: int | None
    t: int
    threshold: float
    probability: float
    se: float
    risk: float
    n: int
    cost: CostModel

    @property
    def key(self) -> tuple:
        return (self.qoi, self.zone, self.t, self.threshold)

    @property
    def zone_label(self) -> str:
        return SYSTEM if self.zone is None else str(self.zone)


@dataclass
class RiskReport:
    source: str
    entries: list[RiskEntry]

    def __len__(self) -> int:
        return len(self.entries)

    def find(self, qoi: str, zone: int | None, t: int) -> list[RiskEntry]:
        return [e for e in self.entries if (e.qoi, e.zone, e.t) == (qoi, zone, t)]


def ensemble_array(qois: Sequence) -> np.ndarray:
    """Stack QoI records into (N, zones, T, 2) with [..., 0] generation, [..., 1] shed.

    Accepts an array already in that layout or a sequence of objects with
    ``generation`` and ``shed`` arrays indexed [t, zone].
    """
    if isinstance(qois, np.ndarray):
        arr = np.asarray(qois, dtype=float)
    else:
        qois = list(qois)
        if not qois:
            raise DomainError("empty ensemble")
        arr = np.stack([np.stack([q.generation.T, q.shed.T], axis=-1) for q in qois])
    if arr.ndim != 4 or arr.shape[-1] != 2:
        raise ConfigurationError(f"ensemble must have shape (N, zones, T, 2), got {arr.shape}")
    if arr.shape[0] == 0:
        raise DomainError("empty ensemble")
    return arr


def assess(ensemble, specs: Iterable[FailureSpec], source: str = "oracle") -> RiskReport:
    """Evaluate every spec on every hour it selects.

    System-level samples are the per-sample sums over zones.
    """
    arr = ensemble_array(ensemble)
    n, n_zones, horizon, _ = arr.shape
    entries = []
    for spec in specs:
        if spec.zone is not None and spec.zone >= n_zones:
            raise ConfigurationError(f"spec selects zone {spec.zone} but the ensemble has {n_zones}")
        if spec.t is not None and spec.t >= horizon:
            raise ConfigurationError(f"spec selects t={spec.t} but the ensemble has {horizon} hours")
        q = arr[..., QOI_INDEX[spec.qoi]]
        series = q.sum(axis=1) if spec.zone is None else q[:, spec.zone, :]
        hours = range(horizon) if spec.t is None else [spec.t]
        for t in hours:
            a = series[:, t]
            p = probability_of_exceedance(a, spec.threshold)
            entries.append(
                RiskEntry(spec.qoi, spec.zone, t, spec.threshold, p, standard_error(p, n),
                          risk(a, spec.threshold, spec.cost), n, spec.cost)
            )
    return RiskReport(source, entries)


@dataclass(frozen=True)
class RiskDelta:
    qoi: str
    zone: int | None
    t: int
    threshold: float
    p_ref: float
    p_other: float
    risk_ref: float
    risk_other: float

    @property
    def dp(self) -> float:
        return abs(self.p_other - self.p_ref)

    @property
    def dr(self) -> float:
        """Relative risk difference, guarded below by a $1 reference."""
        return abs(self.risk_other - self.risk_ref) / max(self.risk_ref, 1.0)


def compare_reports(ref: RiskReport, other: RiskReport) -> list[RiskDelta]:
    """Entry-by-entry deltas of ``other`` against the reference report."""
    if len(ref) != len(other):
        raise ConfigurationError(f"reports have {len(ref)} and {len(other)} entries")
    out = []
    for a, b in zip(ref.entries, other.entries):
        if a.key != b.key:
            raise ConfigurationError(f"spec mismatch: {a.key} vs {b.key}")
        out.append(RiskDelta(a.qoi, a.zone, a.t, a.threshold, a.probability, b.probability, a.risk, b.risk))
    return out


def max_deltas(deltas: Sequence[RiskDelta]) -> tuple[float, float]:
    if not deltas:
        return 0.0, 0.0
    return max(d.dp for d in deltas), max(d.dr for d in deltas)


# -- serialization -------------------------------------------------------------------

def report_to_csv(report: RiskReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for e in report.entries:
        w.writerow([report.source, e.qoi, e.zone_label, e.t, repr(e.threshold),
                    repr(e.probability), repr(e.se), repr(e.risk)])
    return buf.getvalue()


def report_from_csv(text: str) -> RiskReport:
    """Parse a report CSV. Cost models are not part of the CSV and come back as constant."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ConfigurationError(f"risk CSV must have header {','.join(CSV_COLUMNS)}")
    source = rows[1][0] if len(rows) > 1 else ""
    entries = []
    for r in rows[1:]:
        if len(r) != len(CSV_COLUMNS):
            raise ConfigurationError(f"malformed risk CSV row {r}")
        p, se = float(r[5]), float(r[6])
        n = round(p * (1 - p) / se**2) if se > 0 else 0
        entries.append(RiskEntry(r[1], None if r[2] == SYSTEM else int(r[2]), int(r[3]), float(r[4]),
                                 p, se, float(r[7]), n, ConstantCost()))
    return RiskReport(source, entries)


def report_to_json(report: RiskReport) -> str:
    doc = {
        "source": report.source,
        "entries": [
            {
                "qoi": e.qoi,
                "zone": e.zone_label,
                "t": e.t,
                "E": e.threshold,
                "P": e.probability,
                "se": e.se,
                "risk": e.risk,
                "n": e.n,
                "cost": spec_to_dict(FailureSpec(e.qoi, e.zone, e.t, e.threshold, e.cost))["cost"],
            }
            for e in report.entries
        ],
    }
    return json.dumps(doc, indent=1) + "\n"


def report_from_json(text: str) -> RiskReport:
    doc = json.loads(text)
    entries = []
    for d in doc["entries"]:
        spec = spec_from_dict({"qoi": d["qoi"], "zone": d["zone"], "t": d["t"], "threshold": d["E"], "cost": d["cost"]})
        entries.append(RiskEntry(spec.qoi, spec.zone, int(d["t"]), spec.threshold, float(d["P"]),
                                 float(d["se"]), float(d["risk"]), int(d["n"]), spec.cost))
    return RiskReport(doc["source"], entries)


def deltas_to_csv(deltas: Sequence[RiskDelta]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["qoi", "zone", "t", "E", "P_ref", "P_other", "dP", "risk_ref", "risk_other", "dR_rel"])
    for d in deltas:
        w.writerow([d.qoi, SYSTEM if d.zone is None else d.zone, d.t, repr(d.threshold), repr(d.p_ref),
                    repr(d.p_other), repr(d.dp), repr(d.risk_ref), repr(d.risk_other), repr(d.dr)])
    return buf.getvalue()


def write_text(path, text: str) -> None:
    Path(path).write_text(text)
