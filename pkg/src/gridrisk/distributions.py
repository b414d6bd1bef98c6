"""Standard normal, truncated normal and Weibull CDF / inverse CDF."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)

# Acklam's rational approximation to the normal quantile (rel. error < 1.2e-9)
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


class DomainError(ValueError):
    """Probability argument outside (0, 1)."""


def _check_open_unit(u: np.ndarray) -> None:
    if np.any(~((u > 0.0) & (u < 1.0))):
        raise DomainError("probability must lie strictly inside (0, 1)")


def _scalar_or_array(x, like):
    return float(x) if np.ndim(like) == 0 else x


def std_normal_cdf(x):
    x = np.asarray(x, dtype=float)
    return _scalar_or_array(0.5 * erfc(-x / _SQRT2), x)


def std_normal_sf(x):
    x = np.asarray(x, dtype=float)
    return _scalar_or_array(0.5 * erfc(x / _SQRT2), x)


def _ppf_rational(u: np.ndarray) -> np.ndarray:
    x = np.empty_like(u)
    lo = u < _P_LOW
    hi = u > 1.0 - _P_LOW
    mid = ~(lo | hi)

    q = np.sqrt(-2.0 * np.log(u[lo]))
    x[lo] = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
        (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
    )
    q = np.sqrt(-2.0 * np.log1p(-u[hi]))
    x[hi] = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
        (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
    )
    q = u[mid] - 0.5
    r = q * q
    x[mid] = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / (
        ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    )
    return x


def std_normal_ppf(u):
    """Inverse standard normal CDF: rational approximation plus one Newton step."""
    arr = np.asarray(u, dtype=float)
    _check_open_unit(arr)
    flat = arr.reshape(-1)
    x = _ppf_rational(flat)
    # Newton on the smaller tail to keep the residual well conditioned
    upper = flat > 0.5
    resid = np.where(upper, std_normal_sf(x) - (1.0 - flat), std_normal_cdf(x) - flat)
    resid = np.where(upper, -resid, resid)
    dens = np.exp(-0.5 * x * x) / _SQRT2PI
    x = x - resid / dens
    return _scalar_or_array(x.reshape(arr.shape), arr)


@dataclass(frozen=True)
class TruncNormal:
    location: float
    scale: float
    left: float
    right: float

    def __post_init__(self) -> None:
        if not self.scale > 0:
            raise ValueError("truncated normal scale must be > 0")
        if not self.left < self.right:
            raise ValueError("truncated normal needs left < right")

    def cdf(self, x):
        return truncnorm_cdf(x, self)

    def ppf(self, u):
        return truncnorm_ppf(u, self)


@dataclass(frozen=True)
class Weibull:
    location: float
    shape: float
    scale: float

    def __post_init__(self) -> None:
        if not self.scale > 0:
            raise ValueError("Weibull scale must be > 0")
        if not self.shape > 0:
            raise ValueError("Weibull shape must be > 0")

    def cdf(self, x):
        z = np.maximum(np.asarray(x, dtype=float) - self.location, 0.0) / self.scale
        return _scalar_or_array(-np.expm1(-(z**self.shape)), x)

    def ppf(self, u):
        return weibull_ppf(u, self)


MarginalSpec = TruncNormal | Weibull


def truncnorm_cdf(x, spec: TruncNormal):
    a = (spec.left - spec.location) / spec.scale
    b = (spec.right - spec.location) / spec.scale
    z = np.clip((np.asarray(x, dtype=float) - spec.location) / spec.scale, a, b)
    phi_a, phi_b = std_normal_cdf(a), std_normal_cdf(b)
    return _scalar_or_array((std_normal_cdf(z) - phi_a) / (phi_b - phi_a), x)


def truncnorm_ppf(u, spec: TruncNormal):
    arr = np.asarray(u, dtype=float)
    _check_open_unit(arr)
    a = (spec.left - spec.location) / spec.scale
    b = (spec.right - spec.location) / spec.scale
    if a >= 0.0:
        # both bounds in the upper tail: work with survival functions
        sa, sb = std_normal_sf(a), std_normal_sf(b)
        z = -std_normal_ppf(np.clip(sa - arr * (sa - sb), 1e-300, 1.0 - 1e-16))
    else:
        pa, pb = std_normal_cdf(a), std_normal_cdf(b)
        z = std_normal_ppf(np.clip(pa + arr * (pb - pa), 1e-300, 1.0 - 1e-16))
    out = np.clip(spec.location + spec.scale * np.asarray(z), spec.left, spec.right)
    return _scalar_or_array(out, arr)


def weibull_ppf(u, spec: Weibull):
    arr = np.asarray(u, dtype=float)
    _check_open_unit(arr)
    out = spec.location + spec.scale * (-np.log1p(-arr)) ** (1.0 / spec.shape)
    return _scalar_or_array(out, arr)


def marginal_from_dict(d: dict) -> MarginalSpec:
    kind = d.get("kind")
    fields = {k: float(v) for k, v in d.items() if k != "kind"}
    if kind == "truncnorm":
        return TruncNormal(**fields)
    if kind == "weibull":
        return Weibull(**fields)
    raise ValueError(f"unknown marginal kind {kind!r}")


def marginal_to_dict(m: MarginalSpec) -> dict:
    if isinstance(m, TruncNormal):
        return {"kind": "truncnorm", "location": m.location, "scale": m.scale, "left": m.left, "right": m.right}
    return {"kind": "weibull", "location": m.location, "shape": m.shape, "scale": m.scale}
