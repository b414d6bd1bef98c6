import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridrisk.distributions import (
    DomainError,
    TruncNormal,
    Weibull,
    marginal_from_dict,
    marginal_to_dict,
    std_normal_cdf,
    std_normal_ppf,
    truncnorm_ppf,
    weibull_ppf,
)
from gridrisk.scenarios import DEFAULT_MARGINALS


def phi(x):
    # independent of the module's scipy-based implementation
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def truncnorm_cdf_ref(x, loc, scale, left, right):
    a, b = (left - loc) / scale, (right - loc) / scale
    z = (x - loc) / scale
    return (phi(z) - phi(a)) / (phi(b) - phi(a))


def bisect(f, target, lo, hi, iters=200):
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if f(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_cdf_examples():
    assert std_normal_cdf(0.0) == 0.5
    assert std_normal_cdf(1.959964) == pytest.approx(0.975, abs=1e-6)
    assert std_normal_cdf(1.959964) == pytest.approx(phi(1.959964), abs=1e-15)


def test_ppf_examples():
    assert std_normal_ppf(0.5) == 0.0
    assert std_normal_ppf(0.975) == pytest.approx(1.959963984540054, abs=1e-12)
    for u in (0.0, 1.0, -0.1, 1.5, float("nan")):
        with pytest.raises(DomainError):
            std_normal_ppf(u)


def test_round_trip_grid():
    u = np.concatenate([np.geomspace(1e-8, 0.5, 4000), 1.0 - np.geomspace(1e-8, 0.5, 4000)])
    err = np.abs(std_normal_cdf(std_normal_ppf(u)) - u)
    assert err.max() <= 1e-10


@settings(max_examples=300)
@given(st.floats(1e-8, 1 - 1e-8))
def test_round_trip_property(u):
    assert abs(std_normal_cdf(std_normal_ppf(u)) - u) <= 1e-10


@settings(max_examples=100)
@given(st.lists(st.floats(1e-10, 1 - 1e-10), min_size=2, max_size=50))
def test_ppfs_monotone(us):
    u = np.sort(np.asarray(us))
    assert np.all(np.diff(std_normal_ppf(u)) >= 0)
    for m in DEFAULT_MARGINALS:
        assert np.all(np.diff(m.ppf(u)) >= 0)


def test_truncnorm_examples():
    zone_i = TruncNormal(85, 10, 55, 115)
    assert truncnorm_ppf(0.5, zone_i) == pytest.approx(85.0, abs=1e-9)
    zone_iii = TruncNormal(95, 15, 40, 150)
    x = truncnorm_ppf(0.5, zone_iii)
    assert 94 < x < 96
    ref = bisect(lambda v: truncnorm_cdf_ref(v, 95, 15, 40, 150), 0.5, 40, 150)
    assert x == pytest.approx(ref, abs=1e-8)
    low = truncnorm_ppf(1e-8, zone_i)
    assert 55.0 <= low < 55.01


@pytest.mark.parametrize("spec", [TruncNormal(85, 10, 55, 115), TruncNormal(0, 1, 3, 6), TruncNormal(0, 1, -8, -3)])
def test_truncnorm_matches_bisection(spec):
    for u in (1e-6, 0.1, 0.37, 0.5, 0.9, 1 - 1e-6):
        ref = bisect(lambda v: truncnorm_cdf_ref(v, spec.location, spec.scale, spec.left, spec.right),
                     u, spec.left, spec.right)
        assert truncnorm_ppf(u, spec) == pytest.approx(ref, abs=1e-7 * spec.scale)


@settings(max_examples=200)
@given(st.floats(1e-12, 1 - 1e-12), st.floats(-50, 50), st.floats(0.1, 20), st.floats(-5, 5), st.floats(0.1, 5))
def test_truncnorm_within_bounds(u, loc, scale, a, width):
    spec = TruncNormal(loc, scale, loc + a * scale, loc + (a + width) * scale)
    x = truncnorm_ppf(u, spec)
    assert spec.left <= x <= spec.right
    assert spec.cdf(x) == pytest.approx(u, abs=1e-6)


def test_weibull_examples():
    spec = Weibull(1.0, 20.0, 11.0)
    assert weibull_ppf(1.0 - math.exp(-1.0), spec) == pytest.approx(12.0, abs=1e-12)
    assert weibull_ppf(1.0 - math.exp(-1.0), Weibull(3.0, 15.0, 8.0)) == pytest.approx(11.0, abs=1e-12)
    assert weibull_ppf(0.5, spec) == pytest.approx(1 + 11 * math.log(2) ** (1 / 20), abs=1e-12)
    assert weibull_ppf(0.5, spec) == pytest.approx(11.80, abs=5e-3)
    assert weibull_ppf(0.5, Weibull(0.0, 1.0, 1.0)) == pytest.approx(math.log(2), abs=1e-15)
    with pytest.raises(DomainError):
        weibull_ppf(1.0, spec)


@settings(max_examples=200)
@given(st.floats(1e-12, 1 - 1e-9), st.floats(0, 10), st.floats(0.5, 30), st.floats(0.5, 20))
def test_weibull_round_trip(u, loc, shape, scale):
    spec = Weibull(loc, shape, scale)
    x = spec.ppf(u)
    assert x >= loc
    assert spec.cdf(x) == pytest.approx(u, rel=1e-9, abs=1e-12)


def test_invalid_specs():
    with pytest.raises(ValueError):
        TruncNormal(0, 0, -1, 1)
    with pytest.raises(ValueError):
        TruncNormal(0, 1, 1, -1)
    with pytest.raises(ValueError):
        Weibull(0, 0, 1)


def test_marginal_dict_round_trip():
    for m in DEFAULT_MARGINALS:
        assert marginal_from_dict(marginal_to_dict(m)) == m
    with pytest.raises(ValueError):
        marginal_from_dict({"kind": "gamma"})
