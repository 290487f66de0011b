import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_scenario
from nearfield_crb.errors import NotAchievable
from nearfield_crb.fim import ScenarioParams
from nearfield_crb.geometry import Gain, SourceLocation, fresnel_bounds
from nearfield_crb.nflr import (
    Criterion, RegionSpec, corner_estimate, feasible, localization_kernel, min_observation_time,
    min_sensors, min_snr, min_snr_region, min_time_region, nflr_map, position_error_std,
    relative_error_std,
)


@pytest.fixture
def vg30():
    """T = 90, 30 dB deterministic SNR, variable gain."""
    return ScenarioParams.conditional(90, 1e-3, 1.0, gain=Gain.VARIABLE)


@pytest.fixture
def sector(cfg15):
    lower, upper = fresnel_bounds(cfg15)
    return RegionSpec.from_degrees(lower, upper, -60.0, 60.0, 15, 15)


def test_region_validation():
    with pytest.raises(ValueError):
        RegionSpec(5.0, 4.0, -0.5, 0.5)
    with pytest.raises(ValueError):
        RegionSpec(0.0, 4.0, -0.5, 0.5)
    with pytest.raises(ValueError):
        RegionSpec(1.0, 4.0, -2.0, 0.5)
    with pytest.raises(ValueError):
        RegionSpec(1.0, 4.0, -0.5, 0.5, grid_nr=0)


def test_relative_is_position_over_range(cfg15, loc45, vg30):
    assert relative_error_std(cfg15, loc45, vg30) == pytest.approx(
        position_error_std(cfg15, loc45, vg30) / loc45.range, rel=1e-14)


def test_relative_matches_kernel(cfg15, loc45, vg30):
    g = localization_kernel(cfg15, loc45.range, loc45.angle, Gain.VARIABLE)
    expected = math.sqrt(g / (2 * vg30.snapshots * vg30.d_snr))
    assert relative_error_std(cfg15, loc45, vg30) == pytest.approx(expected, rel=1e-12)


def test_position_std_scales_as_inverse_sqrt_t(cfg15, loc45, vg30):
    a = position_error_std(cfg15, loc45, vg30)
    b = position_error_std(cfg15, loc45, vg30.with_snapshots(360))
    assert b == pytest.approx(a / 2, rel=1e-12)


def test_relative_std_decreases_with_t(cfg15, loc45, vg30):
    vals = [relative_error_std(cfg15, loc45, vg30.with_snapshots(t)) for t in (10, 30, 90, 270)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_position_std_diverges_toward_endfire(cfg15, vg30):
    vals = [position_error_std(cfg15, SourceLocation.from_degrees(10.0, a), vg30) for a in (60, 80, 89, 89.9)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_min_time_fixed_points(cfg15, loc45, vg30):
    eps = 0.02
    t = min_observation_time(cfg15, loc45, vg30, eps)
    assert min_observation_time(cfg15, loc45, vg30, 2 * eps) == pytest.approx(t / 4, rel=1e-14)
    g = localization_kernel(cfg15, loc45.range, loc45.angle, Gain.VARIABLE)
    assert t * 2 * eps**2 * vg30.d_snr == pytest.approx(g, rel=1e-14)
    assert relative_error_std(cfg15, loc45, vg30.with_snapshots(t)) == pytest.approx(eps, rel=1e-12)


def test_min_time_unconditional_fixed_point(cfg15, loc45):
    p = ScenarioParams.unconditional(90, 1e-2, 1.0, gain=Gain.VARIABLE)
    t = min_observation_time(cfg15, loc45, p, 0.05)
    assert relative_error_std(cfg15, loc45, p.with_snapshots(t)) == pytest.approx(0.05, rel=1e-12)


def test_min_snr_fixed_points(cfg15, loc45, vg30):
    eps = 0.02
    d = min_snr(cfg15, loc45, vg30, eps)
    assert min_snr(cfg15, loc45, vg30, 2 * eps) == pytest.approx(d / 4, rel=1e-14)
    assert relative_error_std(cfg15, loc45, vg30.with_d_snr(d)) == pytest.approx(eps, rel=1e-12)


def test_min_snr_requires_conditional(cfg15, loc45):
    with pytest.raises(ValueError):
        min_snr(cfg15, loc45, ScenarioParams.unconditional(90, 1e-3, 1.0), 0.1)


@pytest.mark.parametrize("eps", [0.0, -0.1])
def test_epsilon_must_be_positive(cfg15, loc45, vg30, eps):
    with pytest.raises(ValueError):
        min_observation_time(cfg15, loc45, vg30, eps)


def test_region_max_dominates_every_cell(cfg15, sector, vg30):
    req = min_time_region(cfg15, sector, vg30, 0.05)
    R, TH = sector.mesh()
    for idx in np.ndindex(R.shape):
        assert req.value >= min_observation_time(cfg15, SourceLocation(R[idx], TH[idx]), vg30, 0.05)
    snr_req = min_snr_region(cfg15, sector, vg30, 0.05)
    assert snr_req.value >= min_snr(cfg15, SourceLocation(snr_req.r, snr_req.theta), vg30, 0.05) * (1 - 1e-12)


def test_single_cell_region_is_pointwise(cfg15, loc45, vg30):
    req = min_time_region(cfg15, RegionSpec.single(loc45), vg30, 0.05)
    assert req.value == pytest.approx(min_observation_time(cfg15, loc45, vg30, 0.05), rel=1e-12)


def test_corner_heuristic_on_far_sector(cfg15, vg30):
    # beyond the Fresnel region the kernel grows with range and |theta|, so the
    # corner sits at the grid maximum
    region = RegionSpec.from_degrees(60.0, 100.0, 10.0, 50.0, 41, 41)
    req = min_time_region(cfg15, region, vg30, 0.05)
    corner = corner_estimate(cfg15, region, vg30, 0.05)
    assert corner == pytest.approx(req.value, rel=1e-12)


def test_map_huge_threshold_is_everything_above_reactive(cfg15, vg30):
    lower, upper = fresnel_bounds(cfg15)
    region = RegionSpec.from_degrees(0.5 * lower, upper, -80.0, 80.0, 20, 20)
    m = nflr_map(cfg15, region, vg30, Criterion.absolute(1e30))
    R, _ = region.mesh()
    assert np.array_equal(m.inside, R > lower)
    assert np.all(m.quality[R <= lower] == "reactive")


def test_map_inside_matches_threshold(cfg15, vg30):
    lower, upper = fresnel_bounds(cfg15)
    region = RegionSpec.from_degrees(lower * 1.01, 2 * upper, -85.0, 85.0, 30, 30)
    m = nflr_map(cfg15, region, vg30, Criterion.absolute(0.5))
    assert np.all(m.std >= 0)
    assert np.array_equal(m.inside, m.std <= 0.5)


def test_map_nested_in_threshold_time_and_snr(cfg15, vg30):
    lower, upper = fresnel_bounds(cfg15)
    region = RegionSpec.from_degrees(lower, 2 * upper, -89.0, 89.0, 25, 25)
    maps = [nflr_map(cfg15, region, vg30, Criterion.absolute(s)).inside for s in (0.5, 1.0, 2.0)]
    assert np.all(maps[0] <= maps[1]) and np.all(maps[1] <= maps[2])
    crit = Criterion.absolute(1.0)
    by_t = [nflr_map(cfg15, region, vg30.with_snapshots(t), crit).inside for t in (30, 90, 270)]
    assert np.all(by_t[0] <= by_t[1]) and np.all(by_t[1] <= by_t[2])
    by_snr = [nflr_map(cfg15, region, vg30.with_d_snr(d), crit).inside for d in (1e2, 1e3, 1e4)]
    assert np.all(by_snr[0] <= by_snr[1]) and np.all(by_snr[1] <= by_snr[2])


def test_variable_gain_region_contains_normalized_equal_gain_laterally(cfg15, vg30):
    lower, upper = fresnel_bounds(cfg15)
    region = RegionSpec.from_degrees(lower, 2 * upper, 60.5, 89.0, 30, 30)
    crit = Criterion.absolute(0.5)
    vg = nflr_map(cfg15, region, vg30, crit)
    eg = nflr_map(cfg15, region, vg30.with_gain(Gain.EQUAL), crit)
    R, _ = region.mesh()
    # received-power normalization divides ||alpha||^2 by r^2, i.e. multiplies the std by r
    eg_inside = (eg.std * R <= crit.threshold) & (R > lower)
    assert np.all(eg_inside <= vg.inside)
    assert vg.inside.sum() > eg_inside.sum()


def test_map_serialization(cfg15, vg30):
    region = RegionSpec.from_degrees(6.0, 20.0, -30.0, 30.0, 3, 4)
    m = nflr_map(cfg15, region, vg30, Criterion.relative(0.01))
    rows = list(csv.reader(io.StringIO(m.to_csv())))
    assert rows[0] == ["r_m", "theta_deg", "std", "inside", "quality_flag"]
    assert len(rows) == 1 + 12
    first = rows[1]
    assert float(first[2]) == m.std[0, 0]
    assert "\r" not in m.to_csv()
    doc = json.loads(m.to_json())
    assert len(doc["cells"]) == 12
    assert doc["criterion"] == {"kind": "relative", "threshold": 0.01}


def test_min_sensors_feasible_at_15_returns_at_most_15(cfg15, vg30):
    lower, _ = fresnel_bounds(cfg15)
    region = RegionSpec.from_degrees(lower, 15.0, -45.0, 45.0, 12, 12)
    assert feasible(cfg15, region, vg30, 0.1)
    n = min_sensors(cfg15, region, vg30, 0.1)
    assert 3 <= n <= 15


def test_min_sensors_monotone_in_epsilon(cfg15, vg30):
    region = RegionSpec.from_degrees(8.0, 30.0, -45.0, 45.0, 10, 10)
    counts = [min_sensors(cfg15, region, vg30, eps) for eps in (0.1, 0.03, 0.01)]
    assert counts[0] <= counts[1] <= counts[2]


def test_min_sensors_not_achievable(cfg15, vg30):
    region = RegionSpec.from_degrees(8.0, 30.0, -45.0, 45.0, 5, 5)
    with pytest.raises(NotAchievable):
        min_sensors(cfg15, region, vg30, 1e-6, n_max=3)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), gain=st.sampled_from(list(Gain)))
def test_relative_std_at_min_time_is_epsilon(seed, gain):
    rng = np.random.default_rng(seed)
    cfg, loc, snr, _ = random_scenario(rng)
    p = ScenarioParams.conditional(1, 1 / snr, 1.0, gain=gain)
    eps = relative_error_std(cfg, loc, p) * float(rng.uniform(0.01, 0.9))
    t = min_observation_time(cfg, loc, p, eps)
    assert relative_error_std(cfg, loc, p.with_snapshots(t)) == pytest.approx(eps, rel=1e-10)
