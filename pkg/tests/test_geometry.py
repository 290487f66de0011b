import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nearfield_crb.errors import DegenerateGeometry
from nearfield_crb.geometry import (
    ArrayConfig, DelayModel, Gain, SourceLocation, approx_delay, exact_delay, fresnel_bounds,
    gain_profile, steering_jacobian, steering_vector,
)

# Reference values for sensor 14 of the 15-element array at (10 m, 45 deg),
# evaluated at 40 digits with mpmath.
TAU_14 = -26.1173269991901839015797
GAMMA_14 = 0.1262363405114961566652387


def test_array_config_validation():
    with pytest.raises(ValueError):
        ArrayConfig(2, 0.25, 0.5)
    with pytest.raises(ValueError):
        ArrayConfig(5, 0.0, 0.5)
    with pytest.raises(ValueError):
        ArrayConfig(5, 0.25, -1.0)


@pytest.mark.parametrize("theta", [math.pi / 2, -math.pi / 2, 2.0])
def test_location_rejects_endpoints(theta):
    with pytest.raises(ValueError):
        SourceLocation(10.0, theta)


def test_location_rejects_nonpositive_range():
    with pytest.raises(ValueError):
        SourceLocation(0.0, 0.1)


def test_fresnel_bounds_reference(cfg15):
    lower, upper = fresnel_bounds(cfg15)
    assert upper == 49.0
    assert lower == pytest.approx(5.741280345, rel=1e-9)


def test_fresnel_upper_scales_with_spacing_squared(cfg15):
    _, u1 = fresnel_bounds(cfg15)
    _, u2 = fresnel_bounds(ArrayConfig(15, 0.5, 0.5))
    assert u2 == 4.0 * u1


def test_reference_sensor_is_zero(cfg15, loc45):
    for prof in (exact_delay(cfg15, loc45), approx_delay(cfg15, loc45)):
        assert prof.values[0] == 0.0
        assert prof.d_theta[0] == 0.0
        assert prof.d_r[0] == 0.0
    g = gain_profile(cfg15, loc45)
    assert g.values[0] == 1.0 / loc45.range


def test_sensor_14_reference_values(cfg15, loc45):
    assert exact_delay(cfg15, loc45).values[14] == pytest.approx(TAU_14, rel=1e-13)
    assert gain_profile(cfg15, loc45).values[14] == pytest.approx(GAMMA_14, rel=1e-13)


def test_gain_times_distance_is_one(cfg15, loc45):
    g = gain_profile(cfg15, loc45).values
    x, y = loc45.cartesian
    dist = np.hypot(x - cfg15.indices * cfg15.spacing, y)
    np.testing.assert_allclose(g * dist, 1.0, rtol=4 * np.finfo(float).eps)


def test_collinear_limit():
    cfg = ArrayConfig(5, 0.25, 0.5)
    loc = SourceLocation(10.0, math.pi / 2 - 1e-12)
    nd = cfg.indices * cfg.spacing
    np.testing.assert_allclose(exact_delay(cfg, loc).values, -2 * math.pi * nd / cfg.wavelength,
                               rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(gain_profile(cfg, loc).values, 1.0 / (loc.range - nd), rtol=1e-9)


def test_source_on_array_segment_is_degenerate():
    cfg = ArrayConfig(5, 0.25, 0.5)
    # sensor 2 sits at 0.5 m; a source there, at the endfire limit, coincides with it
    loc = SourceLocation(0.5, math.pi / 2 - 1e-15)
    with pytest.raises(DegenerateGeometry):
        exact_delay(cfg, loc)
    with pytest.raises(DegenerateGeometry):
        gain_profile(cfg, loc)


def test_approx_broadside_is_quadratic(cfg15):
    loc = SourceLocation(7.0, 0.0)
    n = cfg15.indices
    expected = math.pi * cfg15.spacing**2 * n**2 / (cfg15.wavelength * loc.range)
    np.testing.assert_allclose(approx_delay(cfg15, loc).values, expected, rtol=1e-14)


def test_approx_error_shrinks_with_range(cfg15):
    def err(r):
        loc = SourceLocation.from_degrees(r, 45.0)
        return np.max(np.abs(approx_delay(cfg15, loc).values - exact_delay(cfg15, loc).values))

    assert err(20.0) < err(10.0)


def test_approx_error_decays_at_least_quadratically(cfg15):
    errs = []
    for r in (20.0, 40.0, 80.0, 160.0):
        loc = SourceLocation.from_degrees(r, 30.0)
        errs.append(np.max(np.abs(approx_delay(cfg15, loc).values - exact_delay(cfg15, loc).values)))
    for a, b in zip(errs, errs[1:]):
        assert b <= a / 4.0


def test_far_field_limit_is_monotone(cfg15):
    theta = math.radians(30.0)
    planar = -2 * math.pi * cfg15.indices * cfg15.spacing * math.sin(theta) / cfg15.wavelength
    gaps = [np.max(np.abs(exact_delay(cfg15, SourceLocation(r, theta)).values - planar))
            for r in (1e2, 1e3, 1e4)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-2


def _central(fun, x, h):
    return (fun(x + h) - fun(x - h)) / (2 * h)


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(3, 30),
    d_over_lam=st.floats(0.25, 0.75),
    frac=st.floats(0.0, 1.0),
    theta_deg=st.floats(-80.0, 80.0),
)
def test_analytic_derivatives_match_finite_differences(n, d_over_lam, frac, theta_deg):
    cfg = ArrayConfig(n, d_over_lam * 0.5, 0.5)
    lower, upper = fresnel_bounds(cfg)
    r = lower + frac * (upper - lower)
    theta = math.radians(theta_deg)
    h = 1e-6
    builders = [
        lambda rr, tt: exact_delay(cfg, SourceLocation(rr, tt)),
        lambda rr, tt: approx_delay(cfg, SourceLocation(rr, tt)),
        lambda rr, tt: gain_profile(cfg, SourceLocation(rr, tt)),
    ]
    for build in builders:
        prof = build(r, theta)
        fd_t = _central(lambda t: build(r, t).values, theta, h)
        fd_r = _central(lambda x: build(x, theta).values, r, h * r)
        for analytic, fd in ((prof.d_theta, fd_t), (prof.d_r, fd_r)):
            scale = np.max(np.abs(analytic))
            # componentwise; the floor only guards the identically-zero reference entry
            err = np.abs(analytic - fd) / np.maximum(np.abs(analytic), 1e-12 * scale)
            assert np.all(err <= 1e-5)


def test_steering_vector_flavors(cfg15, loc45):
    a = steering_vector(cfg15, loc45, Gain.EQUAL)
    b = steering_vector(cfg15, loc45, Gain.VARIABLE)
    assert a[0] == 1 + 0j
    assert b[0] == pytest.approx(1.0 / loc45.range)
    np.testing.assert_allclose(np.abs(a), 1.0, rtol=1e-15)
    np.testing.assert_allclose(np.abs(b), gain_profile(cfg15, loc45).values, rtol=1e-15)


@pytest.mark.parametrize("gain", list(Gain))
@pytest.mark.parametrize("model", list(DelayModel))
def test_steering_jacobian_matches_finite_differences(cfg15, gain, model):
    loc = SourceLocation.from_degrees(12.0, -25.0)
    _, db = steering_jacobian(cfg15, loc, gain, model)
    h = 1e-6

    def sv(r, t):
        return steering_vector(cfg15, SourceLocation(r, t), gain, model)

    fd_t = (sv(loc.range, loc.angle + h) - sv(loc.range, loc.angle - h)) / (2 * h)
    fd_r = (sv(loc.range + h, loc.angle) - sv(loc.range - h, loc.angle)) / (2 * h)
    np.testing.assert_allclose(db[:, 0], fd_t, rtol=1e-5, atol=1e-8 * np.max(np.abs(fd_t)))
    np.testing.assert_allclose(db[:, 1], fd_r, rtol=1e-5, atol=1e-8 * np.max(np.abs(fd_r)))
