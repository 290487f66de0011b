"""Uniform linear array geometry and near-field propagation profiles.

Sensor ``n`` sits at ``n * spacing`` along the array axis; sensor 0 is the
phase reference.  A source at polar coordinates ``(r, theta)`` relative to
sensor 0 is at Cartesian ``(r sin(theta), r cos(theta))`` with the array on
the x axis, so its distance to sensor ``n`` is

    d_n = sqrt(r**2 - 2 n d r sin(theta) + n**2 d**2).

Phase delays are expressed in radians (the ``2*pi/lambda`` factor is folded
in), so they are called *phase delays* throughout.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometry

#: Radicand below which the source is treated as lying on the array segment.
RADICAND_FLOOR = 1e-12


class Gain(str, enum.Enum):
    """Received-amplitude model across the aperture."""

    EQUAL = "equal"
    VARIABLE = "variable"


class DelayModel(str, enum.Enum):
    """Which phase-delay expression to use."""

    EXACT = "exact"
    APPROX = "approx"


@dataclass(frozen=True)
class ArrayConfig:
    """Uniform linear array: ``n_sensors`` elements, ``spacing`` and ``wavelength`` in meters."""

    n_sensors: int
    spacing: float
    wavelength: float

    def __post_init__(self):
        if int(self.n_sensors) != self.n_sensors or self.n_sensors < 3:
            raise ValueError(f"n_sensors must be an integer >= 3, got {self.n_sensors}")
        if not self.spacing > 0:
            raise ValueError(f"spacing must be > 0, got {self.spacing}")
        if not self.wavelength > 0:
            raise ValueError(f"wavelength must be > 0, got {self.wavelength}")
        object.__setattr__(self, "n_sensors", int(self.n_sensors))

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.n_sensors, dtype=float)

    @property
    def aperture(self) -> float:
        return self.spacing * (self.n_sensors - 1)

    def with_sensors(self, n_sensors: int) -> "ArrayConfig":
        return ArrayConfig(n_sensors, self.spacing, self.wavelength)


@dataclass(frozen=True)
class SourceLocation:
    """Emitter position: ``range`` in meters to sensor 0, ``angle`` in radians."""

    range: float
    angle: float

    def __post_init__(self):
        if not self.range > 0:
            raise ValueError(f"range must be > 0, got {self.range}")
        if not abs(self.angle) < math.pi / 2:
            raise ValueError(f"angle must lie strictly inside (-pi/2, pi/2), got {self.angle}")
        object.__setattr__(self, "range", float(self.range))
        object.__setattr__(self, "angle", float(self.angle))

    @classmethod
    def from_degrees(cls, range_m: float, angle_deg: float) -> "SourceLocation":
        return cls(range_m, math.radians(angle_deg))

    @property
    def cartesian(self) -> tuple[float, float]:
        """(x, y) with x along the array axis."""
        return self.range * math.sin(self.angle), self.range * math.cos(self.angle)


@dataclass(frozen=True)
class DelayProfile:
    """Per-sensor phase delays (rad) and their partials w.r.t. angle and range."""

    values: np.ndarray
    d_theta: np.ndarray
    d_r: np.ndarray


@dataclass(frozen=True)
class GainProfile:
    """Per-sensor amplitudes ``1/d_n`` (1/m) and their partials."""

    values: np.ndarray
    d_theta: np.ndarray
    d_r: np.ndarray


def fresnel_bounds(cfg: ArrayConfig) -> tuple[float, float]:
    """Classical Fresnel (radiating near-field) range interval ``(lower, upper)`` in meters.

    Both ends are returned even when ``lower >= upper``; callers decide what
    an empty interval means for them.
    """
    d, lam, m = cfg.spacing, cfg.wavelength, cfg.n_sensors - 1
    lower = 0.62 * math.sqrt(d**3 * m**3 / lam)
    upper = 2.0 * d**2 * m**2 / lam
    return lower, upper


def _check_radicand(rho: np.ndarray) -> None:
    if np.any(rho <= RADICAND_FLOOR):
        raise DegenerateGeometry(
            f"source is collinear with the array segment (min radicand {np.min(rho):.3e})"
        )


def _distances(cfg: ArrayConfig, r, theta):
    """Sensor distances and their partials, broadcast over ``r``/``theta``.

    Returns ``(dn, excess, ddn_theta, ddn_r)`` with a trailing sensor axis;
    ``excess = dn - r`` is computed without cancellation.
    """
    r = np.asarray(r, dtype=float)[..., None]
    theta = np.asarray(theta, dtype=float)[..., None]
    nd = cfg.indices * cfg.spacing
    s, c = np.sin(theta), np.cos(theta)
    u = nd / r
    rho = 1.0 + u * u - 2.0 * u * s
    _check_radicand(rho)
    dn = r * np.sqrt(rho)
    excess = (nd * nd - 2.0 * nd * r * s) / (dn + r)
    ddn_theta = -nd * r * c / dn
    ddn_r = (r - nd * s) / dn
    return dn, excess, ddn_theta, ddn_r


def exact_delay_arrays(cfg: ArrayConfig, r, theta):
    """Vectorized :func:`exact_delay`: returns ``(values, d_theta, d_r)`` arrays."""
    dn, excess, ddn_theta, ddn_r = _distances(cfg, r, theta)
    k = 2.0 * math.pi / cfg.wavelength
    # d(dn - r)/dr = (r - nd sin - dn)/dn = -(nd sin + excess)/dn
    nd_s = cfg.indices * cfg.spacing * np.sin(np.asarray(theta, dtype=float)[..., None])
    d_r = -k * (nd_s + excess) / dn
    return k * excess, k * ddn_theta, d_r


def approx_delay_arrays(cfg: ArrayConfig, r, theta):
    """Vectorized :func:`approx_delay`."""
    r = np.asarray(r, dtype=float)[..., None]
    theta = np.asarray(theta, dtype=float)[..., None]
    nd = cfg.indices * cfg.spacing
    lam = cfg.wavelength
    s, c = np.sin(theta), np.cos(theta)
    values = -2.0 * math.pi * nd / lam * s + math.pi * nd**2 / lam * c**2 / r
    d_theta = -2.0 * math.pi * nd / lam * c - 2.0 * math.pi * nd**2 / lam * s * c / r
    d_r = -math.pi * nd**2 / lam * c**2 / r**2
    return values, d_theta, np.broadcast_to(d_r, values.shape).copy()


def gain_arrays(cfg: ArrayConfig, r, theta):
    """Vectorized :func:`gain_profile`."""
    dn, _, ddn_theta, ddn_r = _distances(cfg, r, theta)
    g = 1.0 / dn
    return g, -g * g * ddn_theta, -g * g * ddn_r


def exact_delay(cfg: ArrayConfig, loc: SourceLocation) -> DelayProfile:
    """Phase delays from the exact spherical-wavefront path difference."""
    values, d_theta, d_r = exact_delay_arrays(cfg, loc.range, loc.angle)
    values[0] = d_theta[0] = d_r[0] = 0.0
    return DelayProfile(values, d_theta, d_r)


def approx_delay(cfg: ArrayConfig, loc: SourceLocation) -> DelayProfile:
    """Second-order (Fresnel) approximation of the phase delays."""
    return DelayProfile(*approx_delay_arrays(cfg, loc.range, loc.angle))


def gain_profile(cfg: ArrayConfig, loc: SourceLocation) -> GainProfile:
    """Spherical spreading amplitudes ``1/d_n`` and their analytic partials."""
    values, d_theta, d_r = gain_arrays(cfg, loc.range, loc.angle)
    values[0] = 1.0 / loc.range
    return GainProfile(values, d_theta, d_r)


def unit_gain(cfg: ArrayConfig) -> GainProfile:
    """Equal-gain profile: all ones, zero derivatives."""
    n = cfg.n_sensors
    return GainProfile(np.ones(n), np.zeros(n), np.zeros(n))


def delay_profile(cfg: ArrayConfig, loc: SourceLocation, model=DelayModel.EXACT) -> DelayProfile:
    if DelayModel(model) is DelayModel.EXACT:
        return exact_delay(cfg, loc)
    return approx_delay(cfg, loc)


def steering_vector(cfg: ArrayConfig, loc: SourceLocation, gain=Gain.EQUAL,
                    model=DelayModel.EXACT) -> np.ndarray:
    """``a_n = exp(j tau_n)`` for equal gain, ``b_n = gamma_n exp(j tau_n)`` for variable gain."""
    return steering_jacobian(cfg, loc, gain, model)[0]


def steering_jacobian(cfg: ArrayConfig, loc: SourceLocation, gain=Gain.EQUAL,
                      model=DelayModel.EXACT):
    """Steering vector and its partials.

    Returns
    -------
    b : (N,) complex
    db : (N, 2) complex
        Columns are ``db/dtheta`` and ``db/dr``.
    """
    tau = delay_profile(cfg, loc, model)
    g = gain_profile(cfg, loc) if Gain(gain) is Gain.VARIABLE else unit_gain(cfg)
    phase = np.exp(1j * tau.values)
    b = g.values * phase
    db = np.empty((cfg.n_sensors, 2), dtype=complex)
    db[:, 0] = (g.d_theta + 1j * g.values * tau.d_theta) * phase
    db[:, 1] = (g.d_r + 1j * g.values * tau.d_r) * phase
    return b, db


def steering_grid(cfg: ArrayConfig, r, theta, gain=Gain.EQUAL, model=DelayModel.EXACT):
    """Steering vectors for broadcast arrays of ranges/angles (trailing sensor axis)."""
    if DelayModel(model) is DelayModel.EXACT:
        tau = exact_delay_arrays(cfg, r, theta)[0]
    else:
        tau = approx_delay_arrays(cfg, r, theta)[0]
    v = np.exp(1j * tau)
    if Gain(gain) is Gain.VARIABLE:
        v = v * gain_arrays(cfg, r, theta)[0]
    return v
