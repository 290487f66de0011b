"""Performance-defined near-field localization regions and system design.

A location belongs to the localization region when the bound-implied
position error (absolute, in meters, or relative to range) is below a
target.  The same quantities give minimum observation time, minimum SNR and
minimum sensor count for a point or a region.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .closed_form import closed_form_crb, closed_form_grid, energy_terms_grid
from .errors import NearSingular, NotAchievable
from .fim import CrbResult, Model, ScenarioParams
from .geometry import ArrayConfig, Gain, SourceLocation, fresnel_bounds


@dataclass(frozen=True)
class RegionSpec:
    """Rectangular (r, theta) sector sampled on a uniform grid; angles in radians."""

    r_min: float
    r_max: float
    theta_min: float
    theta_max: float
    grid_nr: int = 100
    grid_ntheta: int = 100

    def __post_init__(self):
        if self.grid_nr < 1 or self.grid_ntheta < 1:
            raise ValueError("grid sizes must be positive")
        if not 0 < self.r_min <= self.r_max or (self.r_min == self.r_max) != (self.grid_nr == 1):
            raise ValueError("need 0 < r_min < r_max (equal only for a one-point range grid)")
        if (not -math.pi / 2 < self.theta_min <= self.theta_max < math.pi / 2
                or (self.theta_min == self.theta_max) != (self.grid_ntheta == 1)):
            raise ValueError("need -pi/2 < theta_min < theta_max < pi/2 "
                             "(equal only for a one-point angle grid)")

    @classmethod
    def from_degrees(cls, r_min, r_max, theta_min_deg, theta_max_deg, grid_nr=100, grid_ntheta=100):
        return cls(r_min, r_max, math.radians(theta_min_deg), math.radians(theta_max_deg),
                   grid_nr, grid_ntheta)

    @classmethod
    def single(cls, loc: SourceLocation) -> "RegionSpec":
        """One-cell region at ``loc``."""
        return cls(loc.range, loc.range, loc.angle, loc.angle, 1, 1)

    @property
    def ranges(self) -> np.ndarray:
        return np.linspace(self.r_min, self.r_max, self.grid_nr)

    @property
    def angles(self) -> np.ndarray:
        return np.linspace(self.theta_min, self.theta_max, self.grid_ntheta)

    def mesh(self):
        """``(R, TH)`` arrays of shape ``(grid_nr, grid_ntheta)``."""
        return np.meshgrid(self.ranges, self.angles, indexing="ij")


@dataclass(frozen=True)
class Criterion:
    """``kind="absolute"``: std (m) <= threshold; ``kind="relative"``: std/r <= threshold."""

    kind: str
    threshold: float

    def __post_init__(self):
        if self.kind not in ("absolute", "relative"):
            raise ValueError(f"unknown criterion kind {self.kind!r}")
        if not self.threshold > 0:
            raise ValueError("threshold must be > 0")

    @classmethod
    def absolute(cls, std_max: float) -> "Criterion":
        return cls("absolute", std_max)

    @classmethod
    def relative(cls, epsilon: float) -> "Criterion":
        return cls("relative", epsilon)


@dataclass
class NflrMap:
    """Grid evaluation of a localization-region criterion.

    ``std`` holds meters for an absolute criterion and a dimensionless ratio
    for a relative one.  ``quality`` is ``"ok"``, ``"reactive"`` (below the
    lower Fresnel bound, always outside) or ``"near_singular"``.
    """

    ranges: np.ndarray
    angles: np.ndarray
    std: np.ndarray
    inside: np.ndarray
    quality: np.ndarray
    criterion: Criterion
    params: ScenarioParams
    cfg: ArrayConfig
    metadata: dict = field(default_factory=dict)

    def rows(self):
        for i, r in enumerate(self.ranges):
            for j, th in enumerate(self.angles):
                yield (float(r), math.degrees(float(th)), float(self.std[i, j]),
                       bool(self.inside[i, j]), str(self.quality[i, j]))

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO() if fh is None else fh
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r_m", "theta_deg", "std", "inside", "quality_flag"])
        for r, th, s, inside, q in self.rows():
            w.writerow([repr(r), repr(th), repr(s), int(inside), q])
        return buf.getvalue() if fh is None else ""

    def to_dict(self) -> dict:
        return {
            "criterion": {"kind": self.criterion.kind, "threshold": self.criterion.threshold},
            "array": {"n_sensors": self.cfg.n_sensors, "spacing_m": self.cfg.spacing,
                      "wavelength_m": self.cfg.wavelength},
            "scenario": {"model": self.params.model.value, "gain": self.params.gain.value,
                         "snapshots": self.params.snapshots, "noise_var": self.params.noise_var,
                         "d_snr": self.params.d_snr if self.params.model is Model.CONDITIONAL else None,
                         "signal_var": self.params.signal_var},
            "metadata": self.metadata,
            "cells": [dict(r_m=r, theta_deg=th, std=_json_float(s), inside=inside, quality_flag=q)
                      for r, th, s, inside, q in self.rows()],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _json_float(x: float):
    return x if math.isfinite(x) else None


def position_error_std(cfg: ArrayConfig, loc: SourceLocation, params: ScenarioParams,
                       crb: Optional[CrbResult] = None) -> float:
    """Bound-implied position error ``sqrt(r^2 CRB(theta) + CRB(r))`` in meters.

    The flavor (model, gain) comes from ``params``; pass ``crb`` to reuse an
    already computed bound.
    """
    c = closed_form_crb(cfg, loc, params) if crb is None else crb
    return math.sqrt(loc.range**2 * c.crb_theta + c.crb_r)


def relative_error_std(cfg: ArrayConfig, loc: SourceLocation, params: ScenarioParams,
                       crb: Optional[CrbResult] = None) -> float:
    """Relative error ``sqrt(CRB(theta) + CRB(r)/r^2)``."""
    c = closed_form_crb(cfg, loc, params) if crb is None else crb
    return math.sqrt(c.crb_theta + c.crb_r / loc.range**2)


def localization_kernel(cfg: ArrayConfig, r, theta, gain=Gain.VARIABLE):
    """``G_N(r, theta) = (E_r + E_theta/r^2) / det`` (broadcasts over arrays).

    Conditional model: ``relative_error_std**2 = G_N / (2 T D_SNR)``.  The
    range energy pairs with the angle bound, hence ``E_r`` carries no ``1/r^2``.
    """
    et, er, ert = energy_terms_grid(cfg, r, theta, gain)
    det = et * er - ert * ert
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(det > 0, (er + et / np.asarray(r, dtype=float) ** 2) / det, np.inf)


def _relative_sq_grid(cfg, r, theta, params):
    ct, cr, _ = closed_form_grid(cfg, r, theta, params)
    return ct + cr / np.asarray(r, dtype=float) ** 2


def nflr_map(cfg: ArrayConfig, region: RegionSpec, params: ScenarioParams,
             criterion: Criterion) -> NflrMap:
    """Classify every grid cell of ``region`` as inside/outside the localization region."""
    R, TH = region.mesh()
    ct, cr, _ = closed_form_grid(cfg, R, TH, params)
    if criterion.kind == "absolute":
        std = np.sqrt(R**2 * ct + cr)
    else:
        std = np.sqrt(ct + cr / R**2)
    lower, upper = fresnel_bounds(cfg)
    quality = np.full(std.shape, "ok", dtype=object)
    quality[~np.isfinite(std)] = "near_singular"
    reactive = R <= lower
    quality[reactive] = "reactive"
    inside = np.isfinite(std) & (std <= criterion.threshold) & ~reactive
    return NflrMap(region.ranges, region.angles, std, inside, quality, criterion, params, cfg,
                   metadata={"fresnel_lower_m": lower, "fresnel_upper_m": upper})


def _check_epsilon(epsilon):
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")


def min_observation_time(cfg: ArrayConfig, loc: SourceLocation, params: ScenarioParams,
                         epsilon: float) -> float:
    """Smallest (real) snapshot count with relative error ``<= epsilon``.

    Every bound flavor scales as ``1/T`` at fixed per-snapshot SNR, so this
    is ``T * rel^2 / epsilon^2``; for the conditional model it equals
    ``G_N / (2 epsilon^2 D_SNR)``.
    """
    _check_epsilon(epsilon)
    if params.model is Model.CONDITIONAL:
        g = float(localization_kernel(cfg, loc.range, loc.angle, params.gain))
        if not math.isfinite(g):
            raise NearSingular("localization kernel diverges")
        return g / (2.0 * epsilon**2 * params.d_snr)
    rel = relative_error_std(cfg, loc, params)
    return params.snapshots * rel**2 / epsilon**2


def min_snr(cfg: ArrayConfig, loc: SourceLocation, params: ScenarioParams, epsilon: float) -> float:
    """Smallest deterministic SNR (range-scaled for variable gain) with relative error ``<= epsilon``."""
    _check_epsilon(epsilon)
    if params.model is not Model.CONDITIONAL:
        raise ValueError("minimum deterministic SNR is defined for the conditional model")
    g = float(localization_kernel(cfg, loc.range, loc.angle, params.gain))
    if not math.isfinite(g):
        raise NearSingular("localization kernel diverges")
    return g / (2.0 * epsilon**2 * params.snapshots)


@dataclass(frozen=True)
class RegionRequirement:
    """Worst-case requirement over a region and the cell that sets it."""

    value: float
    r: float
    theta: float


def _region_max(values: np.ndarray, region: RegionSpec) -> RegionRequirement:
    R, TH = region.mesh()
    idx = np.unravel_index(int(np.argmax(values)), values.shape)
    return RegionRequirement(float(values[idx]), float(R[idx]), float(TH[idx]))


def min_time_region(cfg: ArrayConfig, region: RegionSpec, params: ScenarioParams,
                    epsilon: float) -> RegionRequirement:
    """Largest pointwise minimum observation time over the region grid."""
    _check_epsilon(epsilon)
    R, TH = region.mesh()
    if params.model is Model.CONDITIONAL:
        vals = localization_kernel(cfg, R, TH, params.gain) / (2.0 * epsilon**2 * params.d_snr)
    else:
        vals = params.snapshots * _relative_sq_grid(cfg, R, TH, params) / epsilon**2
    return _region_max(vals, region)


def min_snr_region(cfg: ArrayConfig, region: RegionSpec, params: ScenarioParams,
                   epsilon: float) -> RegionRequirement:
    """Largest pointwise minimum deterministic SNR over the region grid."""
    _check_epsilon(epsilon)
    if params.model is not Model.CONDITIONAL:
        raise ValueError("minimum deterministic SNR is defined for the conditional model")
    R, TH = region.mesh()
    vals = localization_kernel(cfg, R, TH, params.gain) / (2.0 * epsilon**2 * params.snapshots)
    return _region_max(vals, region)


def corner_estimate(cfg: ArrayConfig, region: RegionSpec, params: ScenarioParams,
                    epsilon: float) -> float:
    """Corner shortcut for the region time requirement: kernel at ``(r_max, theta_max)``.

    Diagnostic only; the grid maximum is the answer.
    """
    g = float(localization_kernel(cfg, region.r_max, region.theta_max, params.gain))
    return g / (2.0 * epsilon**2 * params.d_snr)


def feasible(cfg: ArrayConfig, region: RegionSpec, params: ScenarioParams, epsilon: float) -> bool:
    """True when every grid cell meets the relative-error target."""
    R, TH = region.mesh()
    rel_sq = _relative_sq_grid(cfg, R, TH, params)
    return bool(np.all(np.isfinite(rel_sq) & (rel_sq <= epsilon**2)))


def min_sensors(cfg_template: ArrayConfig, region: RegionSpec, params: ScenarioParams,
                epsilon: float, n_max: int = 256, return_all: bool = False):
    """Smallest sensor count in ``[3, n_max]`` meeting ``epsilon`` on the whole region.

    Scans linearly from 3 because monotonicity in the sensor count is not
    guaranteed.  With ``return_all`` the full list of feasible counts is
    returned instead.
    """
    _check_epsilon(epsilon)
    found = []
    for n in range(3, int(n_max) + 1):
        if feasible(cfg_template.with_sensors(n), region, params, epsilon):
            if not return_all:
                return n
            found.append(n)
    if not found:
        raise NotAchievable(f"no sensor count in [3, {n_max}] reaches epsilon={epsilon}")
    return found
