"""Closed-form near-field bounds.

All exact forms share one shape: with energy terms ``E_theta, E_r, E_rt``
(centered/projected norms of the steering derivatives) and
``det = E_theta E_r - E_rt**2``,

    CRB(theta) = E_r / det,  CRB(r) = E_theta / det,  CRB(r, theta) = -E_rt / det

times a scalar prefactor that depends on the signal model.  The coupling
carries a minus sign: it is the off-diagonal of the inverse of
``[[E_theta, E_rt], [E_rt, E_r]]``, which the numeric oracle confirms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import NearSingular
from .fim import CrbResult, Model, ScenarioParams, SourceTag
from .geometry import (
    ArrayConfig, DelayProfile, Gain, GainProfile, SourceLocation,
    exact_delay, exact_delay_arrays, gain_arrays, gain_profile, unit_gain,
)

#: Absolute floor on the energy-term determinant.
DET_FLOOR = 1e-30
#: |cos(theta)| below which results are flagged ``"lateral"``.
LATERAL_COS = 1e-3


@dataclass(frozen=True)
class EnergyTerms:
    """Centered quadratic forms of the steering derivatives.

    Used for both gain flavors; for equal gain they reduce to the centered
    delay-derivative norms (units rad**2, (rad/m)**2, rad**2/m).
    """

    e_theta: float
    e_r: float
    e_r_theta: float

    @property
    def det(self) -> float:
        return self.e_theta * self.e_r - self.e_r_theta**2


@dataclass(frozen=True)
class PolynomialConstants:
    p2: float
    p3: float
    f1: float
    f2: float


@dataclass(frozen=True)
class FirstOrderComparison:
    """Leading-order EG/VG bounds, EG evaluated under received-power normalization."""

    eg_theta: float
    vg_theta: float
    eg_r: float
    vg_r: float


def eg_energy_terms(delay: DelayProfile) -> EnergyTerms:
    """Equal-gain energy terms: delay-derivative norms minus their mean part."""
    tt, tr = delay.d_theta, delay.d_r
    n = tt.size
    st, sr = tt.sum(), tr.sum()
    return EnergyTerms(
        float(tt @ tt - st * st / n),
        float(tr @ tr - sr * sr / n),
        float(tt @ tr - st * sr / n),
    )


def vg_energy_terms(delay: DelayProfile, gain: GainProfile) -> EnergyTerms:
    """Variable-gain energy terms (delay and amplitude information combined)."""
    g, gt, gr = gain.values, gain.d_theta, gain.d_r
    tt, tr = delay.d_theta, delay.d_r
    g2 = g * g
    norm = g @ g
    qt, qr = g2 @ tt, g2 @ tr
    pt, pr = g @ gt, g @ gr
    return EnergyTerms(
        float(gt @ gt + g2 @ (tt * tt) - (qt * qt + pt * pt) / norm),
        float(gr @ gr + g2 @ (tr * tr) - (qr * qr + pr * pr) / norm),
        float(gt @ gr + g2 @ (tt * tr) - (qt * qr + pt * pr) / norm),
    )


def energy_terms_grid(cfg: ArrayConfig, r, theta, gain=Gain.VARIABLE):
    """Vectorized energy terms over broadcast ``r``/``theta`` arrays.

    Returns ``(e_theta, e_r, e_r_theta)`` arrays.
    """
    _, tt, tr = exact_delay_arrays(cfg, r, theta)
    if Gain(gain) is Gain.EQUAL:
        n = cfg.n_sensors
        st, sr = tt.sum(-1), tr.sum(-1)
        return ((tt * tt).sum(-1) - st * st / n,
                (tr * tr).sum(-1) - sr * sr / n,
                (tt * tr).sum(-1) - st * sr / n)
    g, gt, gr = gain_arrays(cfg, r, theta)
    g2 = g * g
    norm = g2.sum(-1)
    qt, qr = (g2 * tt).sum(-1), (g2 * tr).sum(-1)
    pt, pr = (g * gt).sum(-1), (g * gr).sum(-1)
    return ((gt * gt + g2 * tt * tt).sum(-1) - (qt * qt + pt * pt) / norm,
            (gr * gr + g2 * tr * tr).sum(-1) - (qr * qr + pr * pr) / norm,
            (gt * gr + g2 * tt * tr).sum(-1) - (qt * qr + pt * pr) / norm)


def energy_terms(cfg: ArrayConfig, loc: SourceLocation, gain=Gain.EQUAL) -> EnergyTerms:
    delay = exact_delay(cfg, loc)
    if Gain(gain) is Gain.EQUAL:
        return eg_energy_terms(delay)
    return vg_energy_terms(delay, gain_profile(cfg, loc))


def _quality(loc: SourceLocation) -> str:
    return "lateral" if abs(math.cos(loc.angle)) < LATERAL_COS else "ok"


def _from_energy(E: EnergyTerms, prefactor: float, tag: SourceTag, quality: str) -> CrbResult:
    det = E.det
    if not det >= DET_FLOOR:
        raise NearSingular(f"energy-term determinant {det:.3e} below {DET_FLOOR:.0e}")
    k = prefactor / det
    return CrbResult(k * E.e_r, k * E.e_theta, -k * E.e_r_theta, tag, quality)


def normalized_conditional(cfg: ArrayConfig, loc: SourceLocation, gain=Gain.EQUAL) -> CrbResult:
    """``D_SNR * CRB^c`` with ``T = 1``: depends on geometry only."""
    tag = SourceTag.LEMMA1 if Gain(gain) is Gain.EQUAL else SourceTag.LEMMA5
    return _from_energy(energy_terms(cfg, loc, gain), 0.5, tag, _quality(loc))


def _require(params: ScenarioParams, model: Model):
    if params.model is not model:
        raise ValueError(f"expected {model.value} params, got {params.model.value}")


def crb_conditional_eg(cfg: ArrayConfig, loc: SourceLocation, params: ScenarioParams) -> CrbResult:
    """Exact conditional bound, equal gain."""
    _require(params, Model.CONDITIONAL)
    E = eg_energy_terms(exact_delay(cfg, loc))
    return _from_energy(E, 1.0 / (2.0 * params.snapshots * params.d_snr), SourceTag.LEMMA1, _quality(loc))


def crb_conditional_vg(cfg: ArrayConfig, loc: SourceLocation, params: ScenarioParams,
                       gain: Optional[GainProfile] = None) -> CrbResult:
    """Exact conditional bound, variable gain.

    ``gain`` overrides the spherical-spreading profile (pass
    :func:`~nearfield_crb.geometry.unit_gain` to recover the equal-gain case).
    ``params.d_snr`` plays the role of the range-scaled deterministic SNR.
    """
    _require(params, Model.CONDITIONAL)
    g = gain_profile(cfg, loc) if gain is None else gain
    E = vg_energy_terms(exact_delay(cfg, loc), g)
    return _from_energy(E, 1.0 / (2.0 * params.snapshots * params.d_snr), SourceTag.LEMMA5, _quality(loc))


def unconditional_factor(snr: float, gain_energy: float) -> float:
    """``(1 + SNR ||gamma||^2) / (SNR^2 ||gamma||^2)``."""
    return (1.0 + snr * gain_energy) / (snr * snr * gain_energy)


def crb_unconditional(cfg: ArrayConfig, loc: SourceLocation, params: ScenarioParams,
                      gain_flavor=None) -> CrbResult:
    """Exact unconditional bound: a scalar factor times the normalized conditional bound."""
    _require(params, Model.UNCONDITIONAL)
    gain = Gain(gain_flavor or params.gain)
    if not params.signal_var > 0:
        raise NearSingular("signal variance is zero: no location information")
    if gain is Gain.EQUAL:
        energy, tag = float(cfg.n_sensors), SourceTag.LEMMA4
    else:
        g = gain_profile(cfg, loc).values
        energy, tag = float(g @ g), SourceTag.LEMMA6
    norm = normalized_conditional(cfg, loc, gain)
    return norm.scaled(unconditional_factor(params.snr, energy) / params.snapshots, tag)


def polynomial_constants(cfg: ArrayConfig, theta: float) -> PolynomialConstants:
    """``p2, p3`` and the angular gain-information terms ``f1, f2`` (1/m**2)."""
    n, d = cfg.n_sensors, cfg.spacing
    p2 = (8.0 * n - 11.0) * (2.0 * n - 1.0)
    p3 = n * (n - 1.0) * (n + 1.0) * (n - 2.0) * (n + 2.0)
    s, c = math.sin(theta), math.cos(theta)
    base = 15.0 * s * s / (math.pi**2 * d * d * c**4)
    return PolynomialConstants(p2, p3, base / p2, base / ((n - 2.0) * (n + 2.0)))


def _taylor_prefactors(cfg, loc, params):
    lam, d = cfg.wavelength, cfg.spacing
    pc = polynomial_constants(cfg, loc.angle)
    c = math.cos(loc.angle)
    td = params.snapshots * params.d_snr
    k_theta = 3.0 * lam**2 / (2.0 * td * d**2 * math.pi**2 * c**2 * pc.p3)
    k_r = 6.0 * loc.range**2 * lam**2 / (td * d**4 * math.pi**2 * c**4 * pc.p3)
    return pc, k_theta, k_r


def crb_taylor_eg(cfg: ArrayConfig, loc: SourceLocation, params: ScenarioParams) -> CrbResult:
    """Second-order expansion in ``d/r`` of the exact equal-gain conditional bound.

    No coupling term is available for this form (``crb_r_theta is None``).
    """
    _require(params, Model.CONDITIONAL)
    n, d, r = cfg.n_sensors, cfg.spacing, loc.range
    s = math.sin(loc.angle)
    x = d / r
    pc, k_theta, k_r = _taylor_prefactors(cfg, loc, params)
    bracket_theta = (
        pc.p2
        - 6.0 * (n - 1) * (6 * n**2 - 15 * n + 11) * s * x
        + (2 * n - 1) * (384 * n**3 - 1353 * n**2 + 1379 * n - 368) / 70.0 * x * x
        + (186 * n**4 - 1590 * n**3 + 5351 * n**2 - 6795 * n + 2890) / 14.0 * s * s * x * x
    )
    bracket_r = (
        15.0 * r * r
        - 60.0 * (n - 1) * s * d * r
        + (s * s * (1061 * n**2 - 2625 * n + 2911) + 225 * n**2 - 315 * n - 135) / 14.0 * d * d
    )
    return CrbResult(k_theta * bracket_theta, k_r * bracket_r, None, SourceTag.TAYLOR_LEMMA2, _quality(loc))


def crb_approx_literature(cfg: ArrayConfig, loc: SourceLocation, params: ScenarioParams) -> CrbResult:
    """Conditional bound of the second-order (Fresnel-approximated) delay model.

    The angle bound does not depend on range.  No coupling term.
    """
    _require(params, Model.CONDITIONAL)
    n, d, r = cfg.n_sensors, cfg.spacing, loc.range
    s = math.sin(loc.angle)
    pc, k_theta, k_r = _taylor_prefactors(cfg, loc, params)
    crb_r = k_r * (15.0 * r * r + 30.0 * d * r * (n - 1) * s + d * d * pc.p2 * s * s)
    return CrbResult(k_theta * pc.p2, crb_r, None, SourceTag.APPROX_LEMMA3, _quality(loc))


def received_power_normalized(params: ScenarioParams, loc: SourceLocation) -> ScenarioParams:
    """Equal-gain params whose received power at sensor 0 matches the variable-gain model.

    Divides ``||alpha||**2`` by ``r**2`` (amplitudes by ``r``).  Every EG/VG
    comparison goes through this one function.
    """
    amp = np.asarray(params.amplitudes, dtype=float) / loc.range
    if amp.ndim == 0:
        amp = float(amp)
    return replace(params, gain=Gain.EQUAL, amplitudes=amp)


def crb_firstorder_comparison(cfg: ArrayConfig, loc: SourceLocation, params: ScenarioParams) -> FirstOrderComparison:
    """Leading Taylor terms of the EG and VG conditional bounds, side by side.

    ``params`` describes the variable-gain scenario; the EG terms use
    :func:`received_power_normalized` params.
    """
    _require(params, Model.CONDITIONAL)
    lam, d, r = cfg.wavelength, cfg.spacing, loc.range
    c = math.cos(loc.angle)
    pc = polynomial_constants(cfg, loc.angle)
    td_vg = params.snapshots * params.d_snr
    td_eg = params.snapshots * received_power_normalized(params, loc).d_snr
    head_theta = 3.0 * lam**2 * pc.p2 / (2.0 * math.pi**2 * d**2 * c**2 * pc.p3)
    head_r = 90.0 * lam**2 * r**4 / (math.pi**2 * d**4 * c**4 * pc.p3)
    l2 = lam * lam
    return FirstOrderComparison(
        eg_theta=head_theta / td_eg,
        vg_theta=head_theta * r**2 * (1.0 + l2 * pc.f1) / (td_vg * (1.0 + l2 * pc.f2)),
        eg_r=head_r / td_eg,
        vg_r=head_r * r**2 / (td_vg * (1.0 + l2 * pc.f2)),
    )


def closed_form_crb(cfg: ArrayConfig, loc: SourceLocation, params: ScenarioParams) -> CrbResult:
    """Exact closed-form bound for the params' model and gain flavor."""
    if params.model is Model.UNCONDITIONAL:
        return crb_unconditional(cfg, loc, params)
    if params.gain is Gain.EQUAL:
        return crb_conditional_eg(cfg, loc, params)
    return crb_conditional_vg(cfg, loc, params)


def closed_form_grid(cfg: ArrayConfig, r, theta, params: ScenarioParams):
    """Vectorized :func:`closed_form_crb`: ``(crb_theta, crb_r, crb_r_theta)`` arrays.

    Cells whose determinant is below :data:`DET_FLOOR` come back as ``inf``
    (coupling ``nan``) instead of raising.
    """
    et, er, ert = energy_terms_grid(cfg, r, theta, params.gain)
    det = et * er - ert * ert
    if params.model is Model.CONDITIONAL:
        pref = np.full(det.shape, 1.0 / (2.0 * params.snapshots * params.d_snr))
    else:
        if params.gain is Gain.EQUAL:
            energy = np.full(det.shape, float(cfg.n_sensors))
        else:
            g = gain_arrays(cfg, r, theta)[0]
            energy = (g * g).sum(-1)
        pref = 0.5 * unconditional_factor(params.snr, energy) / params.snapshots
    ok = det >= DET_FLOOR
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(ok, pref / np.where(ok, det, 1.0), np.inf)
        return k * er, k * et, np.where(ok, -k * ert, np.nan)


__all__ = [
    "EnergyTerms", "PolynomialConstants", "FirstOrderComparison",
    "eg_energy_terms", "vg_energy_terms", "energy_terms", "energy_terms_grid",
    "normalized_conditional", "crb_conditional_eg", "crb_conditional_vg",
    "crb_unconditional", "unconditional_factor", "polynomial_constants",
    "crb_taylor_eg", "crb_approx_literature", "received_power_normalized",
    "crb_firstorder_comparison", "closed_form_crb", "closed_form_grid", "unit_gain",
]
