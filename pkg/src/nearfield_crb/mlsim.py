"""Snapshot simulation, maximum-likelihood localization and Monte-Carlo efficiency runs."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .closed_form import closed_form_crb
from .errors import DegenerateGeometry, EmptySearchRegion, NearFieldError
from .fim import Model, ScenarioParams
from .geometry import (
    ArrayConfig, DelayModel, Gain, SourceLocation, fresnel_bounds, steering_grid,
    steering_jacobian, steering_vector,
)
from .nflr import RegionSpec


@dataclass(frozen=True)
class SnapshotSet:
    """``data[t, n]`` is sensor ``n`` at snapshot ``t``."""

    data: np.ndarray
    cfg: ArrayConfig
    loc: SourceLocation
    params: ScenarioParams
    seed: int

    @property
    def covariance_sum(self) -> np.ndarray:
        """``sum_t x(t) x(t)^H``."""
        return self.data.T @ self.data.conj()


@dataclass(frozen=True)
class MlEstimate:
    theta_hat: float
    r_hat: float
    converged: bool
    iterations: int
    objective_value: float


def generate_snapshots(cfg: ArrayConfig, loc: SourceLocation, params: ScenarioParams,
                       seed: int, delay_model=DelayModel.EXACT) -> SnapshotSet:
    """Draw ``T`` array snapshots for the params' model and gain flavor.

    Conditional: ``s(t) = alpha_t exp(j psi_t)``.  Unconditional: ``s(t)``
    circular complex Gaussian with variance ``signal_var``.  Noise is white
    circular complex Gaussian with variance ``noise_var`` per sensor.
    """
    rng = np.random.default_rng(seed)
    T, n = params.n_snapshots, cfg.n_sensors
    v = steering_vector(cfg, loc, params.gain, delay_model)
    if params.model is Model.CONDITIONAL:
        s = params.amplitude_vector * np.exp(1j * params.phase_vector)
    else:
        s = math.sqrt(params.signal_var / 2.0) * (rng.standard_normal(T) + 1j * rng.standard_normal(T))
    noise = math.sqrt(params.noise_var / 2.0) * (
        rng.standard_normal((T, n)) + 1j * rng.standard_normal((T, n)))
    return SnapshotSet(np.outer(s, v) + noise, cfg, loc, params, seed)


def _as_cov(data) -> np.ndarray:
    if isinstance(data, SnapshotSet):
        return data.covariance_sum
    data = np.asarray(data)
    return data.T @ data.conj()


def ml_objective(cfg: ArrayConfig, data, loc: SourceLocation, gain=Gain.EQUAL,
                 delay_model=DelayModel.EXACT) -> float:
    """Concentrated likelihood criterion ``sum_t |v^H x(t)|^2 / ||v||^2``.

    ``data`` is a :class:`SnapshotSet`, a ``T x N`` array, or (via
    :func:`ml_objective_cov`) a precomputed covariance sum.
    """
    return ml_objective_cov(cfg, _as_cov(data), loc, gain, delay_model)


def ml_objective_cov(cfg, cov, loc, gain=Gain.EQUAL, delay_model=DelayModel.EXACT) -> float:
    v = steering_vector(cfg, loc, gain, delay_model)
    return float(np.real(v.conj() @ cov @ v) / np.real(v.conj() @ v))


def ml_gradient_cov(cfg, cov, loc, gain=Gain.EQUAL, delay_model=DelayModel.EXACT):
    """Analytic gradient of :func:`ml_objective_cov` w.r.t. ``(theta, r)``; returns ``(J, grad)``."""
    v, dv = steering_jacobian(cfg, loc, gain, delay_model)
    cv = cov @ v
    num = float(np.real(v.conj() @ cv))
    den = float(np.real(v.conj() @ v))
    j = num / den
    dnum = 2.0 * np.real(dv.conj().T @ cv)
    dden = 2.0 * np.real(dv.conj().T @ v)
    return j, (dnum - j * dden) / den


def ml_gradient(cfg, data, loc, gain=Gain.EQUAL, delay_model=DelayModel.EXACT) -> np.ndarray:
    return ml_gradient_cov(cfg, _as_cov(data), loc, gain, delay_model)[1]


def _grid_objective(cfg, cov, R, TH, gain, delay_model):
    V = steering_grid(cfg, R, TH, gain, delay_model)
    num = np.real(np.einsum("...i,ij,...j->...", V.conj(), cov, V))
    den = np.real(np.einsum("...i,...i->...", V.conj(), V))
    return num / den


def ml_estimate(cfg: ArrayConfig, data, search: RegionSpec, gain=Gain.EQUAL,
                delay_model=DelayModel.EXACT, max_iter: int = 100, grad_tol: float = 1e-9,
                ) -> MlEstimate:
    """Grid-initialized damped Newton-Raphson maximization of the concentrated likelihood.

    The grid is ``search.grid_nr x search.grid_ntheta``.  Convergence: the
    scaled gradient ``max(|dJ/dtheta|, r |dJ/dr|)`` falls below
    ``grad_tol * J``.  Steps that do not increase ``J`` are halved (up to
    40 times); the Hessian comes from central differences of the analytic
    gradient and is forced negative definite.
    """
    cov = _as_cov(data)
    R, TH = search.mesh()
    try:
        obj = _grid_objective(cfg, cov, R, TH, gain, delay_model)
    except DegenerateGeometry:
        obj = np.full(R.shape, -np.inf)
        for idx in np.ndindex(R.shape):
            try:
                obj[idx] = ml_objective_cov(cfg, cov, SourceLocation(R[idx], TH[idx]), gain, delay_model)
            except (DegenerateGeometry, ValueError):
                pass
    if not np.any(np.isfinite(obj)):
        raise EmptySearchRegion("no valid candidate in the search region")
    idx = np.unravel_index(int(np.nanargmax(obj)), obj.shape)
    x = np.array([TH[idx], R[idx]], dtype=float)

    def evaluate(p):
        try:
            loc = SourceLocation(p[1], p[0])
            return ml_gradient_cov(cfg, cov, loc, gain, delay_model)
        except (DegenerateGeometry, ValueError):
            return None

    j, g = evaluate(x)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        scale = np.array([1.0, x[1]])
        if np.max(np.abs(g * scale)) <= grad_tol * abs(j):
            converged = True
            it -= 1
            break
        H = _numeric_hessian(evaluate, x, g)
        w, U = np.linalg.eigh(H)
        w = -np.maximum(np.abs(w), 1e-12 * np.max(np.abs(w)) + 1e-300)
        step = -U @ ((U.T @ g) / w)
        t = 1.0
        accepted = False
        for _ in range(40):
            trial = evaluate(x + t * step)
            if trial is not None and trial[0] > j:
                x = x + t * step
                j, g = trial
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # no ascent possible at machine precision
            converged = bool(np.max(np.abs(g * np.array([1.0, x[1]]))) <= 1e-6 * abs(j))
            break
    else:
        scale = np.array([1.0, x[1]])
        converged = bool(np.max(np.abs(g * scale)) <= grad_tol * abs(j))
    return MlEstimate(float(x[0]), float(x[1]), converged, it, float(j))


def _numeric_hessian(evaluate, x, g):
    H = np.empty((2, 2))
    for k in range(2):
        h = 1e-6 * (1.0 if k == 0 else max(x[1], 1e-3))
        e = np.zeros(2)
        e[k] = h
        plus, minus = evaluate(x + e), evaluate(x - e)
        if plus is None or minus is None:
            H[:, k] = -1.0
            continue
        H[:, k] = (plus[1] - minus[1]) / (2.0 * h)
    return 0.5 * (H + H.T)


def default_search(cfg: ArrayConfig, loc: SourceLocation, grid=(64, 64)) -> RegionSpec:
    """Search sector around the truth: range in ``[r/2, 2r]``, angle within +-20 degrees.

    The lower range edge never drops below half the reactive Fresnel bound.
    """
    lower, _ = fresnel_bounds(cfg)
    r_lo = max(0.5 * loc.range, 0.5 * lower)
    r_hi = max(2.0 * loc.range, r_lo * 1.01)
    lim = math.radians(89.0)
    t_lo = max(loc.angle - math.radians(20.0), -lim)
    t_hi = min(loc.angle + math.radians(20.0), lim)
    return RegionSpec(r_lo, r_hi, t_lo, t_hi, grid[0], grid[1])


@dataclass
class McRow:
    scenario: str
    runs: int
    failures: int
    mse_theta: float
    mse_r: float
    crb_theta: float
    crb_r: float

    @property
    def eff_theta(self) -> float:
        return self.mse_theta / self.crb_theta

    @property
    def eff_r(self) -> float:
        return self.mse_r / self.crb_r

    def as_dict(self) -> dict:
        d = asdict(self)
        d["eff_theta"] = self.eff_theta
        d["eff_r"] = self.eff_r
        return d


MC_COLUMNS = ["scenario", "runs", "failures", "mse_theta", "mse_r", "crb_theta", "crb_r",
              "eff_theta", "eff_r"]


@dataclass
class McReport:
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __add__(self, other: "McReport") -> "McReport":
        return McReport(self.rows + other.rows, {**self.metadata, **other.metadata})

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(MC_COLUMNS)
        for row in self.rows:
            d = row.as_dict()
            w.writerow([d[c] if isinstance(d[c], (str, int)) else repr(float(d[c])) for c in MC_COLUMNS])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"metadata": self.metadata, "rows": [r.as_dict() for r in self.rows]},
                          indent=2)


def trial_seeds(base_seed: int, runs: int) -> list:
    """Independent per-trial seeds spawned from ``base_seed``."""
    return [int(s.generate_state(2, np.uint32).view(np.uint64)[0])
            for s in np.random.SeedSequence(base_seed).spawn(runs)]


def monte_carlo(cfg: ArrayConfig, loc: SourceLocation, params: ScenarioParams, runs: int,
                base_seed: int, search: Optional[RegionSpec] = None,
                delay_model=DelayModel.EXACT, scenario: Optional[str] = None,
                max_iter: int = 100) -> McReport:
    """Run ``runs`` independent ML trials and compare the MSE to the closed-form bound.

    Data always follow the exact model; ``delay_model`` selects the model
    the estimator assumes (``"approx"`` gives the mismatched estimator).
    Trials that raise or fail to converge count as failures and are left
    out of the MSE.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    search = default_search(cfg, loc) if search is None else search
    err_t, err_r = [], []
    failures = 0
    for seed in trial_seeds(base_seed, runs):
        snaps = generate_snapshots(cfg, loc, params, seed)
        try:
            est = ml_estimate(cfg, snaps, search, params.gain, delay_model, max_iter=max_iter)
        except NearFieldError:
            failures += 1
            continue
        if not est.converged:
            failures += 1
            continue
        err_t.append(est.theta_hat - loc.angle)
        err_r.append(est.r_hat - loc.range)
    crb = closed_form_crb(cfg, loc, params)
    err_t, err_r = np.asarray(err_t), np.asarray(err_r)
    name = scenario or (f"{params.model.value}_{params.gain.value}_{DelayModel(delay_model).value}"
                        f"_r{loc.range:g}_th{math.degrees(loc.angle):g}")
    row = McRow(
        scenario=name, runs=runs, failures=failures,
        mse_theta=float(np.mean(err_t**2)) if err_t.size else math.nan,
        mse_r=float(np.mean(err_r**2)) if err_r.size else math.nan,
        crb_theta=crb.crb_theta, crb_r=crb.crb_r,
    )
    meta = {"base_seed": int(base_seed), "n_sensors": cfg.n_sensors, "spacing_m": cfg.spacing,
            "wavelength_m": cfg.wavelength, "range_m": loc.range,
            "angle_deg": math.degrees(loc.angle), "snapshots": params.snapshots,
            "noise_var": params.noise_var, "crb_source": crb.source_tag.value}
    return McReport([row], meta)
