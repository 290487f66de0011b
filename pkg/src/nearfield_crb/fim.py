"""Numeric Fisher information matrices and their inversion.

This is the brute-force route to the bounds: assemble the full FIM over all
unknowns (location plus nuisance parameters) and invert it.  The closed
forms in :mod:`nearfield_crb.closed_form` are checked against it.

Conditional model parameter order: ``(theta, r, psi_1..T, alpha_1..T, sigma2)``.
Unconditional model parameter order: ``(theta, r, sigma_s2, sigma2)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import IllConditioned
from .geometry import ArrayConfig, Gain, SourceLocation, steering_jacobian

#: Largest acceptable condition number of the Jacobi-scaled FIM.
MAX_CONDITION = 1e12


class Model(str, enum.Enum):
    CONDITIONAL = "conditional"
    UNCONDITIONAL = "unconditional"


class SourceTag(str, enum.Enum):
    """Which formula or oracle produced a :class:`CrbResult`."""

    LEMMA1 = "lemma1"
    LEMMA4 = "lemma4"
    LEMMA5 = "lemma5"
    LEMMA6 = "lemma6"
    ORACLE_CONDITIONAL = "oracle_conditional"
    ORACLE_UNCONDITIONAL = "oracle_unconditional"
    TAYLOR_LEMMA2 = "taylor_lemma2"
    APPROX_LEMMA3 = "approx_lemma3"
    FIRSTORDER_SEC43 = "firstorder_sec43"


@dataclass(frozen=True)
class ScenarioParams:
    """Signal/noise description for one bound evaluation.

    ``snapshots`` may be non-integer for design calculations (minimum
    observation time); in that case ``amplitudes`` must be a scalar so the
    deterministic SNR stays defined.  Conditional amplitudes are either a
    scalar (constant envelope) or a length-``snapshots`` vector.
    """

    model: Model
    gain: Gain
    snapshots: float
    noise_var: float
    amplitudes: object = 1.0
    phases: Optional[np.ndarray] = None
    signal_var: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        object.__setattr__(self, "gain", Gain(self.gain))
        if not self.snapshots >= 1:
            raise ValueError(f"snapshots must be >= 1, got {self.snapshots}")
        if not self.noise_var > 0:
            raise ValueError(f"noise_var must be > 0, got {self.noise_var}")
        if self.model is Model.CONDITIONAL:
            amp = np.asarray(self.amplitudes, dtype=float)
            if amp.ndim > 1 or np.any(~(amp > 0)):
                raise ValueError("conditional amplitudes must be strictly positive")
            if amp.ndim == 1 and amp.size != self.snapshots:
                raise ValueError("amplitude vector length must equal snapshots")
            if self.phases is not None:
                ph = np.asarray(self.phases, dtype=float)
                if ph.shape != (self.n_snapshots,):
                    raise ValueError("phase vector length must equal snapshots")
        else:
            if self.signal_var is None or not self.signal_var >= 0:
                raise ValueError("unconditional model needs signal_var >= 0")

    @classmethod
    def conditional(cls, snapshots, noise_var, amplitudes=1.0, phases=None, gain=Gain.EQUAL):
        return cls(Model.CONDITIONAL, gain, snapshots, noise_var, amplitudes, phases)

    @classmethod
    def unconditional(cls, snapshots, noise_var, signal_var, gain=Gain.EQUAL):
        return cls(Model.UNCONDITIONAL, gain, snapshots, noise_var, signal_var=signal_var)

    @property
    def n_snapshots(self) -> int:
        if float(self.snapshots) != int(self.snapshots):
            raise ValueError(f"non-integer snapshot count {self.snapshots} has no sample realization")
        return int(self.snapshots)

    @property
    def amplitude_vector(self) -> np.ndarray:
        amp = np.asarray(self.amplitudes, dtype=float)
        if amp.ndim == 0:
            return np.full(self.n_snapshots, float(amp))
        return amp

    @property
    def phase_vector(self) -> np.ndarray:
        if self.phases is None:
            return np.zeros(self.n_snapshots)
        return np.asarray(self.phases, dtype=float)

    @property
    def amplitude_energy(self) -> float:
        """``||alpha||**2``."""
        amp = np.asarray(self.amplitudes, dtype=float)
        if amp.ndim == 0:
            return float(amp) ** 2 * self.snapshots
        return float(amp @ amp)

    @property
    def d_snr(self) -> float:
        """Deterministic SNR ``||alpha||**2 / (T sigma2)``."""
        return self.amplitude_energy / (self.snapshots * self.noise_var)

    @property
    def snr(self) -> float:
        """Stochastic SNR ``sigma_s2 / sigma2``."""
        return self.signal_var / self.noise_var

    def with_gain(self, gain) -> "ScenarioParams":
        return replace(self, gain=Gain(gain))

    def with_snapshots(self, snapshots) -> "ScenarioParams":
        """Same per-snapshot SNR, different observation length."""
        if self.model is Model.CONDITIONAL:
            amp = np.asarray(self.amplitudes, dtype=float)
            if amp.ndim == 1:
                # keep the mean power so d_snr is unchanged
                amp = math.sqrt(float(amp @ amp) / amp.size)
            return replace(self, snapshots=snapshots, amplitudes=float(amp), phases=None)
        return replace(self, snapshots=snapshots)

    def with_d_snr(self, d_snr: float) -> "ScenarioParams":
        """Rescale the noise variance so the deterministic SNR equals ``d_snr``."""
        return replace(self, noise_var=self.amplitude_energy / (self.snapshots * d_snr))


@dataclass(frozen=True)
class CrbResult:
    """2x2 bound on ``(theta, r)``.

    ``crb_r_theta`` is ``None`` when the producing formula has no coupling
    term (the Taylor and approximate-model forms).  ``quality`` is ``"ok"``
    or ``"lateral"`` (``|cos theta| < 1e-3``: the bound is legitimately huge).
    """

    crb_theta: float
    crb_r: float
    crb_r_theta: Optional[float]
    source_tag: SourceTag
    quality: str = field(default="ok")

    def matrix(self) -> np.ndarray:
        if self.crb_r_theta is None:
            raise ValueError(f"{self.source_tag.value} provides no coupling term")
        return np.array([[self.crb_theta, self.crb_r_theta], [self.crb_r_theta, self.crb_r]])

    def scaled(self, factor: float, tag=None) -> "CrbResult":
        rt = None if self.crb_r_theta is None else self.crb_r_theta * factor
        return CrbResult(self.crb_theta * factor, self.crb_r * factor, rt,
                         SourceTag(tag) if tag else self.source_tag, self.quality)


def _steering(cfg, loc, gain):
    return steering_jacobian(cfg, loc, gain)


def conditional_fim_from_steering(b: np.ndarray, db: np.ndarray, params: ScenarioParams) -> np.ndarray:
    """Block-structured conditional FIM for model ``x(t) = s(t) b + noise``.

    ``db`` holds the steering partials w.r.t. the two location parameters
    (whatever coordinates they are in).  ``s(t) = alpha_t exp(j psi_t)``.
    """
    T = params.n_snapshots
    alpha = params.amplitude_vector
    w = 2.0 / params.noise_var
    n = b.size
    size = 2 + 2 * T + 1
    F = np.zeros((size, size))
    psi = slice(2, 2 + T)
    amp = slice(2 + T, 2 + 2 * T)

    top = np.real(db.conj().T @ db)
    F[:2, :2] = w * float(alpha @ alpha) * 0.5 * (top + top.T)
    z = db.conj().T @ b  # (2,)
    # d mu/d psi_t = j s_t b, d mu/d alpha_t = exp(j psi_t) b
    F[:2, psi] = w * np.outer(np.real(1j * z), alpha**2)
    F[:2, amp] = w * np.outer(np.real(z), alpha)
    bb = float(np.real(b.conj() @ b))
    F[psi, psi] = np.diag(w * bb * alpha**2)
    F[amp, amp] = np.diag(np.full(T, w * bb))
    F[-1, -1] = n * T / params.noise_var**2

    F[psi, :2] = F[:2, psi].T
    F[amp, :2] = F[:2, amp].T
    return F


def conditional_fim_generic(b: np.ndarray, db: np.ndarray, params: ScenarioParams) -> np.ndarray:
    """Unstructured conditional FIM: explicit Jacobian of the stacked mean.

    ``FIM = (2/sigma2) Re(J^H J) + (NT/sigma2**2) e e^T`` with ``J`` the
    ``NT x (2T + 3)`` Jacobian of ``mu``.  Slow; kept as a check on the
    structured assembly.
    """
    T = params.n_snapshots
    alpha = params.amplitude_vector
    s = alpha * np.exp(1j * params.phase_vector)
    n = b.size
    size = 2 + 2 * T + 1
    J = np.zeros((T, n, size), dtype=complex)
    J[:, :, 0] = s[:, None] * db[:, 0]
    J[:, :, 1] = s[:, None] * db[:, 1]
    for t in range(T):
        J[t, :, 2 + t] = 1j * s[t] * b
        J[t, :, 2 + T + t] = np.exp(1j * params.phase_vector[t]) * b
    J = J.reshape(T * n, size)
    G = np.real(J.conj().T @ J)
    F = 2.0 / params.noise_var * 0.5 * (G + G.T)
    F[-1, -1] += n * T / params.noise_var**2
    return F


def unconditional_fim_from_steering(b: np.ndarray, db: np.ndarray, params: ScenarioParams) -> np.ndarray:
    """Gaussian-model FIM ``T tr(S^-1 dS_i S^-1 dS_j)`` over ``(p1, p2, sigma_s2, sigma2)``."""
    n = b.size
    s2 = params.signal_var
    sigma = s2 * np.outer(b, b.conj()) + params.noise_var * np.eye(n)
    derivs = [
        s2 * (np.outer(db[:, 0], b.conj()) + np.outer(b, db[:, 0].conj())),
        s2 * (np.outer(db[:, 1], b.conj()) + np.outer(b, db[:, 1].conj())),
        np.outer(b, b.conj()),
        np.eye(n),
    ]
    m = [np.linalg.solve(sigma, d) for d in derivs]
    F = np.empty((4, 4))
    for i in range(4):
        for j in range(i, 4):
            F[i, j] = F[j, i] = params.snapshots * np.real(np.trace(m[i] @ m[j]))
    return F


def fim_conditional(cfg: ArrayConfig, loc: SourceLocation, params: ScenarioParams,
                    structured: bool = True) -> np.ndarray:
    """Full conditional FIM (dimension ``2T + 3``) for the params' gain flavor."""
    if params.model is not Model.CONDITIONAL:
        raise ValueError("fim_conditional needs conditional params")
    b, db = _steering(cfg, loc, params.gain)
    if structured:
        return conditional_fim_from_steering(b, db, params)
    return conditional_fim_generic(b, db, params)


def fim_unconditional(cfg: ArrayConfig, loc: SourceLocation, params: ScenarioParams) -> np.ndarray:
    """4x4 unconditional FIM over ``(theta, r, sigma_s2, sigma2)``."""
    if params.model is not Model.UNCONDITIONAL:
        raise ValueError("fim_unconditional needs unconditional params")
    b, db = _steering(cfg, loc, params.gain)
    return unconditional_fim_from_steering(b, db, params)


def scaled_condition(F: np.ndarray) -> float:
    """Condition number after symmetric Jacobi scaling (removes unit disparities)."""
    diag = np.diag(F)
    if np.any(diag <= 0):
        return math.inf
    s = 1.0 / np.sqrt(diag)
    return float(np.linalg.cond(F * np.outer(s, s)))


def location_block_inverse(F: np.ndarray, method: str = "inverse") -> np.ndarray:
    """Top-left 2x2 block of ``F^-1``.

    ``method="inverse"`` inverts the whole matrix (LU with partial pivoting);
    ``method="schur"`` inverts the Schur complement of the nuisance block.
    """
    cond = scaled_condition(F)
    if not cond <= MAX_CONDITION:
        raise IllConditioned(f"FIM condition number {cond:.3e} exceeds {MAX_CONDITION:.0e}")
    if method == "inverse":
        return np.linalg.inv(F)[:2, :2]
    if method == "schur":
        A, B, D = F[:2, :2], F[:2, 2:], F[2:, 2:]
        return np.linalg.inv(A - B @ np.linalg.solve(D, B.T))
    raise ValueError(f"unknown method {method!r}")


def _result_from_block(C: np.ndarray, tag: SourceTag) -> CrbResult:
    C = 0.5 * (C + C.T)
    return CrbResult(float(C[0, 0]), float(C[1, 1]), float(C[0, 1]), tag)


def oracle_crb(cfg: ArrayConfig, loc: SourceLocation, params: ScenarioParams,
               method: str = "inverse") -> CrbResult:
    """Bound obtained by numerically inverting the full FIM."""
    if params.model is Model.CONDITIONAL:
        F = fim_conditional(cfg, loc, params)
        tag = SourceTag.ORACLE_CONDITIONAL
    else:
        F = fim_unconditional(cfg, loc, params)
        tag = SourceTag.ORACLE_UNCONDITIONAL
    return _result_from_block(location_block_inverse(F, method), tag)


def cartesian_steering_jacobian(cfg: ArrayConfig, x: float, y: float, gain) -> tuple:
    """Steering vector and partials w.r.t. Cartesian source coordinates ``(x, y)``.

    Derived directly from sensor positions ``(n d, 0)``; shares no code with
    the polar derivative formulas.
    """
    px = cfg.indices * cfg.spacing
    dx = x - px
    dn = np.hypot(dx, y)
    d0 = math.hypot(x, y)
    k = 2.0 * math.pi / cfg.wavelength
    tau = k * (dn - d0)
    tau_x = k * (dx / dn - x / d0)
    tau_y = k * (y / dn - y / d0)
    if Gain(gain) is Gain.VARIABLE:
        g = 1.0 / dn
        g_x = -dx / dn**3
        g_y = -y / dn**3
    else:
        g = np.ones_like(dn)
        g_x = g_y = np.zeros_like(dn)
    phase = np.exp(1j * tau)
    b = g * phase
    db = np.stack([(g_x + 1j * g * tau_x) * phase, (g_y + 1j * g * tau_y) * phase], axis=1)
    return b, db


def cartesian_crb(cfg: ArrayConfig, loc: SourceLocation, params: ScenarioParams) -> np.ndarray:
    """2x2 bound on ``(x, y)`` from a FIM built directly in Cartesian coordinates."""
    x, y = loc.cartesian
    b, db = cartesian_steering_jacobian(cfg, x, y, params.gain)
    if params.model is Model.CONDITIONAL:
        F = conditional_fim_generic(b, db, params)
    else:
        F = unconditional_fim_from_steering(b, db, params)
    return location_block_inverse(F, "inverse")
