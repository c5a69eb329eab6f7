"""
Steady state of the linearized alkali/noble-gas three-oscillator model.

The three normalized coherences are the optical coherence ``x_dp``, the
alkali ground-state spin coherence ``x_ds`` and the noble-gas nuclear-spin
coherence ``x_nk``.  Dropping the Langevin noise terms, their mean values obey

    d/dt x_dp = -(Γe/2 + iΔe) x_dp - iΩp s - iΩ  x_ds
    d/dt x_ds = -(Γs/2 + iΔs) x_ds - iΩ* x_dp - iJ x_nk
    d/dt x_nk = -(Γk/2 + iΔk) x_nk - iJ  x_ds

where ``s`` is the (normalized) population of the lower optical level, equal
to 1 for perfectly polarized ensembles.

All rates and detunings are dimensionless, in units of the natural linewidth
Γ0.  ``gamma0_hz`` is only used by reporting code to convert to Hz.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSystem, InvalidParameters

__all__ = [
    "SystemParams",
    "Detunings",
    "SteadyState",
    "reference_params",
    "make_detunings",
    "system_matrix",
    "drive_vector",
    "steady_state",
    "steady_state_at",
    "susceptibility_at",
    "steady_state_linear_solve",
    "susceptibility",
    "susceptibility_linear_solve",
    "eit_susceptibility",
]


class WeakExcitationWarning(UserWarning):
    """Control Rabi frequency is not small compared to Γe."""


@dataclass(frozen=True)
class SystemParams:
    """Rates, couplings and Zeeman parameters of the three-oscillator model.

    Every rate and detuning is in units of Γ0.  ``gyro_s`` and ``gyro_k`` only
    enter through the products ``gyro_s * b_tilde`` and ``gyro_k * b_tilde``.
    ``source_scale`` is the normalized population of the lower optical level
    (1 for perfect polarization, ``p_a`` otherwise).
    """

    gamma_e: float = 1e3
    gamma_s: float = 1e-6
    gamma_k: float = 1e-10
    omega_c_rabi: complex = 0.1
    omega_p_rabi: complex = 1.0
    j_exchange: float = 1e-6
    gyro_s: float = 100.0
    gyro_k: float = 1.0
    b_tilde: float = 0.0
    eta: float = 1.0
    gamma0_hz: float = 1e7
    source_scale: float = 1.0

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise InvalidParameters(problems)
        if abs(self.omega_c_rabi) >= self.gamma_e:
            warnings.warn(
                f"|omega_c_rabi|={abs(self.omega_c_rabi):g} is not below gamma_e={self.gamma_e:g}; "
                "the weak-excitation linearization may not hold",
                WeakExcitationWarning,
                stacklevel=3,
            )

    def problems(self) -> list[str]:
        out = []
        finite = {
            name: getattr(self, name)
            for name in (
                "gamma_e", "gamma_s", "gamma_k", "j_exchange", "gyro_s", "gyro_k",
                "b_tilde", "eta", "gamma0_hz", "source_scale",
            )
        }
        for name, value in finite.items():
            if not math.isfinite(value):
                out.append(f"{name} must be finite (got {value!r})")
        for name in ("omega_c_rabi", "omega_p_rabi"):
            value = complex(getattr(self, name))
            if not (math.isfinite(value.real) and math.isfinite(value.imag)):
                out.append(f"{name} must be finite (got {value!r})")
        if not self.gamma_e > 0:
            out.append(f"gamma_e must be > 0 (got {self.gamma_e!r})")
        for name in ("gamma_s", "gamma_k", "j_exchange"):
            if getattr(self, name) < 0:
                out.append(f"{name} must be >= 0 (got {getattr(self, name)!r})")
        if not self.gyro_k > 0:
            out.append(f"gyro_k must be > 0 (got {self.gyro_k!r})")
        if not self.gyro_s > self.gyro_k:
            out.append(f"gyro_s must exceed gyro_k (got {self.gyro_s!r} <= {self.gyro_k!r})")
        if not self.gamma0_hz > 0:
            out.append(f"gamma0_hz must be > 0 (got {self.gamma0_hz!r})")
        if not 0 <= self.source_scale <= 1:
            out.append(f"source_scale must lie in [0, 1] (got {self.source_scale!r})")
        return out

    @property
    def zeeman_s(self) -> float:
        """Alkali Zeeman offset γs·B̃."""
        return self.gyro_s * self.b_tilde

    @property
    def zeeman_k(self) -> float:
        """Noble-gas Zeeman offset γk·B̃."""
        return self.gyro_k * self.b_tilde

    @property
    def omega_sq(self) -> float:
        return abs(self.omega_c_rabi) ** 2

    def replace(self, **changes) -> "SystemParams":
        return dataclasses.replace(self, **changes)

    def with_zeeman_k(self, zeeman_k: float) -> "SystemParams":
        """Copy with ``b_tilde`` chosen so that γk·B̃ equals ``zeeman_k``."""
        return self.replace(b_tilde=zeeman_k / self.gyro_k)


def reference_params(**overrides) -> SystemParams:
    """Reference parameter set (Γe=1e3, Γs=1e-6, Γk=1e-10, Ω=0.1, J=1e-6)."""
    return SystemParams(**overrides)


@dataclass(frozen=True)
class Detunings:
    delta_e: float
    delta_s: float
    delta_k: float


@dataclass(frozen=True)
class SteadyState:
    """Complex steady-state amplitudes of the three normalized coherences.

    ``t_settle`` is filled in by the time-domain integrator only.
    """

    x_dp: complex
    x_ds: complex
    x_nk: complex
    t_settle: float | None = None

    def as_array(self) -> np.ndarray:
        return np.array([self.x_dp, self.x_ds, self.x_nk], dtype=complex)


def make_detunings(params: SystemParams, delta_e) -> Detunings:
    """Two-photon detunings for a given single-photon detuning.

    Δs = Δe + γs·B̃ and Δk = Δe + γk·B̃.  ``delta_e`` may be an array.
    """
    return Detunings(
        delta_e=delta_e,
        delta_s=delta_e + params.zeeman_s,
        delta_k=delta_e + params.zeeman_k,
    )


def _complex_rates(params: SystemParams, det: Detunings):
    a = params.gamma_e / 2 + 1j * np.asarray(det.delta_e, dtype=float)
    b = params.gamma_s / 2 + 1j * np.asarray(det.delta_s, dtype=float)
    c = params.gamma_k / 2 + 1j * np.asarray(det.delta_k, dtype=float)
    for name, z in (("optical", a), ("alkali spin", b), ("noble-gas spin", c)):
        if np.any(z == 0):
            raise DegenerateSystem(
                f"{name} relaxation rate and detuning are both zero; steady state is singular"
            )
    return a, b, c


def steady_state_at(params: SystemParams, det: Detunings) -> SteadyState:
    """Analytic steady state for explicit detunings (arrays broadcast).

    The expanded ratio of products loses all precision when the rates span
    thirteen decades, so the optical coherence is evaluated in nested form

        x_dp = -iΩp s / [a + |Ω|² / (b + J²/c)]

    with a, b, c the complex damping rates Γ/2 + iΔ.
    """
    a, b, c = _complex_rates(params, det)
    j = params.j_exchange
    spin_load = b + (j * j) / c if j else b
    x_dp = -1j * params.omega_p_rabi * params.source_scale / (a + params.omega_sq / spin_load)
    x_ds = -1j * np.conj(params.omega_c_rabi) * x_dp / spin_load
    x_nk = -1j * j * x_ds / c
    return SteadyState(x_dp=x_dp, x_ds=x_ds, x_nk=x_nk)


def steady_state(params: SystemParams, delta_e) -> SteadyState:
    """Analytic steady state at single-photon detuning ``delta_e`` (scalar or array)."""
    return steady_state_at(params, make_detunings(params, delta_e))


def susceptibility_at(params: SystemParams, det: Detunings):
    if params.omega_p_rabi == 0:
        params = params.replace(omega_p_rabi=1.0)
    return params.eta * steady_state_at(params, det).x_dp / params.omega_p_rabi


def susceptibility(params: SystemParams, delta_e):
    """Complex susceptibility χ = η·x_dp/Ωp (independent of the probe amplitude).

    Absorption is ``-chi.imag`` and dispersion ``chi.real``.
    """
    return susceptibility_at(params, make_detunings(params, delta_e))


def system_matrix(params: SystemParams, delta_e: float) -> np.ndarray:
    """Homogeneous 3x3 generator M of the coherence equations (d/dt x = M x + f)."""
    det = make_detunings(params, delta_e)
    a = params.gamma_e / 2 + 1j * det.delta_e
    b = params.gamma_s / 2 + 1j * det.delta_s
    c = params.gamma_k / 2 + 1j * det.delta_k
    om = complex(params.omega_c_rabi)
    j = params.j_exchange
    return np.array(
        [
            [-a, -1j * om, 0.0],
            [-1j * np.conj(om), -b, -1j * j],
            [0.0, -1j * j, -c],
        ],
        dtype=complex,
    )


def drive_vector(params: SystemParams) -> np.ndarray:
    """Inhomogeneous term f: the probe acting on the lower-level population."""
    return np.array([-1j * params.omega_p_rabi * params.source_scale, 0.0, 0.0], dtype=complex)


def _batched_matrices(params: SystemParams, delta_e: np.ndarray) -> np.ndarray:
    det = make_detunings(params, delta_e)
    n = delta_e.size
    m = np.zeros((n, 3, 3), dtype=complex)
    om = complex(params.omega_c_rabi)
    m[:, 0, 0] = -(params.gamma_e / 2 + 1j * det.delta_e)
    m[:, 1, 1] = -(params.gamma_s / 2 + 1j * det.delta_s)
    m[:, 2, 2] = -(params.gamma_k / 2 + 1j * det.delta_k)
    m[:, 0, 1] = -1j * om
    m[:, 1, 0] = -1j * np.conj(om)
    m[:, 1, 2] = m[:, 2, 1] = -1j * params.j_exchange
    return m


def steady_state_linear_solve(params: SystemParams, delta_e) -> SteadyState:
    """Steady state from a partially pivoted LU solve of M x = -f.

    Independent route to :func:`steady_state`; accepts scalar or array detunings.
    """
    d = np.atleast_1d(np.asarray(delta_e, dtype=float))
    _complex_rates(params, make_detunings(params, d))
    m = _batched_matrices(params, d.ravel())
    rhs = np.broadcast_to(-drive_vector(params), (m.shape[0], 3))[..., None]
    x = np.linalg.solve(m, rhs)[..., 0].reshape(d.shape + (3,))
    if np.ndim(delta_e) == 0:
        x = x[0]
    return SteadyState(x_dp=x[..., 0], x_ds=x[..., 1], x_nk=x[..., 2])


def susceptibility_linear_solve(params: SystemParams, delta_e):
    if params.omega_p_rabi == 0:
        params = params.replace(omega_p_rabi=1.0)
    return params.eta * steady_state_linear_solve(params, delta_e).x_dp / params.omega_p_rabi


def eit_susceptibility(params: SystemParams, delta_e):
    """Closed form for J = 0 (bare Λ system):

        χ = -iη (Γs/2 + iΔs) / [(Γe/2 + iΔe)(Γs/2 + iΔs) + |Ω|²]
    """
    det = make_detunings(params, delta_e)
    a = params.gamma_e / 2 + 1j * np.asarray(det.delta_e, dtype=float)
    b = params.gamma_s / 2 + 1j * np.asarray(det.delta_s, dtype=float)
    return -1j * params.eta * params.source_scale * b / (a * b + params.omega_sq)
