"""Doppler shifts and Maxwell-Boltzmann averaging of the susceptibility.

Control and probe co-propagate.  An atom moving with velocity ``v_z`` along
the beams sees both fields shifted by the same fraction ``v_z/c``, so the
single-photon detuning moves by ``(v_z/c)·ω_p`` while both two-photon
detunings move by ``(v_z/c)·(ω_p − ω_c)``, which vanishes for a degenerate
Raman pair.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy import constants

from .core import Detunings, SystemParams, make_detunings, susceptibility_at
from .errors import InvalidParameters, InvalidVelocity, NotConverged

__all__ = [
    "DopplerEnv",
    "RB87_MASS",
    "doppler_detunings",
    "doppler_susceptibility",
    "doppler_width",
    "velocity_nodes",
]

RB87_MASS = 87 * constants.atomic_mass
DEFAULT_QUAD_ORDER = 64
CONVERGENCE_RTOL = 1e-6


@dataclass(frozen=True)
class DopplerEnv:
    """Thermal vapor environment.  Frequencies are ordinary frequencies in Hz."""

    temperature: float = 500.0
    atomic_mass: float = RB87_MASS
    omega_p_abs: float = 3.84e14
    omega_c_abs: float = 3.84e14
    speed_of_light: float = constants.c
    boltzmann: float = constants.k

    def __post_init__(self):
        problems = []
        if not self.temperature > 0:
            problems.append(f"temperature must be > 0 (got {self.temperature!r})")
        if not self.atomic_mass > 0:
            problems.append(f"atomic_mass must be > 0 (got {self.atomic_mass!r})")
        if not self.omega_p_abs > 0:
            problems.append(f"omega_p_abs must be > 0 (got {self.omega_p_abs!r})")
        if not self.omega_c_abs >= 0:
            problems.append(f"omega_c_abs must be >= 0 (got {self.omega_c_abs!r})")
        if not problems and not self.most_probable_speed < self.speed_of_light:
            problems.append("most probable speed must be below the speed of light")
        if problems:
            raise InvalidParameters(problems)

    @property
    def most_probable_speed(self) -> float:
        """μ = sqrt(2 k_B T / m)."""
        return math.sqrt(2 * self.boltzmann * self.temperature / self.atomic_mass)


def doppler_width(env: DopplerEnv) -> float:
    """Single-photon Doppler FWHM Γ_D = ω_p·sqrt(8 ln2 k_B T / (m c²)), in Hz."""
    return env.omega_p_abs * math.sqrt(
        8 * math.log(2) * env.boltzmann * env.temperature / (env.atomic_mass * env.speed_of_light**2)
    )


def _shifts(params: SystemParams, env: DopplerEnv, v_z):
    beta = np.asarray(v_z, dtype=float) / env.speed_of_light
    single = beta * env.omega_p_abs / params.gamma0_hz
    raman = beta * (env.omega_p_abs - env.omega_c_abs) / params.gamma0_hz
    return single, raman


def doppler_detunings(params: SystemParams, env: DopplerEnv, delta_e, v_z) -> Detunings:
    """Detunings seen by an atom with axial velocity ``v_z`` (m/s)."""
    if np.any(np.abs(np.asarray(v_z)) >= env.speed_of_light):
        raise InvalidVelocity(f"|v_z| must be below c (got {v_z!r})")
    base = make_detunings(params, delta_e)
    single, raman = _shifts(params, env, v_z)
    return Detunings(
        delta_e=base.delta_e - single,
        delta_s=base.delta_s - raman,
        delta_k=base.delta_k - raman,
    )


@functools.lru_cache(maxsize=16)
def _hermite_table(order: int):
    x, w = hermgauss(order)
    # unit-normalized Gaussian weight: ∫ e^{-t²} dt = √π
    w = w / math.sqrt(math.pi)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def velocity_nodes(env: DopplerEnv, order: int = DEFAULT_QUAD_ORDER):
    """Quadrature velocities (m/s) and weights for f(v) = e^{-v²/μ²}/(μ√π)."""
    t, w = _hermite_table(order)
    return env.most_probable_speed * t, w


def _average(params: SystemParams, env: DopplerEnv, delta_e, order: int):
    v, w = velocity_nodes(env, order)
    if np.any(np.abs(v) >= env.speed_of_light):
        raise InvalidVelocity("quadrature nodes exceed the speed of light; environment is unphysical")
    d = np.asarray(delta_e, dtype=float)[..., None]
    chi = susceptibility_at(params, doppler_detunings(params, env, d, v))
    return (chi * w).sum(axis=-1)


def doppler_susceptibility(
    params: SystemParams,
    env: DopplerEnv,
    delta_e,
    quad_order: int = DEFAULT_QUAD_ORDER,
    rtol: float = CONVERGENCE_RTOL,
):
    """Velocity-averaged susceptibility χ_D = ∫ χ(v) f(v) dv by Gauss-Hermite quadrature.

    The result at ``quad_order`` is compared with ``2*quad_order``; if they
    differ by more than ``rtol`` (relative to the largest |χ_D| in the call)
    :class:`NotConverged` is raised.  The higher-order value is returned.
    """
    if quad_order < 8:
        raise ValueError("quad_order must be >= 8")
    lo = _average(params, env, delta_e, quad_order)
    hi = _average(params, env, delta_e, 2 * quad_order)
    scale = np.max(np.abs(hi))
    err = np.max(np.abs(hi - lo))
    if scale > 0 and err > rtol * scale:
        raise NotConverged(
            f"Gauss-Hermite order {quad_order} vs {2 * quad_order} differ by {err / scale:.3g} (rtol {rtol:g})"
        )
    return hi
