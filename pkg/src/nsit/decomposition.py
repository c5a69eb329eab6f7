"""Three-term Lorentzian decomposition of the susceptibility.

χ ≈ χ1 + χ2 + χ3 where χ1 is the power-broadened optical background, χ2 the
EIT window and χ3 the narrow feature induced by the spin-exchange coupling
to the noble-gas spins (absorptive at B̃=0, transparent for larger B̃).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SystemParams
from .errors import DegenerateSystem

__all__ = [
    "SusceptibilityDecomposition",
    "decompose",
    "background_width",
    "eit_width",
    "nsit_center",
    "nsit_width",
    "background_center",
    "eit_center",
    "chi3_amplitude",
    "decomposition_derivative",
]


@dataclass(frozen=True)
class SusceptibilityDecomposition:
    chi1: complex
    chi2: complex
    chi3: complex
    width_e_tilde: float
    width_s_tilde: float
    width_k_tilde: float
    shift_bar_omega: float
    # J²/(Γ̃s·Γ̃k); χ1 and χ2 neglect the exchange coupling, which is only safe when this is small
    coupling_diagnostic: float

    @property
    def total(self):
        return self.chi1 + self.chi2 + self.chi3


def _check(params: SystemParams):
    if not params.gamma_e > 0:
        raise DegenerateSystem("gamma_e must be positive for the decomposition")


def background_width(params: SystemParams) -> float:
    """Γ̃e = Γe − 4|Ω|²/Γe."""
    _check(params)
    return params.gamma_e - 4 * params.omega_sq / params.gamma_e


def eit_width(params: SystemParams) -> float:
    """Γ̃s = Γs + 4|Ω|²/Γe."""
    _check(params)
    return params.gamma_s + 4 * params.omega_sq / params.gamma_e


def background_center(params: SystemParams) -> float:
    return 4 * params.zeeman_s * params.omega_sq / params.gamma_e**2


def eit_center(params: SystemParams) -> float:
    return -params.zeeman_s


def _exchange_denominator(params: SystemParams) -> float:
    # γs²B̃²Γe² + (ΓeΓs/2 + 2|Ω|²)²
    ge = params.gamma_e
    return (params.zeeman_s * ge) ** 2 + (ge * params.gamma_s / 2 + 2 * params.omega_sq) ** 2


def nsit_center(params: SystemParams) -> float:
    """Center ω̄ of the exchange-induced feature.

    ω̄ = −γkB̃ + γsB̃·J²Γe² / (γs²B̃²Γe² + (ΓeΓs/2 + 2|Ω|²)²)

    The first term is the noble-gas Zeeman shift; the second is the pull from
    the alkali spin, negligible once J ≪ |Ω|²/Γe.
    """
    _check(params)
    j2 = params.j_exchange**2
    return -params.zeeman_k + params.zeeman_s * j2 * params.gamma_e**2 / _exchange_denominator(params)


def nsit_width(params: SystemParams) -> float:
    """Width Γ̃k = Γk + J²Γe(ΓeΓs + 4|Ω|²) / (γs²B̃²Γe² + (ΓeΓs/2 + 2|Ω|²)²)."""
    _check(params)
    ge = params.gamma_e
    j2 = params.j_exchange**2
    return params.gamma_k + j2 * ge * (ge * params.gamma_s + 4 * params.omega_sq) / _exchange_denominator(params)


def chi3_amplitude(params: SystemParams) -> complex:
    """Complex residue A of χ3 = −iA / (i(Δe − ω̄) + Γ̃k/2)."""
    ge = params.gamma_e
    inner = 1j * params.zeeman_s * ge + ge * params.gamma_s / 2 + 2 * params.omega_sq
    return params.eta * params.source_scale * 4 * params.j_exchange**2 * params.omega_sq / inner**2


def decompose(params: SystemParams, delta_e) -> SusceptibilityDecomposition:
    """Evaluate χ1, χ2, χ3 at ``delta_e`` (scalar or array) plus the derived widths and shift."""
    _check(params)
    d = np.asarray(delta_e, dtype=float)
    ge = params.gamma_e
    om2 = params.omega_sq
    scale = params.eta * params.source_scale
    w_e = background_width(params)
    w_s = eit_width(params)
    w_k = nsit_width(params)
    wbar = nsit_center(params)

    chi1 = -1j * scale / (1j * (d - background_center(params)) + w_e / 2)
    chi2 = -scale * 8 * (2 * params.zeeman_s - 0.5j * ge) * om2 / ((1j * (d + params.zeeman_s) + w_s / 2) * ge**3)
    chi3 = -1j * chi3_amplitude(params) / (1j * (d - wbar) + w_k / 2)

    return SusceptibilityDecomposition(
        chi1=chi1,
        chi2=chi2,
        chi3=chi3,
        width_e_tilde=w_e,
        width_s_tilde=w_s,
        width_k_tilde=w_k,
        shift_bar_omega=wbar,
        coupling_diagnostic=params.j_exchange**2 / (w_s * w_k) if w_k > 0 else float("inf"),
    )


def decomposition_derivative(params: SystemParams, delta_e):
    """Analytic dχ1/dΔe, dχ2/dΔe, dχ3/dΔe (each term is a simple pole in Δe)."""
    _check(params)
    d = np.asarray(delta_e, dtype=float)
    ge = params.gamma_e
    scale = params.eta * params.source_scale
    p1 = 1j * (d - background_center(params)) + background_width(params) / 2
    k2 = -scale * 8 * (2 * params.zeeman_s - 0.5j * ge) * params.omega_sq / ge**3
    p2 = 1j * (d + params.zeeman_s) + eit_width(params) / 2
    p3 = 1j * (d - nsit_center(params)) + nsit_width(params) / 2
    return -scale / p1**2, -1j * k2 / p2**2, -chi3_amplitude(params) / p3**2
