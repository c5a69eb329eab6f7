"""Time-domain relaxation of the coherence equations and the polarization model.

The integrator here is a check on :func:`nsit.core.steady_state` that shares
none of its algebra: it propagates the linear ODE from a dark start until the
state stops changing.  Two propagators are available:

* ``"rk45"`` -- adaptive Dormand-Prince 5(4) pair, usable when the rates are
  not too disparate;
* ``"expm"`` -- exact variation-of-constants step
  ``x(t+h) = x* + exp(M h) (x(t) - x*)`` with the equilibrium ``x*`` from a
  pivoted LU factorization.  This is the only practical choice for the
  physical parameter sets, where Γe/Γ̃k exceeds 10^10.

``"auto"`` picks rk45 when its projected step count fits the budget and
falls back to expm otherwise, or when rk45 reports a step-size underflow.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .core import SteadyState, SystemParams, drive_vector, system_matrix
from .decomposition import eit_width, nsit_width
from .errors import InvalidParameters, NoConvergence, StiffnessFailure

__all__ = [
    "PolarizationState",
    "TrajectoryConfig",
    "Trajectory",
    "effective_params",
    "integrate_to_steady_state",
    "relax",
    "system_eigenvalues",
    "write_trajectory_csv",
]

log = logging.getLogger(__name__)

# RK45 is only stable for |λ h| below ~3.3 on the negative real axis
_DOPRI_STABILITY = 3.3


@dataclass(frozen=True)
class PolarizationState:
    """Polarization degrees of the alkali (p_a) and noble-gas (p_b) ensembles.

    ``j_full`` is the exchange rate at full polarization; densities and the
    microscopic exchange strength are absorbed into it.
    """

    p_a: float = 1.0
    p_b: float = 1.0
    j_full: float | None = None

    def __post_init__(self):
        problems = []
        for name in ("p_a", "p_b"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                problems.append(f"{name} must lie in [0, 1] (got {v!r})")
        if self.j_full is not None and not self.j_full >= 0:
            problems.append(f"j_full must be >= 0 (got {self.j_full!r})")
        if problems:
            raise InvalidParameters(problems)

    @property
    def exchange_scale(self) -> float:
        return math.sqrt(self.p_a * self.p_b)


def effective_params(params: SystemParams, pol: PolarizationState) -> SystemParams:
    """Scale the exchange rate by sqrt(p_a p_b) and the probe source by p_a.

    ``pol.j_full`` defaults to ``params.j_exchange`` when unset.
    """
    j_full = params.j_exchange if pol.j_full is None else pol.j_full
    if pol.p_a == 1 and pol.p_b == 1 and j_full == params.j_exchange:
        return params
    return params.replace(j_exchange=j_full * pol.exchange_scale, source_scale=pol.p_a)


@dataclass(frozen=True)
class TrajectoryConfig:
    """Integration settings.  Times are in units of 1/Γ0.

    ``dt_initial`` and ``t_max`` default to values derived from the rates:
    a hundredth of the fastest lifetime and 2000 slow-mode intervals.
    """

    dt_initial: float | None = None
    t_max: float | None = None
    tol_rel: float = 1e-11
    steady_eps: float = 1e-9
    method: str = "auto"
    max_steps: int = 200_000
    substeps: int = 4

    def __post_init__(self):
        problems = []
        if not 1e-14 < self.tol_rel < 1e-3:
            problems.append(f"tol_rel must lie in (1e-14, 1e-3) (got {self.tol_rel!r})")
        if not self.steady_eps > 0:
            problems.append("steady_eps must be > 0")
        if self.method not in ("auto", "rk45", "expm"):
            problems.append(f"method must be auto, rk45 or expm (got {self.method!r})")
        if self.dt_initial is not None and not self.dt_initial > 0:
            problems.append("dt_initial must be > 0")
        if self.t_max is not None and not self.t_max > 0:
            problems.append("t_max must be > 0")
        if self.substeps < 1:
            problems.append("substeps must be >= 1")
        if problems:
            raise InvalidParameters(problems)


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    method: str = ""

    def append(self, t, x):
        self.times.append(float(t))
        self.states.append(np.array(x, dtype=complex))


def system_eigenvalues(params: SystemParams, delta_e: float) -> np.ndarray:
    return np.linalg.eigvals(system_matrix(params, delta_e))


def _slow_rate(params: SystemParams) -> float:
    # Γ̃k is the slow mode for every physical set; Γ̃s guards toy parameter sets where it is not
    rate = min(nsit_width(params), eit_width(params))
    if not rate > 0:
        raise InvalidParameters(["slowest relaxation width is zero; no steady state exists"])
    return rate


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


class _Dopri:
    """Adaptive Dormand-Prince stepper for y' = M y + f (complex y)."""

    def __init__(self, m, f, rtol, atol, h0, max_steps):
        self.m = m
        self.f = f
        self.rtol = rtol
        self.atol = atol
        self.h = h0
        self.max_steps = max_steps
        self.steps = 0

    def rhs(self, y):
        return self.m @ y + self.f

    def advance(self, t, y, t_end):
        k = [None] * 7
        k[0] = self.rhs(y)
        while t < t_end:
            if self.steps >= self.max_steps:
                raise StiffnessFailure(f"rk45 step budget ({self.max_steps}) exhausted at t={t:.6g}")
            h = min(self.h, t_end - t)
            if h <= 16 * np.finfo(float).eps * max(abs(t), 1.0):
                raise StiffnessFailure(f"rk45 step size underflow (h={h:.3g}) at t={t:.6g}")
            for i in range(1, 7):
                yi = y + h * sum(a * k[j] for j, a in enumerate(_A[i]))
                k[i] = self.rhs(yi)
            y5 = y + h * sum(b * kk for b, kk in zip(_B5, k) if b)
            y4 = y + h * sum(b * kk for b, kk in zip(_B4, k) if b)
            scale = self.atol + self.rtol * np.maximum(np.abs(y), np.abs(y5))
            err = np.sqrt(np.mean(np.abs((y5 - y4) / scale) ** 2))
            self.steps += 1
            if err <= 1.0:
                t += h
                y = y5
                k[0] = k[6]  # first-same-as-last
                factor = 5.0 if err == 0 else min(5.0, 0.9 * err ** -0.2)
            else:
                factor = max(0.2, 0.9 * err ** -0.2)
            self.h = h * factor
        return t, y


def _relax_rk45(m, f, x0, interval, t_max, cfg, traj, drive_scale):
    dt0 = cfg.dt_initial or 0.01 / np.max(np.abs(np.diag(m)))
    stepper = _Dopri(m, f, cfg.tol_rel, cfg.tol_rel * 1e-3 * drive_scale, dt0, cfg.max_steps)
    return _march(lambda t, x, t_end: stepper.advance(t, x, t_end), x0, interval, t_max, cfg, traj)


def _relax_expm(m, f, x0, interval, t_max, cfg, traj):
    h = interval / cfg.substeps
    lu = scipy.linalg.lu_factor(m)
    x_eq = scipy.linalg.lu_solve(lu, -f)
    prop = scipy.linalg.expm(m * h)

    def advance(t, x, t_end):
        n = max(1, round((t_end - t) / h))
        for _ in range(n):
            x = x_eq + prop @ (x - x_eq)
        return t + n * h, x

    return _march(advance, x0, interval, t_max, cfg, traj)


def _march(advance, x0, interval, t_max, cfg, traj):
    t = 0.0
    x = np.array(x0, dtype=complex)
    if traj is not None:
        traj.append(t, x)
    while t < t_max:
        t_next = t + interval
        t_new, x_new = advance(t, x, t_next)
        if traj is not None:
            traj.append(t_new, x_new)
        # componentwise: |x_nk| can exceed |x_ds| by orders of magnitude
        floor = 1e-300 + 1e-12 * np.max(np.abs(x_new))
        change = np.max(np.abs(x_new - x) / (np.abs(x_new) + floor))
        t, x = t_new, x_new
        if change <= cfg.steady_eps:
            return t, x
    raise NoConvergence(f"steady state not reached by t_max={t_max:.6g} (last relative change {change:.3g})")


def relax(
    params: SystemParams,
    delta_e: float,
    cfg: TrajectoryConfig | None = None,
    trajectory: Trajectory | None = None,
) -> SteadyState:
    """Integrate the coherence equations of ``params`` from zero to steady state."""
    cfg = cfg or TrajectoryConfig()
    m = system_matrix(params, delta_e)
    f = drive_vector(params)
    x0 = np.zeros(3, dtype=complex)
    if not np.any(f):
        # homogeneous and stable: the dark start is already the fixed point
        if trajectory is not None:
            trajectory.append(0.0, x0)
        return SteadyState(0j, 0j, 0j, t_settle=0.0)

    interval = 1.0 / _slow_rate(params)
    t_max = cfg.t_max if cfg.t_max is not None else 2000 * interval
    method = cfg.method
    if method == "auto":
        fastest = np.max(np.abs(np.linalg.eigvals(m)))
        projected = 40 * interval * fastest / _DOPRI_STABILITY
        method = "rk45" if projected < cfg.max_steps else "expm"
    if method == "rk45":
        try:
            t, x = _relax_rk45(m, f, x0, interval, t_max, cfg, trajectory, abs(f[0]))
        except StiffnessFailure:
            if cfg.method == "rk45":
                raise
            log.info("rk45 failed on stiff system; falling back to exponential propagator")
            if trajectory is not None:
                trajectory.times.clear()
                trajectory.states.clear()
            method = "expm"
    if method == "expm":
        t, x = _relax_expm(m, f, x0, interval, t_max, cfg, trajectory)
    if trajectory is not None:
        trajectory.method = method
    return SteadyState(x_dp=x[0], x_ds=x[1], x_nk=x[2], t_settle=t)


def integrate_to_steady_state(
    params: SystemParams,
    pol: PolarizationState | None,
    cfg: TrajectoryConfig | None,
    delta_e: float,
    trajectory: Trajectory | None = None,
) -> SteadyState:
    """Steady state by time integration, with the polarization model applied first."""
    eff = effective_params(params, pol or PolarizationState())
    return relax(eff, delta_e, cfg, trajectory)


def write_trajectory_csv(path, trajectory: Trajectory) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x_dp_re", "x_dp_im", "x_ds_re", "x_ds_im", "x_nk_re", "x_nk_im"])
        for t, x in zip(trajectory.times, trajectory.states):
            row = [t]
            for z in x:
                row += [z.real, z.imag]
            w.writerow([format(v, ".17g") for v in row])
    return path
