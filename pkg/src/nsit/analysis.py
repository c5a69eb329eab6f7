"""Spectra on multi-resolution grids and extraction of their narrow features.

A physical spectrum mixes three widths: the optical background (~Γe), the
EIT window (~Γ̃s) and the exchange-induced feature (~Γ̃k), which for the
reference parameters are 10^3, 4e-5 and 1e-7 Γ0.  Uniform sampling cannot
resolve all three, so :func:`composite_grid` lays a coarse uniform grid over
the window and adds geometrically spaced points around every predicted
feature center.
"""

from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq, minimize_scalar

from .core import SystemParams, steady_state, susceptibility
from .decomposition import (
    background_center,
    background_width,
    decompose,
    eit_center,
    eit_width,
    nsit_center,
    nsit_width,
)
from .doppler import DEFAULT_QUAD_ORDER, DopplerEnv, doppler_susceptibility, velocity_nodes, _shifts
from .errors import FeatureNotFound, NsitError, UnderResolved

__all__ = [
    "FeatureKind",
    "Spectrum",
    "SignalFeature",
    "SweepPoint",
    "composite_grid",
    "feature_markers",
    "evaluate_chi",
    "scan_spectrum",
    "reference_absorption",
    "extract_feature",
    "sweep_feature",
    "measure_feature",
    "relative_phase",
    "dispersion_slope",
    "eit_slope",
    "feature_slope",
    "group_velocity_ratio",
    "lorentzian_spectrum",
]

log = logging.getLogger(__name__)

MODES = ("exact", "decomposed", "doppler")
SWEEP_VARS = ("J", "b_tilde", "omega")
_NOISE_FLOOR = 1e-6


class FeatureKind(str, enum.Enum):
    BACKGROUND = "Background"
    EIT = "EIT"
    NSIA = "NSIA"
    NSIT = "NSIT"

    @classmethod
    def parse(cls, value) -> "FeatureKind":
        if isinstance(value, cls):
            return value
        for kind in cls:
            if kind.value.lower() == str(value).lower():
                return kind
        raise ValueError(f"unknown feature kind {value!r}")


@dataclass
class Spectrum:
    """Sampled absorption (−Im χ) and dispersion (Re χ) on an increasing grid.

    Both columns are divided by ``normalization`` (1.0 for raw output).
    ``terms`` holds χ1, χ2, χ3 when the spectrum came from the decomposition.
    """

    delta_e: np.ndarray
    absorption: np.ndarray
    dispersion: np.ndarray
    normalization: float = 1.0
    grid_spec: list = field(default_factory=list)
    mode: str = "exact"
    params: SystemParams | None = None
    env: DopplerEnv | None = None
    terms: dict | None = None

    def __post_init__(self):
        if np.any(np.diff(self.delta_e) <= 0):
            raise ValueError("delta_e must be strictly increasing")

    @property
    def points(self):
        return list(zip(self.delta_e.tolist(), self.absorption.tolist(), self.dispersion.tolist()))

    def __len__(self):
        return self.delta_e.size


@dataclass(frozen=True)
class SignalFeature:
    kind: FeatureKind
    center: float
    fwhm: float
    amplitude: float
    baseline: float = 0.0
    fwhm_hz: float | None = None
    flags: tuple = ()


@dataclass(frozen=True)
class SweepPoint:
    value: float
    feature: SignalFeature | None
    error: str | None = None


# ----------------------------------------------------------------------------
# grids and evaluation


def feature_markers(params: SystemParams) -> list[tuple[str, float, float]]:
    """(label, center, width) of the background, the EIT window and the exchange feature."""
    markers = [
        ("background", background_center(params), background_width(params)),
        ("eit", eit_center(params), eit_width(params)),
    ]
    if params.j_exchange > 0:
        markers.append(("exchange", nsit_center(params), nsit_width(params)))
    return [m for m in markers if m[2] > 0]


def composite_grid(window, markers=(), n_coarse: int = 2001, n_feature: int = 400, span: float = 30.0):
    """Coarse uniform grid over ``window`` plus log-spaced refinement around each marker.

    Each marker contributes ``n_feature`` points at center ± width·g with g
    geometric in [1e-3, span], and the center itself.  Returns the sorted,
    de-duplicated grid and a JSON-friendly description of its pieces.
    """
    lo, hi = map(float, window)
    if not lo < hi:
        raise ValueError(f"window must satisfy lo < hi (got {window!r})")
    pieces = [np.linspace(lo, hi, n_coarse)]
    spec = [{"kind": "uniform", "lo": lo, "hi": hi, "n": int(n_coarse)}]
    half = max(n_feature // 2, 1)
    for label, center, width in markers:
        offsets = width * np.geomspace(1e-3, span, half)
        pts = np.concatenate([center - offsets[::-1], [center], center + offsets])
        pts = pts[(pts >= lo) & (pts <= hi)]
        if pts.size:
            pieces.append(pts)
            spec.append({
                "kind": "log", "label": label, "center": float(center), "width": float(width),
                "span": float(span), "n": int(2 * half + 1),
            })
    grid = np.unique(np.concatenate(pieces))
    return grid, spec


def _doppler_terms(params: SystemParams, env: DopplerEnv, delta_e, order: int):
    """Velocity-averaged χ1 and χ2 (χ1 follows Δe, χ2 the alkali two-photon detuning)."""
    v, w = velocity_nodes(env, order)
    single, raman = _shifts(params, env, v)
    d = np.asarray(delta_e, dtype=float)[..., None]
    chi1 = decompose(params, d - single).chi1
    chi2 = decompose(params, d - raman).chi2
    return (chi1 * w).sum(-1), (chi2 * w).sum(-1)


def evaluate_chi(params: SystemParams, delta_e, mode: str = "exact", env: DopplerEnv | None = None,
                 quad_order: int = DEFAULT_QUAD_ORDER):
    """Susceptibility in the requested mode.  Returns (χ, terms-or-None)."""
    if mode == "exact":
        return susceptibility(params, delta_e), None
    if mode == "decomposed":
        dec = decompose(params, delta_e)
        return dec.total, {"chi1": dec.chi1, "chi2": dec.chi2, "chi3": dec.chi3}
    if mode == "doppler":
        if env is None:
            raise ValueError("doppler mode requires a DopplerEnv")
        return doppler_susceptibility(params, env, delta_e, quad_order), None
    raise ValueError(f"mode must be one of {MODES} (got {mode!r})")


def scan_spectrum(
    params: SystemParams,
    window,
    mode: str = "exact",
    normalized: bool = True,
    *,
    env: DopplerEnv | None = None,
    norm: float | None = None,
    n_coarse: int = 2001,
    n_feature: int = 400,
    span: float = 30.0,
    extra_markers=(),
    quad_order: int = DEFAULT_QUAD_ORDER,
) -> Spectrum:
    """Sample χ over ``window`` on a composite grid.

    With ``normalized`` both columns are divided by ``norm`` or, when that is
    None, by the largest absorption inside the window.
    """
    markers = list(feature_markers(params)) + list(extra_markers)
    grid, spec = composite_grid(window, markers, n_coarse, n_feature, span)
    chi, terms = evaluate_chi(params, grid, mode, env, quad_order)
    absorption = -np.imag(chi)
    dispersion = np.real(chi)
    scale = 1.0
    if normalized:
        scale = float(norm) if norm is not None else float(np.max(absorption))
        if not scale > 0:
            raise NsitError("maximum absorption in window is not positive; cannot normalize")
        absorption = absorption / scale
        dispersion = dispersion / scale
        if terms is not None:
            terms = {k: v / scale for k, v in terms.items()}
    return Spectrum(
        delta_e=grid, absorption=absorption, dispersion=dispersion, normalization=scale,
        grid_spec=spec, mode=mode, params=params, env=env, terms=terms,
    )


def reference_absorption(params: SystemParams, mode: str = "exact", env: DopplerEnv | None = None) -> float:
    """Peak absorption of the whole line, the common normalization across a sweep."""
    reach = 10 * params.gamma_e
    grid, _ = composite_grid((-reach, reach), feature_markers(params), n_coarse=4001, n_feature=200)
    chi, _ = evaluate_chi(params, grid, mode, env)
    return float(np.max(-np.imag(chi)))


def lorentzian_spectrum(center: float, width: float, amplitude: float, window=None, baseline: float = 0.0,
                        n_coarse: int = 2001, n_feature: int = 400) -> Spectrum:
    """Synthetic absorptive Lorentzian on the composite grid (for testing the extractor)."""
    window = window or (center - 50 * width, center + 50 * width)
    grid, spec = composite_grid(window, [("line", center, width)], n_coarse, n_feature)
    x = (grid - center) / (width / 2)
    absorption = baseline + amplitude / (1 + x**2)
    dispersion = -amplitude * x / (1 + x**2)
    return Spectrum(grid, absorption, dispersion, 1.0, spec, mode="synthetic")


# ----------------------------------------------------------------------------
# feature extraction


def _expected_width(params: SystemParams, kind: FeatureKind) -> float:
    if kind is FeatureKind.BACKGROUND:
        return background_width(params)
    if kind is FeatureKind.EIT:
        return eit_width(params)
    return nsit_width(params)


def _baseline(spectrum: Spectrum, kind: FeatureKind, center: float) -> float:
    """Local baseline in the spectrum's units: the decomposition terms beneath the feature."""
    params = spectrum.params
    if kind is FeatureKind.BACKGROUND or params is None:
        return 0.0
    if spectrum.mode == "doppler" and spectrum.env is not None:
        chi1, chi2 = _doppler_terms(params, spectrum.env, center, DEFAULT_QUAD_ORDER)
    else:
        dec = decompose(params, center)
        chi1, chi2 = dec.chi1, dec.chi2
    under = chi1 if kind is FeatureKind.EIT else chi1 + chi2
    return float(-np.imag(under)) / spectrum.normalization


def _crossing(interp, x, signal, level, start, step):
    """Walk from ``start`` in direction ``step`` until ``signal`` drops below ``level``; refine by root finding."""
    i = start
    n = x.size
    while 0 <= i + step < n:
        j = i + step
        if signal[j] <= level:
            lo, hi = sorted((x[i], x[j]))
            if signal[j] == level:
                return float(x[j])
            return brentq(lambda t: interp(t) - level, lo, hi, xtol=1e-15 * max(abs(lo), abs(hi), 1e-300), rtol=1e-14)
        i = j
    return None


def extract_feature(
    spectrum: Spectrum,
    kind,
    expected_center: float,
    expected_width: float | None = None,
    baseline: float | None = None,
) -> SignalFeature:
    """Locate the feature nearest ``expected_center`` and measure it.

    The amplitude is the height (peak) or depth (dip) relative to a local
    baseline taken from the decomposition at the feature center: χ1 under
    the EIT window, χ1+χ2 under the exchange feature, zero for the
    background line.  The FWHM is the distance between the half-amplitude
    crossings of a monotone cubic interpolant of the samples.  For the
    exchange feature, the lobe with the larger excursion decides between
    NSIA (above baseline) and NSIT (below).
    """
    kind = FeatureKind.parse(kind)
    x = spectrum.delta_e
    y = spectrum.absorption
    if expected_width is None:
        if spectrum.params is None:
            raise ValueError("expected_width is required for spectra without parameters")
        expected_width = _expected_width(spectrum.params, kind)
    w = float(expected_width)
    if not w > 0:
        raise ValueError("expected_width must be positive")

    near = np.abs(x - expected_center) <= 5 * w
    if np.count_nonzero(near) < 3:
        raise FeatureNotFound(f"no samples within ±5 widths of {expected_center:.6g}")
    core = np.count_nonzero(np.abs(x - expected_center) <= w / 2)
    if core < 20:
        raise UnderResolved(f"only {core} samples within one expected width ({w:.3g}) of the center")

    idx = np.flatnonzero(near)
    if baseline is None:
        baseline = _baseline(spectrum, kind, expected_center)
    sig = y[idx] - baseline

    if kind is FeatureKind.BACKGROUND:
        sign = 1.0
    elif kind is FeatureKind.EIT:
        sign = -1.0
    else:
        # dominant lobe decides NSIA vs NSIT
        sign = 1.0 if sig.max() >= -sig.min() else -1.0
    k = int(np.argmax(sign * sig))
    # excursions at rounding level are not features
    floor = _NOISE_FLOOR * max(np.max(np.abs(y[idx])), abs(baseline))
    if k in (0, sig.size - 1) or sign * sig[k] <= floor:
        raise FeatureNotFound(f"no {kind.value} extremum within ±5 widths of {expected_center:.6g}")

    flags = []
    detected = kind
    if kind in (FeatureKind.NSIA, FeatureKind.NSIT):
        detected = FeatureKind.NSIA if sign > 0 else FeatureKind.NSIT
        if detected is not kind:
            flags.append(f"requested {kind.value}, dominant lobe is {detected.value}")
        other = max(-sign * sig.min(), -sign * sig.max(), 0.0) if sign < 0 else max(-sig.min(), 0.0)
        if other > 0.2 * sign * sig[k]:
            flags.append("dispersive")

    # monotone cubic through the whole spectrum, sign-flipped so the extremum is a maximum
    full = sign * (y - baseline)
    interp = PchipInterpolator(x, full, extrapolate=False)
    g = idx[k]
    res = minimize_scalar(lambda t: -interp(t), bounds=(x[g - 1], x[g + 1]), method="bounded",
                          options={"xatol": 1e-12 * max(w, 1e-300)})
    center = float(res.x) if -res.fun >= full[g] else float(x[g])
    peak = float(max(-res.fun, full[g]))
    half = peak / 2

    left = _crossing(interp, x, full, half, g, -1)
    right = _crossing(interp, x, full, half, g, +1)
    if left is None or right is None:
        raise FeatureNotFound("half-amplitude crossing lies outside the spectrum")
    fwhm = right - left
    if not fwhm > 0:
        raise UnderResolved("degenerate half-amplitude crossings")

    fwhm_hz = None
    if spectrum.params is not None:
        fwhm_hz = fwhm * spectrum.params.gamma0_hz
    return SignalFeature(
        kind=detected, center=center, fwhm=fwhm, amplitude=peak, baseline=baseline,
        fwhm_hz=fwhm_hz, flags=tuple(flags),
    )


# ----------------------------------------------------------------------------
# sweeps


def _rebuild(params: SystemParams, var: str, value: float) -> SystemParams:
    if var == "J":
        return params.replace(j_exchange=value)
    if var == "b_tilde":
        return params.replace(b_tilde=value)
    if var == "omega":
        return params.replace(omega_c_rabi=value)
    raise ValueError(f"sweep variable must be one of {SWEEP_VARS} (got {var!r})")


def _predicted(params: SystemParams, kind: FeatureKind):
    if kind is FeatureKind.BACKGROUND:
        return background_center(params), background_width(params)
    if kind is FeatureKind.EIT:
        return eit_center(params), eit_width(params)
    return nsit_center(params), nsit_width(params)


def measure_feature(params: SystemParams, kind, mode: str = "exact", env: DopplerEnv | None = None,
                    window_widths: float = 40.0, norm: float | None = None) -> SignalFeature:
    """Scan a window sized to the predicted feature and extract it.

    Absorption is normalized by the peak of the full line (or ``norm``) so
    amplitudes are comparable between parameter sets.
    """
    kind = FeatureKind.parse(kind)
    if kind in (FeatureKind.NSIA, FeatureKind.NSIT) and params.j_exchange == 0:
        raise FeatureNotFound("no exchange feature without spin exchange (J = 0)")
    center, width = _predicted(params, kind)
    if norm is None:
        norm = reference_absorption(params, mode if mode != "doppler" else "exact", env)
    window = (center - window_widths * width, center + window_widths * width)
    spec = scan_spectrum(params, window, mode, True, env=env, norm=norm)
    return extract_feature(spec, kind, center, width)


def sweep_feature(params: SystemParams, sweep_var: str, values, kind, *, mode: str = "exact",
                  env: DopplerEnv | None = None, threads: int | None = None) -> list[SweepPoint]:
    """Extract one feature per swept value; failures are recorded per point, not raised."""
    values = list(values)
    if not values:
        raise ValueError("values must be non-empty")
    kind = FeatureKind.parse(kind)
    if sweep_var not in SWEEP_VARS:
        raise ValueError(f"sweep variable must be one of {SWEEP_VARS} (got {sweep_var!r})")

    def one(value):
        try:
            p = _rebuild(params, sweep_var, value)
            return SweepPoint(value, measure_feature(p, kind, mode, env))
        except (NsitError, ValueError, ArithmeticError) as exc:
            return SweepPoint(value, None, f"{type(exc).__name__}: {exc}")

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, values))
    return [one(v) for v in values]


# ----------------------------------------------------------------------------
# interference and dispersion


def relative_phase(params: SystemParams, delta_e: float | None = None) -> float:
    """Phase between the exchange channel and the direct optical channel.

    The optical coherence is driven by iΩp(Γs/2 + iΔs) (direct probe path)
    and by JΩ·x_nk (path through the noble-gas spin and the control field).
    φ = arg of their ratio, evaluated at ``delta_e`` (default ω̄).
    """
    if params.j_exchange <= 0 or params.omega_c_rabi == 0:
        raise ValueError("relative phase needs J > 0 and a nonzero control field")
    if delta_e is None:
        delta_e = nsit_center(params)
    st = steady_state(params, delta_e)
    direct = 1j * params.omega_p_rabi * (params.gamma_s / 2 + 1j * (delta_e + params.zeeman_s)) * params.source_scale
    exchange = params.j_exchange * params.omega_c_rabi * st.x_nk
    phi = float(np.angle(exchange / direct))
    return math.pi if phi == -math.pi else phi


def dispersion_slope(params: SystemParams, center: float, mode: str = "exact",
                     env: DopplerEnv | None = None, width: float | None = None) -> float:
    """d(Re χ)/dΔe at ``center``: central difference with h = width/100, Richardson-extrapolated once.

    ``width`` defaults to the width of the predicted feature whose center is
    nearest ``center``.
    """
    if width is None:
        width = min(feature_markers(params), key=lambda m: (abs(m[1] - center), m[2]))[2]
    h = width / 100
    if not h > 8 * np.finfo(float).eps * max(abs(center), np.finfo(float).tiny):
        raise UnderResolved(f"finite-difference step {h:.3g} underflows at center {center:.6g}")
    offsets = np.array([-h, h, -h / 2, h / 2])
    chi, _ = evaluate_chi(params, center + offsets, mode, env)
    re = np.real(chi)
    d_h = (re[1] - re[0]) / (2 * h)
    d_half = (re[3] - re[2]) / h
    return float((4 * d_half - d_h) / 3)


def eit_slope(params: SystemParams, mode: str = "exact", env: DopplerEnv | None = None) -> float:
    """Dispersion slope at the EIT center of the bare Λ system (exchange switched off)."""
    bare = params.replace(j_exchange=0.0)
    return dispersion_slope(bare, eit_center(bare), mode, env, eit_width(bare))


def feature_slope(params: SystemParams, mode: str = "exact", env: DopplerEnv | None = None) -> float:
    """Dispersion slope at the predicted center ω̄ of the exchange feature."""
    return dispersion_slope(params, nsit_center(params), mode, env, nsit_width(params))


def group_velocity_ratio(params: SystemParams, mode: str = "exact", env: DopplerEnv | None = None) -> float:
    """v_g(NSIT)/v_g(EIT), i.e. slope at the EIT center over slope at the NSIT center."""
    if params.j_exchange <= 0:
        raise FeatureNotFound("no exchange feature without spin exchange (J = 0)")
    if params.b_tilde == 0:
        raise FeatureNotFound("the NSIT window needs a field offset (b_tilde != 0)")
    return eit_slope(params, mode, env) / feature_slope(params, mode, env)
