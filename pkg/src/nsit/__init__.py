"""Susceptibility of an alkali vapor coupled to noble-gas nuclear spins.

Steady-state and time-domain solutions of the linear three-oscillator model,
its Lorentzian decomposition, Doppler averaging and spectral feature analysis.
"""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    SteadyState,
    SystemParams,
    reference_params,
    steady_state,
    steady_state_linear_solve,
    susceptibility,
)
from .decomposition import decompose, eit_width, nsit_center, nsit_width  # noqa: E402
from .doppler import DopplerEnv, doppler_susceptibility, doppler_width  # noqa: E402
from .dynamics import PolarizationState, TrajectoryConfig, integrate_to_steady_state  # noqa: E402
from .analysis import (  # noqa: E402
    FeatureKind,
    SignalFeature,
    Spectrum,
    extract_feature,
    group_velocity_ratio,
    relative_phase,
    scan_spectrum,
    sweep_feature,
)

__all__ = [
    "__version__",
    "SystemParams", "SteadyState", "reference_params", "steady_state", "steady_state_linear_solve", "susceptibility",
    "decompose", "eit_width", "nsit_center", "nsit_width",
    "DopplerEnv", "doppler_susceptibility", "doppler_width",
    "PolarizationState", "TrajectoryConfig", "integrate_to_steady_state",
    "FeatureKind", "SignalFeature", "Spectrum", "extract_feature", "group_velocity_ratio",
    "relative_phase", "scan_spectrum", "sweep_feature",
]
