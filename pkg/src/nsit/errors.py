"""Exception hierarchy shared by all nsit modules."""


class NsitError(Exception):
    """Base class for every error raised by the package."""


class InvalidParameters(NsitError, ValueError):
    """One or more physical parameters violate their invariants."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class DegenerateSystem(NsitError, ArithmeticError):
    """A relaxation rate and its detuning vanish together, so the steady state is singular."""


class InvalidVelocity(NsitError, ValueError):
    """Atomic velocity at or beyond the speed of light."""


class NotConverged(NsitError, ArithmeticError):
    """Quadrature did not converge under order doubling."""


class NoConvergence(NsitError, RuntimeError):
    """Time integration reached t_max before the steady-state criterion was met."""


class StiffnessFailure(NsitError, RuntimeError):
    """Adaptive step size underflowed (the system is too stiff for the explicit pair)."""


class FeatureNotFound(NsitError, LookupError):
    """No extremum was found near the expected feature center."""


class UnderResolved(NsitError, ValueError):
    """The sampling grid is too coarse to resolve the requested feature."""


class ConfigError(NsitError):
    """Base class for configuration problems (CLI exit code 2)."""


class ParseError(ConfigError):
    def __init__(self, message, line=None, key=None):
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class ValidationError(ConfigError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
