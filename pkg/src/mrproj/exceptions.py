"""Exception types raised by mrproj."""


class ConfigurationError(ValueError):
    """Inconsistent estimator configuration (e.g. an empty resolution range)."""


class BasisConstructionError(RuntimeError):
    """The scaling-function table could not be built."""


class FitError(RuntimeError):
    """A local least-squares fit failed numerically."""


class PreconditionError(ValueError):
    """A bound was evaluated outside the domain where it holds."""
