"""Exception hierarchy.

Two families: :class:`ConfigError` for bad inputs (the CLI maps these to exit
status 2) and :class:`NumericalError` for failures during computation (exit
status 3).
"""


class ConfigError(ValueError):
    pass


class NumericalError(RuntimeError):
    pass


class DegenerateCurveError(ConfigError):
    pass


class NonUniqueClosestPoint(NumericalError):
    pass


class TubeTooWide(ConfigError):
    pass


class EmptyBandError(ConfigError):
    pass


class StencilError(NumericalError):
    """A stencil point that should be in the band is missing."""


class InvalidOverlap(ConfigError):
    pass


class EmptySubdomain(ConfigError):
    pass


class NoConvergence(NumericalError):
    def __init__(self, iterations, residual):
        super().__init__(
            f"no convergence after {iterations} iterations "
            f"(relative residual {residual:.3e})")
        self.iterations = iterations
        self.residual = residual
