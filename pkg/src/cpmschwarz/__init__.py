"""Closest point method on closed curves with two-subdomain Schwarz.

Modules
-------
curve      parametrised closed curves, arclength and closest points
band       computational tube, interpolation and the discrete operator
sparsela   sparse storage, GMRES and direct solves
schwarz    arclength partitions and restricted additive Schwarz
theory     iteration matrix and contraction bounds for the periodic model
cli        command-line front end
"""

from .errors import (ConfigError, DegenerateCurveError, EmptyBandError,
                     EmptySubdomain, InvalidOverlap, NoConvergence,
                     NonUniqueClosestPoint, NumericalError, StencilError,
                     TubeTooWide)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DegenerateCurveError", "EmptyBandError",
    "EmptySubdomain", "InvalidOverlap", "NoConvergence",
    "NonUniqueClosestPoint", "NumericalError", "StencilError", "TubeTooWide",
]
