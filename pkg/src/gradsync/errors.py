"""Exception taxonomy shared across the package.

Every anticipated failure mode gets its own type so callers (and the
CLI) can tell a usage error from a numerical one.
"""


class GradsyncError(Exception):
    """Base class for all package errors."""


class ShapeError(GradsyncError, ValueError):
    """Matrix has the wrong shape for the declared manifold kind."""


class KindMismatchError(GradsyncError, ValueError):
    """Operation mixing points of different manifold kinds."""


class FeasibilityError(GradsyncError, ValueError):
    """Matrix violates the manifold constraint beyond tolerance."""


class CapabilityError(GradsyncError, NotImplementedError):
    """Operation not available for this manifold kind (e.g. log on
    a Stiefel manifold with 1 < p < n)."""


class InjectivityError(GradsyncError, ValueError):
    """log_map target at or beyond the domain boundary (antipodal
    point, angle-pi rotation, opposite O(n) component)."""


class PreconditionError(GradsyncError, ValueError):
    """Input violates a documented precondition (bad spacing sum,
    disconnected graph, non-equilibrium probe point, ...)."""


class ConfigError(GradsyncError, ValueError):
    """Malformed config string, flag combination or config file."""


class NumericalBlowupError(GradsyncError, RuntimeError):
    """Non-finite values appeared during integration."""


class IntegrationError(GradsyncError, RuntimeError):
    """Flow evaluation failed mid-trajectory; carries time and edge."""

    def __init__(self, message, t=None, edge=None):
        super().__init__(message)
        self.t = t
        self.edge = edge
