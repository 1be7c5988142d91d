"""Exception types shared across the package."""


class IfwavesError(Exception):
    """Base class for package errors."""


class ConfigError(IfwavesError):
    """Malformed or inconsistent configuration input."""


class NoConvergence(IfwavesError):
    """An iterative solver failed to reach its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class OrderViolation(IfwavesError):
    """Firing offsets lost monotonicity or the speed left the admissible cone."""


class ValidationFailed(IfwavesError):
    """A converged root violates the sub-threshold condition."""


class InsufficientEvents(IfwavesError):
    """A trajectory does not contain enough firing events for the requested fit."""


class IntegrationError(IfwavesError):
    """Event-driven integration failed to bracket a firing time."""


class LevelNotCrossed(IfwavesError):
    """A synaptic snapshot never crosses the requested level."""


class TangencyOrderViolation(IfwavesError):
    """A grazing tangency offset fell at or before the last firing offset."""


class ZeroFrequencyCollapse(IfwavesError):
    """A Hopf solve collapsed onto the trivial zero-frequency root."""


class CorrectorFailure(IfwavesError):
    """Pseudo-arclength corrector failed below the minimum step size."""
