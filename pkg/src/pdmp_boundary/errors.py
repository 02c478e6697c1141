"""Exception types raised across the package."""


class PDMPError(Exception):
    """Base class for all package errors."""


class BoundaryAmbiguous(PDMPError):
    """A point lies on (or numerically at) a discontinuity, or no region claims it."""


class DegenerateBoundary(PDMPError):
    """Both sides of a facet have the same density at the hit point."""


class NotFinite(PDMPError):
    """Enumeration was requested for a continuous velocity law."""


class UnsupportedCombination(PDMPError):
    """No boundary kernel exists for the requested (sampler, velocity space) pair."""


class EmptyPositiveCone(PDMPError):
    """No velocity atom points strictly into the higher-density side."""


class NoExit(PDMPError):
    """The Zig-Zag boundary-layer walk never reached an exit threshold."""


class BoundViolation(PDMPError):
    """A thinned event rate exceeded the supplied upper bound."""


class ZeroGradient(PDMPError):
    """A BPS bounce was requested where the log-density gradient vanishes."""


class StuckAtBoundary(PDMPError):
    """Too many consecutive boundary events without the clock advancing."""


class NotClosedForm(PDMPError):
    """The kernel has no closed-form transition matrix."""


class EnvelopeViolation(PDMPError):
    """A density evaluation exceeded the rejection-sampling envelope."""


class InvarianceViolation(PDMPError):
    """An l-invariance residual exceeded the requested tolerance."""


class SchemaMismatch(PDMPError):
    """Trajectory CSV files with incompatible headers were combined."""
