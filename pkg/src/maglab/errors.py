"""Exception hierarchy shared across the package."""


class MaglabError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameter(MaglabError):
    """An operation was called with an argument outside its documented range."""


class GridMismatch(MaglabError):
    """Two wavefunctions (or a wavefunction and a context) live on different grids."""


class PacketUnresolved(MaglabError):
    """Requested packet width is below the grid resolution guard (width < 4*spacing)."""


class PacketNearBoundary(MaglabError):
    """Packet center is closer than four widths to the box boundary."""


class OrderTooHigh(MaglabError):
    """Requested semi-norm or composition order exceeds the cost cap."""


class UnresolvedState(MaglabError):
    """Too much mass near the box boundary; grid results would be meaningless."""


class WeightOverflow(MaglabError):
    """Exponential weight would overflow double precision on this box."""


class ZeroState(MaglabError):
    """Operation undefined on the zero wavefunction."""


class DerivativeOrderExceeded(MaglabError):
    """Field derivative requested beyond the model's closed-form cap."""


class NotAntisymmetric(MaglabError):
    """Matrix expected to be antisymmetric is not, beyond tolerance."""


class NotClosed(MaglabError):
    """The supplied 2-form is not closed (or the gauge postcondition failed)."""


class NoConvergence(MaglabError):
    """An iterative scheme hit its budget before reaching the target residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ResolutionTooCoarse(MaglabError):
    """Grid spacing does not resolve the magnetic length sqrt(h/b0)."""


class ZeroDenominator(MaglabError):
    """A ratio was requested with a vanishing denominator."""


class DerivativeCapExceeded(MaglabError):
    """Symbolic rewriting produced a multiplier derivative beyond the cap."""


class NotNormalForm(MaglabError):
    """A term was passed to a classifier without being in normal form."""


class StructureViolation(MaglabError):
    """A commutator expansion broke the expected single-field-factor structure."""

    def __init__(self, message, sigma=None, term=None):
        super().__init__(message)
        self.sigma = sigma
        self.term = term


class TooFewPoints(MaglabError):
    """Not enough valid data points for a fit."""


class InvalidRun(MaglabError):
    """Too many sweep rows were invalid for the result to be meaningful."""


class ConfigError(MaglabError):
    """Experiment configuration is malformed or violates an invariant."""
