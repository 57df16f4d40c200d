"""Exception types shared across the toolkit."""


class SabrkitError(Exception):
    """Base class for all toolkit-specific failures."""


class PriceOutOfBounds(SabrkitError, ValueError):
    """Option price outside the invertible interval (intrinsic, forward)."""


class NoConvergence(SabrkitError, RuntimeError):
    """Iterative solver exhausted its iteration budget."""


class DomainError(SabrkitError, ValueError):
    """Input left the mathematical validity domain of a formula."""


class NegativeVol(SabrkitError, ValueError):
    """Closed-form volatility came out nonpositive (outside validity domain)."""


class ConfigError(SabrkitError, ValueError):
    """Invalid engine or pipeline configuration."""


class NonFinite(SabrkitError, ArithmeticError):
    """A computation produced NaN or infinity."""


class ShapeMismatch(SabrkitError, ValueError):
    """Array shapes inconsistent with the network architecture."""


class Diverged(SabrkitError, RuntimeError):
    """Training produced a non-finite validation loss."""


class DegenerateReference(SabrkitError, ValueError):
    """Reference series has no variance; R^2 undefined."""


class EmptyRegion(SabrkitError, ValueError):
    """A requested evaluation region contains no rows."""
