"""Exception types raised by the bound, oracle and design routines."""


class NearFieldError(Exception):
    """Base class for all package errors."""


class DegenerateGeometry(NearFieldError, ValueError):
    """Source lies (numerically) on the array segment; the delay model breaks down."""


class IllConditioned(NearFieldError, ArithmeticError):
    """Fisher matrix too ill-conditioned for a trustworthy numeric inverse."""


class NearSingular(NearFieldError, ArithmeticError):
    """Energy-term determinant vanishes; the closed-form bound diverges."""


class NotAchievable(NearFieldError):
    """No sensor count up to the search limit meets the target."""


class EmptySearchRegion(NearFieldError, ValueError):
    """ML search region contains no valid candidate."""
