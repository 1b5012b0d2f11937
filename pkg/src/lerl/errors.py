"""Exception hierarchy shared by every module."""


class LerlError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(LerlError, ValueError):
    pass


class NumericalError(LerlError, ArithmeticError):
    pass


class FormatError(LerlError, ValueError):
    pass


class StateError(LerlError, RuntimeError):
    pass


class InfeasibleMaskError(DomainError):
    """Fewer eligible items than the list length."""


class ConfigError(LerlError, ValueError):
    pass


class IoError(LerlError, OSError):
    pass
