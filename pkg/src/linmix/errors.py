"""Exception types shared across the package."""


class SpecError(ValueError):
    """Raised when a process, policy or experiment description is invalid."""


class NumericalError(RuntimeError):
    """Raised when a factorization or root-find fails where it should not."""
