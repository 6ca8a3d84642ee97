"""Exception types shared across the package."""


class DomainError(ValueError):
    """Raised when inputs fall outside a function's mathematical domain."""


class DivergenceError(RuntimeError):
    """Raised when an integration or iteration produces non-finite values."""


class EstimatorError(ValueError):
    """Raised when a statistical estimator cannot be evaluated (constant
    input, rank-deficient design, empty bin, ...)."""


class ConfigError(ValueError):
    """Raised for invalid run configurations; carries the offending key path."""

    def __init__(self, message, key=None):
        super().__init__(message if key is None else f"{key}: {message}")
        self.key = key
