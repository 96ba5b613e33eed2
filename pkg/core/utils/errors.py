# Exception hierarchy shared by every core module


class DftError(Exception):
    """Base class for all errors raised by the toolkit."""

    error_type = "dft_error"

    def details(self) -> dict:
        return {}


class ConfigurationError(DftError, ValueError):
    error_type = "configuration_error"


class ConfigValidationError(ConfigurationError):
    """Raised once with every violation found in a config."""

    error_type = "validation_error"

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.violations))

    def details(self) -> dict:
        return {"violations": self.violations}


class UnsupportedConfigurationError(ConfigurationError):
    error_type = "unsupported_configuration"


class ShapeError(DftError, ValueError):
    error_type = "shape_error"


class NumericError(DftError, ArithmeticError):
    error_type = "numeric_error"

    def __init__(self, message, index=None):
        self.index = index
        if index is not None:
            message = f"{message} (row {index})"
        super().__init__(message)

    def details(self) -> dict:
        return {"index": self.index}


class StateError(DftError, RuntimeError):
    error_type = "state_error"


class ParseError(DftError, ValueError):
    error_type = "parse_error"

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        super().__init__(f"{message} (row {row}, column {column!r})")

    def details(self) -> dict:
        return {"row": self.row, "column": self.column}


class SourceExhaustedError(DftError, LookupError):
    error_type = "source_exhausted"

    def __init__(self, requested, available):
        self.requested = requested
        self.available = available
        super().__init__(
            f"sample source exhausted: requested {requested} points, "
            f"{available} available (short by {requested - available})"
        )

    def details(self) -> dict:
        return {"requested": self.requested, "available": self.available}
