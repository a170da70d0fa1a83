"""Exception hierarchy shared by every module.

Each class carries the process exit code the CLI maps it to.
"""


class KacRelaxError(Exception):
    exit_code = 1


class ParameterError(KacRelaxError, ValueError):
    """Invalid parameter; ``field`` names the offending argument."""

    exit_code = 2

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class ConfigError(KacRelaxError, ValueError):
    exit_code = 2

    def __init__(self, message, key=None, line=None):
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.key = key
        self.line = line


class UnsupportedOperationError(KacRelaxError, TypeError):
    exit_code = 2


class NumericalQualityError(KacRelaxError, ArithmeticError):
    """A numerical check failed; carries the quantity and its tolerance."""

    exit_code = 3

    def __init__(self, message, quantity=None, tolerance=None):
        detail = []
        if quantity is not None:
            detail.append(f"value={quantity!r}")
        if tolerance is not None:
            detail.append(f"tolerance={tolerance!r}")
        if detail:
            message = f"{message} ({', '.join(detail)})"
        super().__init__(message)
        self.quantity = quantity
        self.tolerance = tolerance


class GridIncompatibilityError(NumericalQualityError):
    pass


class DomainTruncationError(NumericalQualityError):
    pass


class InversionQualityError(NumericalQualityError):
    pass


class InternalInconsistencyError(NumericalQualityError):
    pass


class InsufficientDataError(NumericalQualityError):
    pass


class ResourceLimitError(KacRelaxError, RuntimeError):
    exit_code = 4
