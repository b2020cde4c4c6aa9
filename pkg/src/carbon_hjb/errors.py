"""Exception hierarchy shared across the package."""


class CarbonHJBError(Exception):
    """Base class for all package errors."""


class ValidationError(CarbonHJBError, ValueError):
    pass


class MuNotGreaterThanR(ValidationError):
    def __init__(self, mu: float, r: float):
        super().__init__(f"drift mu={mu} must exceed discount rate r={r}")
        self.mu = mu
        self.r = r


class NonPositiveCoefficient(ValidationError):
    def __init__(self, field: str, value: float):
        super().__init__(f"coefficient {field}={value} must be positive")
        self.field = field
        self.value = value


class InvalidSpec(ValidationError):
    pass


class EmptySurface(CarbonHJBError):
    pass


class NewtonDiverged(CarbonHJBError):
    def __init__(self, time_index: int, residual: float, iterations: int):
        super().__init__(
            f"Newton failed at time index {time_index}: residual {residual:.3e} "
            f"after {iterations} iterations"
        )
        self.time_index = time_index
        self.residual = residual
        self.iterations = iterations


class SliceNotStored(CarbonHJBError):
    pass


class LeftBoundaryNotVanishing(CarbonHJBError):
    pass


class NonmonotoneSlice(CarbonHJBError):
    pass


class NonmonotoneRow(CarbonHJBError):
    pass


class GridMismatch(CarbonHJBError):
    pass


class MissingSurface(CarbonHJBError):
    pass


class InvalidCounts(CarbonHJBError, ValueError):
    pass


class NonpositivePrice(CarbonHJBError, ValueError):
    pass


class ParseError(CarbonHJBError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class MissingArtifacts(CarbonHJBError):
    pass
