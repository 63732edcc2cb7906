"""Exception hierarchy shared by all pipeline stages."""


class SpectralRiskError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatchError(SpectralRiskError, ValueError):
    pass


class NotPSDError(SpectralRiskError, ValueError):
    """A matrix had an eigenvalue below the PSD slack."""

    def __init__(self, eigenvalue: float, message: str | None = None):
        self.eigenvalue = eigenvalue
        super().__init__(message or f"matrix is not positive semidefinite: eigenvalue {eigenvalue:.3e}")


class NotDensityMatrixError(SpectralRiskError, ValueError):
    pass


class EigenConvergenceError(SpectralRiskError, ArithmeticError):
    pass


class EmptyClusterError(SpectralRiskError, ValueError):
    pass


class SchemaError(SpectralRiskError, ValueError):
    pass


class ConfigError(SpectralRiskError, ValueError):
    pass


class GeoJSONError(SpectralRiskError, ValueError):
    pass
