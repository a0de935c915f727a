"""Exception types shared across the package."""


class ResolutionError(RuntimeError):
    """The grid cannot represent the requested quantity accurately."""


class CalibrationError(RuntimeError):
    """A drift-multiplier constant disagrees with its quadrature oracle."""


class EngineAbort(RuntimeError):
    """A time-stepping engine stopped before reaching its final time."""

    def __init__(self, message, trajectory=None, diagnostics=None):
        super().__init__(message)
        self.trajectory = trajectory
        self.diagnostics = diagnostics


class ConfigError(ValueError):
    """Invalid run configuration."""
