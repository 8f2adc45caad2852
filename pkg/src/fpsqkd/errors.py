"""Exception hierarchy shared by all fpsqkd modules."""


class FPSError(Exception):
    """Base class for toolkit errors."""


class DomainError(FPSError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(FPSError, ValueError):
    """Invalid or inconsistent configuration."""

    def __init__(self, message: str, lineno: int | None = None, path: str | None = None):
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if lineno is not None:
            where += f"{lineno}:"
        super().__init__(f"{where} {message}" if where else message)


class FormatError(FPSError, ValueError):
    """Malformed input data (waveform files, incompatible grids)."""


class EstimatorError(FPSError, ArithmeticError):
    """A decoy-state estimator could not produce a meaningful bound."""


class DegenerateLinkError(EstimatorError):
    """The channel transmits nothing (zero single-photon yield)."""
