"""Exception hierarchy.

Every error carries a machine-readable ``error_class`` and a process exit code
so the CLI can map failures onto its exit-code contract without guessing.
"""


class UnitransError(Exception):
    error_class = "ERROR"
    exit_code = 1


class ConfigError(UnitransError, ValueError):
    error_class = "CONFIG_ERROR"
    exit_code = 2


class DimensionError(ConfigError):
    error_class = "DIMENSION_MISMATCH"


class InsufficientDataError(ConfigError):
    error_class = "INSUFFICIENT_DATA"


class AdapterError(UnitransError):
    error_class = "ADAPTER_ERROR"
    exit_code = 3


class UnknownKeyError(AdapterError, KeyError):
    error_class = "UNKNOWN_ADAPTER"

    def __str__(self):
        return Exception.__str__(self)


class FingerprintError(AdapterError):
    error_class = "FINGERPRINT_MISMATCH"


class NumericError(UnitransError, ArithmeticError):
    """Non-finite value during optimisation; ``state`` holds a diagnostic dump."""

    error_class = "NUMERIC_FAILURE"
    exit_code = 4

    def __init__(self, message: str = "", state: dict | None = None):
        super().__init__(message)
        self.state = state or {}


class DegenerateInputError(NumericError):
    error_class = "DEGENERATE_INPUT"


class MissingArtifactError(UnitransError, FileNotFoundError):
    error_class = "MISSING_ARTIFACT"
    exit_code = 5

    def __str__(self):
        return Exception.__str__(self)


class MissingStatsError(MissingArtifactError):
    error_class = "MISSING_STATS"
