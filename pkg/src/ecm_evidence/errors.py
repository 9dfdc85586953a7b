"""Exception hierarchy; each fatal error carries the CLI exit code."""

from __future__ import annotations

from .constants import EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC


class EcmEvidenceError(Exception):
    exit_code = 1


class ConfigError(EcmEvidenceError):
    exit_code = EXIT_CONFIG


class DataError(EcmEvidenceError):
    exit_code = EXIT_DATA


class InvalidGrid(DataError):
    pass


class DatasetSchemaError(DataError):
    def __init__(self, field: str, message: str | None = None) -> None:
        self.field = field
        super().__init__(message or f"dataset schema error: missing or invalid field '{field}'")


class MissingMetadata(DataError):
    pass


class NumericError(EcmEvidenceError):
    exit_code = EXIT_NUMERIC


class DegenerateParams(NumericError):
    pass


class NonPsdCovariance(NumericError):
    pass


class CholeskyFailure(NumericError):
    pass


class NegativeRadicand(NumericError):
    pass


class DegenerateWeights(NumericError):
    def __init__(self, ess: float, minimum: float) -> None:
        self.ess = ess
        self.minimum = minimum
        super().__init__(f"effective sample size {ess:.3g} below {minimum:g}")


class WarpOverflow(NumericError):
    pass
