from __future__ import annotations


class KiteUpsetError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(KiteUpsetError, ValueError):
    """Invalid campaign configuration or parameter set."""


class SchemaError(KiteUpsetError, ValueError):
    """Feature vector or artifact does not match the expected schema."""


class NumericalFailure(KiteUpsetError, RuntimeError):
    """A computation produced non-finite or degenerate values."""


class DegenerateLevelError(NumericalFailure):
    """Subset-simulation level has no sample strictly above its threshold."""


class SvmTrainingError(NumericalFailure):
    """SMO solver did not reach the KKT tolerance."""


def require(condition: bool, field: str, message: str) -> None:
    if not condition:
        raise ConfigError(f"{field}: {message}")
