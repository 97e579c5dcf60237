"""Rotation vectors of maps and flows on Riemannian covers, estimated through geodesic escorts."""

__version__ = "0.1.0"

from .errors import (CheckFailure, ConfigError, DomainError, DomainExitError, EscortLabError,  # noqa: E402
                     FitError, LiftError, NumericError, PreconditionError, UnsupportedModelError,
                     VisibilityError)
from .models import ModelId, ModelPoint, ModelVector  # noqa: E402

__all__ = ["__version__", "CheckFailure", "ConfigError", "DomainError", "DomainExitError", "EscortLabError",
           "FitError", "LiftError", "NumericError", "PreconditionError", "UnsupportedModelError",
           "VisibilityError", "ModelId", "ModelPoint", "ModelVector"]
