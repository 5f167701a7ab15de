"""Numerical checks for nonuniform (h-)dichotomies of linear ODE systems."""

__version__ = "0.1.0"

from .errors import (ConfigError, DichoscopeError, DomainError, EvalError, IntegrationError,  # noqa: E402
                     ParseError)
from .report import CheckReport  # noqa: E402

__all__ = [
    "__version__", "CheckReport", "ConfigError", "DichoscopeError", "DomainError", "EvalError",
    "IntegrationError", "ParseError",
]
