from __future__ import annotations

from typing import Any, Dict, Optional


class TwoWayError(Exception):
    """Base for every error raised by this package."""


class ValidationError(TwoWayError, ValueError):
    pass


class StateSpaceError(ValidationError):
    def __init__(self, what: str, required: int, ceiling: int):
        self.required = int(required)
        self.ceiling = int(ceiling)
        super().__init__(
            f"{what} needs {self.required} cells, above the ceiling of {self.ceiling}"
        )


class InfeasibleError(TwoWayError, ValueError):
    def __init__(self, message: str, minimal: Optional[Dict[str, Any]] = None):
        self.minimal = dict(minimal or {})
        super().__init__(message)


class ConvergenceError(TwoWayError, RuntimeError):
    pass


class ConsistencyError(TwoWayError, RuntimeError):
    pass


class ConfigError(TwoWayError, ValueError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
