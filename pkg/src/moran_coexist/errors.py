from __future__ import annotations

from typing import Any, Optional


class MoranError(Exception):
    """Base class for every error raised by moran_coexist."""


class ConfigError(MoranError, ValueError):
    pass


class InvalidStateError(MoranError, ValueError):
    pass


class AbsorbingStateError(InvalidStateError):
    pass


class SingularPointError(MoranError, ValueError):
    pass


class FixedPointError(MoranError, ValueError):
    pass


class DomainError(MoranError, ValueError):
    pass


class NearSingularError(MoranError, ValueError):
    pass


class QuadratureError(MoranError, RuntimeError):
    def __init__(self, message: str, location: Optional[float] = None):
        super().__init__(message if location is None else f"{message} (at x={location!r})")
        self.location = location


class IntegrationError(MoranError, RuntimeError):
    pass


class TruncatedRunError(MoranError, RuntimeError):
    def __init__(self, message: str, partial: Any = None):
        super().__init__(message)
        self.partial = partial
