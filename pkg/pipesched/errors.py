"""
Exception types raised across pipesched
"""

from typing import Dict, List, Optional


class PipeschedError(Exception):
    """Base class for every error the toolkit raises on purpose"""


class ModelError(PipeschedError):
    pass


class ValidationError(PipeschedError):
    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations) or "invalid model")


class ProfileError(PipeschedError):
    pass


class ScheduleError(PipeschedError):
    pass


class RoutingError(PipeschedError):
    pass


class DeadlockError(PipeschedError):
    def __init__(self, message: str, snapshot: Optional[Dict[str, object]] = None):
        self.snapshot = snapshot or {}
        super().__init__(message)


class UsageError(PipeschedError):
    pass
