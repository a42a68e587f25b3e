"""
Exception hierarchy shared by every module
"""

from typing import Any, Dict, Optional


class BiasMadError(Exception):
    """Base class for all toolkit errors"""


class UsageError(BiasMadError, ValueError):
    """Malformed input: mismatched atoms, wrong lengths, bad parameter values"""


class PreconditionError(BiasMadError, ValueError):
    """A mathematical precondition of an operation does not hold"""

    def __init__(self, message: str, detail: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.detail = dict(detail or {})


class UnsupportedError(BiasMadError, NotImplementedError):
    """The requested regime is outside what the implementation can evaluate"""


class ConfigError(UsageError):
    """Configuration file could not be parsed"""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
