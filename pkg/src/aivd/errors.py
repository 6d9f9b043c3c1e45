"""Error type shared by every module.

Errors carry a stable ``code`` token (``NOT_FOUND``, ``BAD_ID``, ...). The
HTTP layer and the CLI map codes to status codes and exit codes, so the code
strings are part of the public interface.
"""

from __future__ import annotations

from typing import Any


class AivdError(Exception):
    def __init__(self, code: str, message: str, details: Any = None) -> None:
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message
        self.details = details

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"code": self.code, "message": self.message}
        if self.details is not None:
            out["details"] = self.details
        return out


class ValidationFailed(AivdError):
    """Raised when a record or AIBOM fails the validation profile required by an operation."""

    def __init__(self, report: Any, message: str = "validation failed") -> None:
        errors = [f for f in report.findings if f.level.value == "Error"]
        if errors:
            message = f"{message}: " + "; ".join(f"{f.path}: {f.message}" for f in errors[:3])
        super().__init__("VALIDATION_FAILED", message, report.to_dict())
        self.report = report
