from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any


class Profile(Enum):
    SUBMISSION = "Submission"
    TRIAGE = "Triage"
    DISCLOSURE = "Disclosure"

    @classmethod
    def parse(cls, text: str) -> "Profile":
        for p in cls:
            if p.value.lower() == str(text).lower():
                return p
        raise ValueError(f"unknown validation profile {text!r}")


class FindingLevel(Enum):
    ERROR = "Error"
    WARNING = "Warning"


@dataclass(frozen=True)
class Finding:
    code: str
    path: str
    message: str
    level: FindingLevel = FindingLevel.ERROR

    def to_dict(self) -> dict[str, str]:
        return {"code": self.code, "path": self.path, "message": self.message, "level": self.level.value}


@dataclass(frozen=True)
class ValidationReport:
    profile: Profile | None
    findings: tuple[Finding, ...] = ()

    @property
    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.level is FindingLevel.ERROR]

    @property
    def warnings(self) -> list[Finding]:
        return [f for f in self.findings if f.level is FindingLevel.WARNING]

    @property
    def valid(self) -> bool:
        return not self.errors

    def codes(self) -> set[str]:
        return {f.code for f in self.findings}

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        if self.profile is not None:
            out["profile"] = self.profile.value
        out["valid"] = self.valid
        out["findings"] = [f.to_dict() for f in self.findings]
        return out
