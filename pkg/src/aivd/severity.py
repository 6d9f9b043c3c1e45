"""AI-adapted severity scoring.

The base arithmetic is CVSS v3.1 verbatim. Four AI impact metrics (data
poisoning, model inversion / membership inference, adversarial examples,
distribution shift) form a second impact group that is folded into the
impact sub-score through a coupling factor::

    ISC = 1 - (1 - ISC_base) * (1 - AI_COUPLING * ISC_ai)

With every AI metric at None the result is exactly the v3.1 base score.
Supplemental labels (Safety, Automatable, Recovery, Value Density) are
carried on the vector but never enter the arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from datetime import datetime
from enum import Enum
from typing import Any, Mapping

from .canonical import format_timestamp, parse_timestamp, utcnow
from .errors import AivdError

PREFIX = "AIVSS:1.0"
AI_COUPLING = 0.95
ISC_CAP = 0.915


class AttackVector(Enum):
    NETWORK = "N"
    ADJACENT = "A"
    LOCAL = "L"
    PHYSICAL = "P"


class AttackComplexity(Enum):
    LOW = "L"
    HIGH = "H"


class PrivilegesRequired(Enum):
    NONE = "N"
    LOW = "L"
    HIGH = "H"


class UserInteraction(Enum):
    NONE = "N"
    REQUIRED = "R"


class Scope(Enum):
    UNCHANGED = "U"
    CHANGED = "C"


class Level(Enum):
    HIGH = "H"
    LOW = "L"
    NONE = "N"


class Safety(Enum):
    PRESENT = "P"
    NEGLIGIBLE = "N"


class Automatable(Enum):
    YES = "Y"
    NO = "N"


class Recovery(Enum):
    AUTOMATIC = "A"
    USER = "U"
    IRRECOVERABLE = "I"


class ValueDensity(Enum):
    DIFFUSE = "D"
    CONCENTRATED = "C"


class Requirement(Enum):
    LOW = "L"
    MEDIUM = "M"
    HIGH = "H"

    @property
    def multiplier(self) -> float:
        return {"L": 0.5, "M": 1.0, "H": 1.5}[self.value]


class Band(Enum):
    NONE = "None"
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"
    CRITICAL = "Critical"

    @property
    def rank(self) -> int:
        return list(Band).index(self)


class Trigger(Enum):
    INITIAL = "Initial"
    MODEL_UPDATE = "ModelUpdate"
    DATA_DRIFT = "DataDrift"
    SCHEDULED = "Scheduled"
    MANUAL = "Manual"

    @classmethod
    def parse(cls, text: str) -> "Trigger":
        for t in cls:
            if t.value.lower() == str(text).replace("-", "").replace("_", "").lower():
                return t
        raise AivdError("BAD_TRIGGER", f"unknown trigger {text!r}")


# (vector key, attribute name, enum) in canonical rendering order.
SCORING_METRICS: tuple[tuple[str, str, type[Enum]], ...] = (
    ("AV", "av", AttackVector),
    ("AC", "ac", AttackComplexity),
    ("PR", "pr", PrivilegesRequired),
    ("UI", "ui", UserInteraction),
    ("S", "scope", Scope),
    ("C", "c", Level),
    ("I", "i", Level),
    ("A", "a", Level),
    ("DP", "dp", Level),
    ("MI", "mi", Level),
    ("AE", "ae", Level),
    ("DS", "ds", Level),
)
SUPPLEMENTAL_METRICS: tuple[tuple[str, str, type[Enum]], ...] = (
    ("SF", "safety", Safety),
    ("AU", "automatable", Automatable),
    ("RE", "recovery", Recovery),
    ("VD", "value_density", ValueDensity),
)
AI_ATTRS = ("dp", "mi", "ae", "ds")

AV_WEIGHT = {AttackVector.NETWORK: 0.85, AttackVector.ADJACENT: 0.62,
             AttackVector.LOCAL: 0.55, AttackVector.PHYSICAL: 0.20}
AC_WEIGHT = {AttackComplexity.LOW: 0.77, AttackComplexity.HIGH: 0.44}
PR_WEIGHT = {
    Scope.UNCHANGED: {PrivilegesRequired.NONE: 0.85, PrivilegesRequired.LOW: 0.62,
                      PrivilegesRequired.HIGH: 0.27},
    Scope.CHANGED: {PrivilegesRequired.NONE: 0.85, PrivilegesRequired.LOW: 0.68,
                    PrivilegesRequired.HIGH: 0.50},
}
UI_WEIGHT = {UserInteraction.NONE: 0.85, UserInteraction.REQUIRED: 0.62}
LEVEL_WEIGHT = {Level.HIGH: 0.56, Level.LOW: 0.22, Level.NONE: 0.0}


@dataclass(frozen=True)
class Supplemental:
    safety: Safety | None = None
    automatable: Automatable | None = None
    recovery: Recovery | None = None
    value_density: ValueDensity | None = None


@dataclass(frozen=True)
class SeverityVector:
    av: AttackVector
    ac: AttackComplexity
    pr: PrivilegesRequired
    ui: UserInteraction
    scope: Scope
    c: Level
    i: Level
    a: Level
    dp: Level = Level.NONE
    mi: Level = Level.NONE
    ae: Level = Level.NONE
    ds: Level = Level.NONE
    supplemental: Supplemental = field(default_factory=Supplemental)

    def render(self) -> str:
        parts = [PREFIX]
        parts += [f"{key}:{getattr(self, attr).value}" for key, attr, _ in SCORING_METRICS]
        for key, attr, _ in SUPPLEMENTAL_METRICS:
            value = getattr(self.supplemental, attr)
            if value is not None:
                parts.append(f"{key}:{value.value}")
        return "/".join(parts)

    __str__ = render

    def with_metrics(self, **changes: Any) -> "SeverityVector":
        return replace(self, **changes)


def parse_vector(text: str) -> SeverityVector:
    if not isinstance(text, str):
        raise AivdError("BAD_PREFIX", "vector must be a string")
    head, _, rest = text.strip().partition("/")
    if head != PREFIX:
        raise AivdError("BAD_PREFIX", f"vector must start with {PREFIX!r}")
    known = {key: (attr, enum) for key, attr, enum in SCORING_METRICS + SUPPLEMENTAL_METRICS}
    scoring_keys = {key for key, _, _ in SCORING_METRICS}
    seen: dict[str, Enum] = {}
    for pair in rest.split("/") if rest else []:
        key, sep, raw = pair.partition(":")
        if not sep or key not in known:
            raise AivdError("BAD_METRIC_VALUE", f"unrecognized metric component {pair!r}")
        if key in seen:
            raise AivdError("DUPLICATE_METRIC", f"metric {key} appears more than once")
        enum = known[key][1]
        try:
            seen[key] = enum(raw)
        except ValueError:
            allowed = ",".join(m.value for m in enum)
            raise AivdError("BAD_METRIC_VALUE", f"{key}:{raw} not in {{{allowed}}}") from None
    missing = [key for key, _, _ in SCORING_METRICS if key not in seen]
    if missing:
        raise AivdError("MISSING_METRIC", "missing metric(s): " + ", ".join(missing))
    scoring = {known[k][0]: v for k, v in seen.items() if k in scoring_keys}
    supplemental = Supplemental(**{known[k][0]: v for k, v in seen.items() if k not in scoring_keys})
    return SeverityVector(supplemental=supplemental, **scoring)


def roundup(x: float) -> float:
    """Smallest one-decimal value >= x.

    Works on a 1e-10 integer grid so that floating-point noise just above a
    tenth (e.g. 4.000000000000001) does not bump the result up a step.
    """
    scaled = round(x * 10**10)
    if scaled % 10**9 == 0:
        return scaled / 10**10
    return (scaled // 10**9 + 1) / 10.0


def _residual(levels: tuple[Level, ...], multipliers: tuple[float, ...] | None) -> float:
    # prod(1 - m*w), i.e. 1 - ISC for a group; capped when requirement multipliers apply
    if multipliers is None:
        prod = 1.0
        for level in levels:
            prod *= 1 - LEVEL_WEIGHT[level]
        return prod
    prod = 1.0
    for level, m in zip(levels, multipliers):
        prod *= 1 - m * LEVEL_WEIGHT[level]
    return max(prod, 1 - ISC_CAP)


def raw_score(
    v: SeverityVector,
    *,
    ai_coupling: float = AI_COUPLING,
    requirements: tuple[float, float, float, float] | None = None,
) -> float:
    """Unrounded score. ``requirements`` is (CR, IR, AR, AIR) for environmental scoring."""
    if requirements is None:
        base_rest = _residual((v.c, v.i, v.a), None)
        ai_rest = _residual((v.dp, v.mi, v.ae, v.ds), None)
    else:
        cr, ir, ar, air = requirements
        base_rest = _residual((v.c, v.i, v.a), (cr, ir, ar))
        ai_rest = _residual((v.dp, v.mi, v.ae, v.ds), (air,) * 4)
    isc_ai = 1 - ai_rest
    isc = 1 - base_rest * (1 - ai_coupling * isc_ai)

    if v.scope is Scope.UNCHANGED:
        impact = 6.42 * isc
    else:
        impact = 7.52 * (isc - 0.029) - 3.25 * (isc - 0.02) ** 15
    if impact <= 0:
        return 0.0
    exploitability = 8.22 * AV_WEIGHT[v.av] * AC_WEIGHT[v.ac] * PR_WEIGHT[v.scope][v.pr] * UI_WEIGHT[v.ui]
    if v.scope is Scope.UNCHANGED:
        return min(impact + exploitability, 10.0)
    return min(1.08 * (impact + exploitability), 10.0)


def rating(value: float) -> Band:
    if not 0.0 <= value <= 10.0 or not math.isclose(value * 10, round(value * 10), abs_tol=1e-9):
        raise AivdError("OUT_OF_RANGE", f"{value!r} is not a one-decimal score in [0.0, 10.0]")
    tenths = round(value * 10)
    if tenths == 0:
        return Band.NONE
    if tenths <= 39:
        return Band.LOW
    if tenths <= 69:
        return Band.MEDIUM
    if tenths <= 89:
        return Band.HIGH
    return Band.CRITICAL


@dataclass(frozen=True)
class SeverityScore:
    value: float
    band: Band
    vector: SeverityVector
    computed_at: datetime


def _score(raw: float, v: SeverityVector, now: datetime | None) -> SeverityScore:
    value = 0.0 if raw <= 0 else roundup(raw)
    return SeverityScore(value, rating(value), v, now or utcnow())


def compute_score(
    v: SeverityVector, *, now: datetime | None = None, ai_coupling: float = AI_COUPLING
) -> SeverityScore:
    return _score(raw_score(v, ai_coupling=ai_coupling), v, now)


@dataclass(frozen=True)
class EnvironmentalContext:
    overrides: Mapping[str, Enum] = field(default_factory=dict)
    cr: Requirement = Requirement.MEDIUM
    ir: Requirement = Requirement.MEDIUM
    ar: Requirement = Requirement.MEDIUM
    air: Requirement = Requirement.MEDIUM

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "EnvironmentalContext":
        """Decode ``{"overrides": {"MI": "N"}, "requirements": {"CR": "L", "AIR": "H"}}``."""
        if not isinstance(doc, Mapping):
            raise AivdError("MALFORMED_DOCUMENT", "environment must be a JSON object")
        by_key = {key: (attr, enum) for key, attr, enum in SCORING_METRICS}
        overrides: dict[str, Enum] = {}
        for key, raw in (doc.get("overrides") or {}).items():
            if key not in by_key:
                raise AivdError("BAD_METRIC_VALUE", f"cannot override unknown metric {key!r}")
            attr, enum = by_key[key]
            try:
                overrides[attr] = enum(raw)
            except ValueError:
                raise AivdError("BAD_METRIC_VALUE", f"{key}:{raw} is not a valid value") from None
        reqs = {}
        for key, raw in (doc.get("requirements") or {}).items():
            if key not in ("CR", "IR", "AR", "AIR"):
                raise AivdError("BAD_METRIC_VALUE", f"unknown requirement {key!r}")
            try:
                reqs[key.lower()] = Requirement(raw)
            except ValueError:
                raise AivdError("BAD_METRIC_VALUE", f"{key}:{raw} not in {{L,M,H}}") from None
        return cls(overrides=overrides, **reqs)


def apply_environmental(
    v: SeverityVector, env: EnvironmentalContext, *, now: datetime | None = None
) -> SeverityScore:
    modified = replace(v, **dict(env.overrides)) if env.overrides else v
    reqs = (env.cr.multiplier, env.ir.multiplier, env.ar.multiplier, env.air.multiplier)
    return _score(raw_score(modified, requirements=reqs), modified, now)


@dataclass(frozen=True)
class ScoreEntry:
    score: SeverityScore
    trigger: Trigger
    note: str = ""


@dataclass(frozen=True)
class ScoreHistory:
    entries: tuple[ScoreEntry, ...] = ()

    @property
    def current(self) -> SeverityScore | None:
        return self.entries[-1].score if self.entries else None

    def __len__(self) -> int:
        return len(self.entries)

    def __bool__(self) -> bool:
        return bool(self.entries)

    def to_dict(self) -> dict[str, Any]:
        if not self.entries:
            return {}
        cur = self.current
        return {
            "vector": cur.vector.render(),
            "value": cur.value,
            "band": cur.band.value,
            "history": [
                {
                    "vector": e.score.vector.render(),
                    "value": e.score.value,
                    "band": e.score.band.value,
                    "computed_at": format_timestamp(e.score.computed_at),
                    "trigger": e.trigger.value,
                    **({"note": e.note} if e.note else {}),
                }
                for e in self.entries
            ],
        }

    @classmethod
    def from_dict(cls, doc: Any, path: str = "severity") -> "ScoreHistory":
        if not isinstance(doc, Mapping):
            raise AivdError("BAD_FIELD_TYPE", f"{path}: expected object")
        raw_entries = doc.get("history", [])
        if not isinstance(raw_entries, list):
            raise AivdError("BAD_FIELD_TYPE", f"{path}.history: expected list")
        entries = []
        for n, raw in enumerate(raw_entries):
            p = f"{path}.history[{n}]"
            if not isinstance(raw, Mapping):
                raise AivdError("BAD_FIELD_TYPE", f"{p}: expected object")
            try:
                vector = parse_vector(raw.get("vector"))
            except AivdError as exc:
                raise AivdError("BAD_FIELD_TYPE", f"{p}.vector: {exc.message}") from exc
            try:
                trigger = Trigger(raw.get("trigger"))
            except ValueError:
                raise AivdError("BAD_FIELD_TYPE", f"{p}.trigger: unknown trigger") from None
            note = raw.get("note", "")
            if not isinstance(note, str):
                raise AivdError("BAD_FIELD_TYPE", f"{p}.note: expected string")
            score = compute_score(vector, now=parse_timestamp(raw.get("computed_at"), f"{p}.computed_at"))
            if raw.get("value") != score.value or raw.get("band") != score.band.value:
                raise AivdError("BAD_FIELD_TYPE", f"{p}: stored score does not match its vector")
            if entries and score.computed_at < entries[-1].score.computed_at:
                raise AivdError("BAD_FIELD_TYPE", f"{p}.computed_at: timestamps must be nondecreasing")
            entries.append(ScoreEntry(score, trigger, note))
        history = cls(tuple(entries))
        if history and "vector" in doc and doc["vector"] != history.current.vector.render():
            raise AivdError("BAD_FIELD_TYPE", f"{path}.vector: does not match the latest history entry")
        if not history and any(k in doc for k in ("vector", "value", "band")):
            raise AivdError("BAD_FIELD_TYPE", f"{path}: current score given without history")
        return history


def reassess(
    history: ScoreHistory,
    v: SeverityVector,
    trigger: Trigger,
    note: str = "",
    *,
    now: datetime | None = None,
) -> ScoreHistory:
    score = compute_score(v, now=now)
    if history.entries and score.computed_at < history.entries[-1].score.computed_at:
        raise AivdError(
            "CLOCK_REGRESSION",
            f"reassessment at {format_timestamp(score.computed_at)} precedes the last entry",
        )
    return ScoreHistory(history.entries + (ScoreEntry(score, trigger, note),))
