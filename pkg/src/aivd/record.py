"""The AI-CVE vulnerability record and its canonical JSON document form.

A record holds the fifteen minimum elements of an AI vulnerability report.
Records are immutable; every change produces a new value.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, fields, replace
from datetime import date, datetime
from enum import Enum
from typing import Any, Callable, Mapping

from .aibom import AibomDocument, parse_aibom, serialize_aibom, validate_aibom
from .canonical import (
    dumps,
    format_date,
    format_timestamp,
    loads,
    parse_date,
    parse_timestamp,
    sort_keys_deep,
)
from .catalog import WEAKNESS_ID, Catalog
from .errors import AivdError
from .severity import ScoreHistory
from .validation import Finding, FindingLevel, Profile, ValidationReport

_ID_RE = re.compile(r"^AI-CVE-(\d{4})-(\d{4,})$")


@dataclass(frozen=True, order=True)
class AiCveId:
    year: int
    serial: int

    def __post_init__(self) -> None:
        if not 1999 <= self.year <= 9999:
            raise AivdError("BAD_ID", f"year {self.year} outside 1999..9999")
        if self.serial < 1:
            raise AivdError("BAD_ID", "serial must be positive")

    @classmethod
    def parse(cls, text: Any) -> "AiCveId":
        m = _ID_RE.match(text) if isinstance(text, str) else None
        if not m:
            raise AivdError("BAD_ID", f"{text!r} is not of the form AI-CVE-YYYY-NNNN")
        parsed = cls(int(m.group(1)), int(m.group(2)))
        if str(parsed) != text:
            raise AivdError("BAD_ID", f"{text!r} is not canonical (expected {parsed})")
        return parsed

    def __str__(self) -> str:
        return f"AI-CVE-{self.year}-{self.serial:04d}"


@dataclass(frozen=True)
class ProductIdentifier:
    segments: tuple[str, ...]
    original: str

    def render(self) -> str:
        return "/".join(self.segments)

    def has_prefix(self, prefix: tuple[str, ...]) -> bool:
        if len(prefix) > len(self.segments):
            return False
        return all(a.casefold() == b.casefold() for a, b in zip(self.segments, prefix))


def parse_product_id(text: Any) -> ProductIdentifier:
    if not isinstance(text, str):
        raise AivdError("BAD_PRODUCT_ID", "product identifier must be a string")
    segments = tuple(text.split("/"))
    if not 3 <= len(segments) <= 5:
        raise AivdError("BAD_PRODUCT_ID", f"{text!r}: expected 3-5 '/'-separated segments")
    if any(not s or s != s.strip() for s in segments):
        raise AivdError("BAD_PRODUCT_ID", f"{text!r}: empty or padded segment")
    if not re.fullmatch(r"\d{4}", segments[0]):
        raise AivdError("BAD_PRODUCT_ID", f"{text!r}: first segment must be a 4-digit year")
    return ProductIdentifier(segments, text)


class TechnicalComplexity(Enum):
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"


class PrivilegeLevel(Enum):
    NONE = "None"
    USER = "User"
    MODEL_QUERY_ACCESS = "ModelQueryAccess"
    TRAINING_DATA_ACCESS = "TrainingDataAccess"
    ADMINISTRATIVE = "Administrative"


class LifecycleStatus(Enum):
    REPORTED = "Reported"
    TRIAGED = "Triaged"
    CONFIRMED = "Confirmed"
    DISCLOSED = "Disclosed"
    MITIGATED = "Mitigated"
    RESOLVED = "Resolved"
    REJECTED = "Rejected"
    DEFERRED = "Deferred"

    @classmethod
    def parse(cls, text: str) -> "LifecycleStatus":
        for s in cls:
            if s.value.lower() == str(text).strip().lower():
                return s
        raise AivdError("BAD_STATUS", f"unknown lifecycle status {text!r}")


@dataclass(frozen=True)
class ExploitabilityProfile:
    technical_complexity: TechnicalComplexity
    privilege_level: PrivilegeLevel
    required_actions: tuple[str, ...] = ()
    access_requirements: str = ""


@dataclass(frozen=True)
class AffectedProduct:
    display_name: str
    identifier: ProductIdentifier | None = None


@dataclass(frozen=True)
class MitigationRef:
    catalog_ref: str | None = None
    narrative: str = ""


NONE_KNOWN = MitigationRef(narrative="No known mitigation.")


@dataclass(frozen=True)
class Reference:
    title: str
    url: str | None = None


@dataclass(frozen=True)
class StatusChange:
    from_status: LifecycleStatus
    to_status: LifecycleStatus
    at: datetime
    actor: str
    note: str = ""


@dataclass(frozen=True)
class AiSystem:
    """The affected AI system, identified by name/type/version.

    The AIBOM is either embedded (``aibom``) or referenced by the name of a
    stored document (``aibom_ref``); ``components`` lists the AIBOM paths
    implicated by the vulnerability.
    """

    name: str = ""
    type: str = ""
    version: str = ""
    aibom_ref: str = ""
    components: tuple[str, ...] = ()
    aibom: AibomDocument | None = None


@dataclass(frozen=True)
class VulnerabilityRecord:
    id: AiCveId | None = None
    ai_system: AiSystem | None = None
    weaknesses: tuple[str, ...] = ()
    root_causes: tuple[str, ...] = ()
    impact: str = ""
    severity: ScoreHistory = field(default_factory=ScoreHistory)
    affected_products: tuple[AffectedProduct, ...] = ()
    exploitability: ExploitabilityProfile | None = None
    description: str = ""
    mitigations: tuple[MitigationRef, ...] = ()
    references: tuple[Reference, ...] = ()
    report_date: date | None = None
    reported_by: str = ""
    vendors: tuple[str, ...] = ()
    status: LifecycleStatus | None = None
    status_history: tuple[StatusChange, ...] = ()
    extensions: dict[str, Any] = field(default_factory=dict)


RECORD_KEYS = tuple(f.name for f in fields(VulnerabilityRecord))


# -- decoding ----------------------------------------------------------------


def _bad(path: str, expected: str) -> AivdError:
    return AivdError("BAD_FIELD_TYPE", f"{path}: expected {expected}")


def _text(raw: Any, path: str) -> str:
    if not isinstance(raw, str):
        raise _bad(path, "string")
    return raw


def _texts(raw: Any, path: str) -> tuple[str, ...]:
    if not isinstance(raw, list) or not all(isinstance(x, str) for x in raw):
        raise _bad(path, "list of strings")
    return tuple(raw)


def _obj(raw: Any, path: str, allowed: set[str]) -> Mapping[str, Any]:
    if not isinstance(raw, dict):
        raise _bad(path, "object")
    extra = set(raw) - allowed
    if extra:
        raise _bad(path, f"only {sorted(allowed)} (got {sorted(extra)})")
    return raw


def _objs(raw: Any, path: str) -> list[Any]:
    if not isinstance(raw, list):
        raise _bad(path, "list")
    return raw


def _enum(enum: type[Enum], raw: Any, path: str) -> Any:
    try:
        return enum(raw)
    except ValueError:
        raise _bad(path, "one of " + ", ".join(m.value for m in enum)) from None


def _decode_ai_system(raw: Any) -> AiSystem:
    d = _obj(raw, "ai_system", {"name", "type", "version", "aibom_ref", "components", "aibom"})
    aibom = None
    if "aibom" in d:
        try:
            aibom = parse_aibom(d["aibom"])
        except AivdError as exc:
            raise AivdError("BAD_FIELD_TYPE", f"ai_system.aibom: {exc.message}") from exc
    return AiSystem(
        name=_text(d.get("name", ""), "ai_system.name"),
        type=_text(d.get("type", ""), "ai_system.type"),
        version=_text(d.get("version", ""), "ai_system.version"),
        aibom_ref=_text(d.get("aibom_ref", ""), "ai_system.aibom_ref"),
        components=_texts(d.get("components", []), "ai_system.components"),
        aibom=aibom,
    )


def _decode_weaknesses(raw: Any) -> tuple[str, ...]:
    ids = _texts(raw, "weaknesses")
    for n, wid in enumerate(ids):
        if not WEAKNESS_ID.match(wid):
            raise _bad(f"weaknesses[{n}]", "AI-CWE-<n> identifier")
    return ids


def _decode_products(raw: Any) -> tuple[AffectedProduct, ...]:
    out = []
    for n, item in enumerate(_objs(raw, "affected_products")):
        p = f"affected_products[{n}]"
        d = _obj(item, p, {"display_name", "identifier"})
        ident = None
        if "identifier" in d:
            try:
                ident = parse_product_id(d["identifier"])
            except AivdError as exc:
                raise AivdError("BAD_FIELD_TYPE", f"{p}.identifier: {exc.message}") from exc
        out.append(AffectedProduct(_text(d.get("display_name", ""), f"{p}.display_name"), ident))
    return tuple(out)


def _decode_exploitability(raw: Any) -> ExploitabilityProfile:
    p = "exploitability"
    d = _obj(raw, p, {"technical_complexity", "privilege_level", "required_actions", "access_requirements"})
    return ExploitabilityProfile(
        _enum(TechnicalComplexity, d.get("technical_complexity"), f"{p}.technical_complexity"),
        _enum(PrivilegeLevel, d.get("privilege_level"), f"{p}.privilege_level"),
        _texts(d.get("required_actions", []), f"{p}.required_actions"),
        _text(d.get("access_requirements", ""), f"{p}.access_requirements"),
    )


def _decode_mitigations(raw: Any) -> tuple[MitigationRef, ...]:
    out = []
    for n, item in enumerate(_objs(raw, "mitigations")):
        p = f"mitigations[{n}]"
        d = _obj(item, p, {"catalog_ref", "narrative"})
        ref = d.get("catalog_ref")
        if ref is not None:
            ref = _text(ref, f"{p}.catalog_ref")
        out.append(MitigationRef(ref, _text(d.get("narrative", ""), f"{p}.narrative")))
    return tuple(out)


def _decode_references(raw: Any) -> tuple[Reference, ...]:
    out = []
    for n, item in enumerate(_objs(raw, "references")):
        p = f"references[{n}]"
        d = _obj(item, p, {"title", "url"})
        url = d.get("url")
        if url is not None:
            url = _text(url, f"{p}.url")
        out.append(Reference(_text(d.get("title", ""), f"{p}.title"), url))
    return tuple(out)


def _decode_status_history(raw: Any) -> tuple[StatusChange, ...]:
    out = []
    for n, item in enumerate(_objs(raw, "status_history")):
        p = f"status_history[{n}]"
        d = _obj(item, p, {"from", "to", "at", "actor", "note"})
        out.append(
            StatusChange(
                _enum(LifecycleStatus, d.get("from"), f"{p}.from"),
                _enum(LifecycleStatus, d.get("to"), f"{p}.to"),
                parse_timestamp(d.get("at"), f"{p}.at"),
                _text(d.get("actor", ""), f"{p}.actor"),
                _text(d.get("note", ""), f"{p}.note"),
            )
        )
    return tuple(out)


def _decode_severity(raw: Any) -> ScoreHistory:
    return ScoreHistory.from_dict(raw, "severity")


_DECODERS: dict[str, Callable[[Any], Any]] = {
    "id": AiCveId.parse,
    "ai_system": _decode_ai_system,
    "weaknesses": _decode_weaknesses,
    "root_causes": lambda raw: _texts(raw, "root_causes"),
    "impact": lambda raw: _text(raw, "impact"),
    "severity": _decode_severity,
    "affected_products": _decode_products,
    "exploitability": _decode_exploitability,
    "description": lambda raw: _text(raw, "description"),
    "mitigations": _decode_mitigations,
    "references": _decode_references,
    "report_date": lambda raw: parse_date(raw, "report_date"),
    "reported_by": lambda raw: _text(raw, "reported_by"),
    "vendors": lambda raw: _texts(raw, "vendors"),
    "status": lambda raw: _enum(LifecycleStatus, raw, "status"),
    "status_history": _decode_status_history,
}


def record_from_dict(doc: Any) -> VulnerabilityRecord:
    if not isinstance(doc, dict):
        raise AivdError("MALFORMED_DOCUMENT", "record document must be a JSON object")
    values: dict[str, Any] = {}
    extensions: dict[str, Any] = {}
    if "extensions" in doc:
        if not isinstance(doc["extensions"], dict):
            raise _bad("extensions", "object")
        extensions.update(doc["extensions"])
    for key, raw in doc.items():
        if key == "extensions":
            continue
        if key in _DECODERS:
            if raw is not None:
                values[key] = _DECODERS[key](raw)
        else:
            if key in extensions:
                raise _bad(key, "a single definition (also present under extensions)")
            extensions[key] = raw
    return VulnerabilityRecord(extensions=sort_keys_deep(extensions), **values)


def parse_record(document: str | bytes | Mapping[str, Any]) -> VulnerabilityRecord:
    """Decode a canonical record document (JSON text or an already-parsed object)."""
    doc = loads(document) if isinstance(document, (str, bytes)) else document
    return record_from_dict(doc)


# -- encoding ----------------------------------------------------------------


def record_to_dict(record: VulnerabilityRecord) -> dict[str, Any]:
    """Populated fields only, in canonical key order."""
    r = record
    out: dict[str, Any] = {}
    if r.id is not None:
        out["id"] = str(r.id)
    if r.ai_system is not None:
        s = r.ai_system
        system: dict[str, Any] = {}
        for key in ("name", "type", "version", "aibom_ref"):
            if getattr(s, key):
                system[key] = getattr(s, key)
        if s.components:
            system["components"] = list(s.components)
        if s.aibom is not None:
            system["aibom"] = serialize_aibom(s.aibom)
        out["ai_system"] = system
    if r.weaknesses:
        out["weaknesses"] = list(r.weaknesses)
    if r.root_causes:
        out["root_causes"] = list(r.root_causes)
    if r.impact:
        out["impact"] = r.impact
    if r.severity:
        out["severity"] = r.severity.to_dict()
    if r.affected_products:
        out["affected_products"] = [
            {"display_name": p.display_name, **({"identifier": p.identifier.original} if p.identifier else {})}
            for p in r.affected_products
        ]
    if r.exploitability is not None:
        e = r.exploitability
        exp: dict[str, Any] = {
            "technical_complexity": e.technical_complexity.value,
            "privilege_level": e.privilege_level.value,
        }
        if e.required_actions:
            exp["required_actions"] = list(e.required_actions)
        if e.access_requirements:
            exp["access_requirements"] = e.access_requirements
        out["exploitability"] = exp
    if r.description:
        out["description"] = r.description
    if r.mitigations:
        out["mitigations"] = [
            {
                **({"catalog_ref": m.catalog_ref} if m.catalog_ref is not None else {}),
                **({"narrative": m.narrative} if m.narrative else {}),
            }
            for m in r.mitigations
        ]
    if r.references:
        out["references"] = [
            {"title": ref.title, **({"url": ref.url} if ref.url is not None else {})} for ref in r.references
        ]
    if r.report_date is not None:
        out["report_date"] = format_date(r.report_date)
    if r.reported_by:
        out["reported_by"] = r.reported_by
    if r.vendors:
        out["vendors"] = list(r.vendors)
    if r.status is not None:
        out["status"] = r.status.value
    if r.status_history:
        out["status_history"] = [
            {
                "from": c.from_status.value,
                "to": c.to_status.value,
                "at": format_timestamp(c.at),
                "actor": c.actor,
                **({"note": c.note} if c.note else {}),
            }
            for c in r.status_history
        ]
    if r.extensions:
        out["extensions"] = sort_keys_deep(r.extensions)
    return out


def serialize_record(record: VulnerabilityRecord) -> str:
    return dumps(record_to_dict(record))


# -- validation ----------------------------------------------------------------

# Minimum element number -> record field path.
ME_FIELDS: dict[int, str] = {
    1: "id",
    2: "ai_system",
    3: "weaknesses",
    4: "root_causes",
    5: "impact",
    6: "severity",
    7: "affected_products",
    8: "exploitability",
    9: "description",
    10: "mitigations",
    11: "references",
    12: "report_date",
    13: "reported_by",
    14: "vendors",
    15: "status",
}

PROFILE_MES: dict[Profile, tuple[int, ...]] = {
    Profile.SUBMISSION: (2, 9, 12, 13),
    Profile.TRIAGE: (2, 9, 12, 13, 3, 4, 5, 7, 8, 14),
    Profile.DISCLOSURE: (2, 9, 12, 13, 3, 4, 5, 7, 8, 14, 1, 6, 10, 11, 15),
}


def _populated(record: VulnerabilityRecord, me: int) -> list[str]:
    """Paths of missing pieces for minimum element ``me`` (empty list when populated)."""
    path = ME_FIELDS[me]
    value = getattr(record, path)
    if me == 2:
        if value is None:
            return [path]
        return [f"{path}.{k}" for k in ("name", "type") if not getattr(value, k).strip()]
    if isinstance(value, str):
        return [] if value.strip() else [path]
    if value is None or (not isinstance(value, (date, ExploitabilityProfile)) and not value):
        return [path]
    return []


def validate_record(
    record: VulnerabilityRecord,
    profile: Profile,
    catalog: Catalog,
    *,
    today: date | None = None,
) -> ValidationReport:
    findings: list[Finding] = []
    today = today or date.today()

    def error(code: str, path: str, message: str) -> None:
        findings.append(Finding(code, path, message, FindingLevel.ERROR))

    for me in sorted(PROFILE_MES[profile]):
        for path in _populated(record, me):
            error("MISSING_FIELD", path, f"required by the {profile.value} profile (ME {me})")

    if profile is Profile.DISCLOSURE and record.exploitability and not record.exploitability.required_actions:
        error("MISSING_FIELD", "exploitability.required_actions", "required before disclosure (ME 8)")

    if record.report_date is not None and record.report_date > today:
        error("FUTURE_DATE", "report_date", f"{record.report_date} is after {today}")

    for n, wid in enumerate(record.weaknesses):
        if not catalog.has_weakness(wid):
            error("DANGLING_WEAKNESS_REF", f"weaknesses[{n}]", f"{wid} is not in the AI-CWE catalog")

    for n, m in enumerate(record.mitigations):
        if m.catalog_ref is None and not m.narrative.strip():
            error("EMPTY_MITIGATION", f"mitigations[{n}]", "needs a catalog_ref or a narrative")
        if m.catalog_ref is not None and not catalog.has_mitigation(m.catalog_ref):
            error("DANGLING_MITIGATION_REF", f"mitigations[{n}].catalog_ref",
                  f"{m.catalog_ref} is not in the mitigation catalog")

    for n, p in enumerate(record.affected_products):
        if not p.display_name.strip():
            error("MISSING_FIELD", f"affected_products[{n}].display_name", "product needs a display name")

    if record.ai_system is not None and record.ai_system.aibom is not None:
        findings.extend(validate_aibom(record.ai_system.aibom, prefix="ai_system.aibom.").findings)

    return ValidationReport(profile, tuple(findings))
