"""AI Bill of Materials documents: Meta / Model / Data / Consideration / Usage.

Each section is a frozen dataclass whose fields carry a ``kind`` in their
metadata. Parsing, serialization, leaf flattening (used by diff and patch)
and path lookup are all driven from that single table.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, fields, replace
from datetime import date
from enum import Enum
from typing import TYPE_CHECKING, Any, Iterable, Mapping

from .canonical import format_date, parse_date
from .errors import AivdError
from .validation import Finding, FindingLevel, ValidationReport

if TYPE_CHECKING:
    from .record import VulnerabilityRecord


class ModelAvailability(Enum):
    PUBLIC = "Public"
    RESTRICTED = "Restricted"


class DataAvailability(Enum):
    PUBLIC = "Public"
    PRIVATE = "Private"


@dataclass(frozen=True)
class Dependency:
    name: str
    version: str = ""

    def to_json(self) -> dict[str, str]:
        return {"name": self.name, **({"version": self.version} if self.version else {})}


@dataclass(frozen=True)
class Quantity:
    """Free text with an optional number; no unit system is imposed."""

    text: str = ""
    value: float | None = None

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        if self.text:
            out["text"] = self.text
        if self.value is not None:
            out["value"] = self.value
        return out


def _text() -> Any:
    return field(default="", metadata={"kind": "text"})


def _texts() -> Any:
    return field(default=(), metadata={"kind": "texts"})


def _map(value_kind: str) -> Any:
    return field(default_factory=dict, metadata={"kind": "map", "values": value_kind})


def _opt(kind: str, **extra: Any) -> Any:
    return field(default=None, metadata={"kind": kind, **extra})


@dataclass(frozen=True)
class Meta:
    generation_tool: str = _text()
    creator: str = _text()
    certification: tuple[str, ...] = _texts()
    release_date: date | None = _opt("date")
    license: str = _text()


@dataclass(frozen=True)
class Model:
    source: str = _text()
    availability: ModelAvailability | None = _opt("enum", enum=ModelAvailability)
    foundation_model: str = _text()
    additional_models: tuple[str, ...] = _texts()
    weights_ref: str = _text()
    scripts: tuple[str, ...] = _texts()
    hyperparameters: dict[str, str] = _map("text")
    configurations: dict[str, str] = _map("text")
    domain: str = _text()
    training_process: str = _text()
    software_requirements: tuple[str, ...] = _texts()
    hardware_requirements: tuple[str, ...] = _texts()
    evaluation_process: str = _text()
    dependencies: tuple[Dependency, ...] = field(default=(), metadata={"kind": "deps"})


@dataclass(frozen=True)
class Data:
    source: str = _text()
    availability: DataAvailability | None = _opt("enum", enum=DataAvailability)
    collection_method: str = _text()
    preprocessing: tuple[str, ...] = _texts()
    input_output_format: str = _text()
    quantitative_measures: dict[str, float] = _map("number")
    qualitative_measures: tuple[str, ...] = _texts()
    governance: str = _text()
    annotation: str = _text()


@dataclass(frozen=True)
class Consideration:
    ethical: str = _text()
    environmental: str = _text()
    energy_usage: Quantity | None = _opt("quantity")
    carbon_footprint: Quantity | None = _opt("quantity")
    risk: tuple[str, ...] = _texts()
    mitigation: tuple[str, ...] = _texts()
    recommendation: tuple[str, ...] = _texts()


@dataclass(frozen=True)
class Usage:
    intended: tuple[str, ...] = _texts()
    out_of_scope: tuple[str, ...] = _texts()
    malicious: tuple[str, ...] = _texts()


@dataclass(frozen=True)
class AibomDocument:
    meta: Meta = field(default_factory=Meta)
    model: Model = field(default_factory=Model)
    data: Data = field(default_factory=Data)
    consideration: Consideration = field(default_factory=Consideration)
    usage: Usage = field(default_factory=Usage)

    def to_dict(self) -> dict[str, Any]:
        return serialize_aibom(self)


SECTIONS: dict[str, type] = {
    "meta": Meta,
    "model": Model,
    "data": Data,
    "consideration": Consideration,
    "usage": Usage,
}


def leaf_fields() -> list[str]:
    """Dotted names of every schema leaf, in document order."""
    return [f"{name}.{f.name}" for name, cls in SECTIONS.items() for f in fields(cls)]


# -- parse / serialize -------------------------------------------------------


def _bad(path: str, expected: str) -> AivdError:
    return AivdError("MALFORMED_DOCUMENT", f"{path}: expected {expected}")


def _decode_value(f: Any, raw: Any, path: str) -> Any:
    kind = f.metadata["kind"]
    if kind == "text":
        if not isinstance(raw, str):
            raise _bad(path, "string")
        return raw
    if kind == "texts":
        if not isinstance(raw, list) or not all(isinstance(x, str) for x in raw):
            raise _bad(path, "list of strings")
        return tuple(raw)
    if kind == "date":
        try:
            return parse_date(raw, path)
        except AivdError as exc:
            raise AivdError("MALFORMED_DOCUMENT", exc.message) from exc
    if kind == "enum":
        try:
            return f.metadata["enum"](raw)
        except ValueError:
            allowed = ", ".join(m.value for m in f.metadata["enum"])
            raise _bad(path, f"one of {allowed}") from None
    if kind == "map":
        if not isinstance(raw, dict):
            raise _bad(path, "object")
        number = f.metadata["values"] == "number"
        for k, v in raw.items():
            ok = isinstance(v, (int, float)) and not isinstance(v, bool) if number else isinstance(v, str)
            if not ok:
                raise _bad(f"{path}.{k}", "number" if number else "string")
        return dict(raw)
    if kind == "deps":
        if not isinstance(raw, list):
            raise _bad(path, "list of dependencies")
        return tuple(_decode_dependency(d, f"{path}[{n}]") for n, d in enumerate(raw))
    if kind == "quantity":
        return _decode_quantity(raw, path)
    raise AssertionError(kind)


def _decode_dependency(raw: Any, path: str) -> Dependency:
    if isinstance(raw, str):
        return Dependency(raw)
    if not isinstance(raw, dict) or set(raw) - {"name", "version"}:
        raise _bad(path, "{name, version} object")
    name, version = raw.get("name", ""), raw.get("version", "")
    if not isinstance(name, str) or not isinstance(version, str):
        raise _bad(path, "string name and version")
    return Dependency(name, version)


def _decode_quantity(raw: Any, path: str) -> Quantity:
    if isinstance(raw, str):
        return Quantity(text=raw)
    if not isinstance(raw, dict) or set(raw) - {"text", "value"}:
        raise _bad(path, "string or {text, value} object")
    text, value = raw.get("text", ""), raw.get("value")
    if not isinstance(text, str):
        raise _bad(f"{path}.text", "string")
    if value is not None and (isinstance(value, bool) or not isinstance(value, (int, float))):
        raise _bad(f"{path}.value", "number")
    return Quantity(text, value)


def _encode_value(f: Any, value: Any) -> Any:
    kind = f.metadata["kind"]
    if kind == "texts":
        return list(value)
    if kind == "date":
        return format_date(value)
    if kind == "enum":
        return value.value
    if kind == "map":
        return {k: value[k] for k in sorted(value)}
    if kind == "deps":
        return [d.to_json() for d in value]
    if kind == "quantity":
        return value.to_json()
    return value


def _is_empty(f: Any, value: Any) -> bool:
    return value is None or (f.metadata["kind"] != "quantity" and not value)


def parse_aibom(document: Any) -> AibomDocument:
    if not isinstance(document, dict):
        raise AivdError("MALFORMED_DOCUMENT", "AIBOM document must be a JSON object")
    unknown = set(document) - set(SECTIONS)
    if unknown:
        raise AivdError("MALFORMED_DOCUMENT", f"unknown AIBOM section(s): {', '.join(sorted(unknown))}")
    sections = {}
    for name, cls in SECTIONS.items():
        raw = document.get(name, {})
        if not isinstance(raw, dict):
            raise _bad(name, "object")
        known = {f.name: f for f in fields(cls)}
        extra = set(raw) - set(known)
        if extra:
            raise AivdError("MALFORMED_DOCUMENT", f"{name}: unknown field(s) {', '.join(sorted(extra))}")
        sections[name] = cls(
            **{k: _decode_value(known[k], v, f"{name}.{k}") for k, v in raw.items()}
        )
    return AibomDocument(**sections)


def serialize_aibom(doc: AibomDocument) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for name in SECTIONS:
        section = getattr(doc, name)
        out[name] = {
            f.name: _encode_value(f, getattr(section, f.name))
            for f in fields(section)
            if not _is_empty(f, getattr(section, f.name))
        }
    return out


# -- validation --------------------------------------------------------------


def validate_aibom(doc: AibomDocument, prefix: str = "") -> ValidationReport:
    findings: list[Finding] = []

    def err(code: str, path: str, message: str) -> None:
        findings.append(Finding(code, prefix + path, message, FindingLevel.ERROR))

    def warn(code: str, path: str, message: str) -> None:
        findings.append(Finding(code, prefix + path, message, FindingLevel.WARNING))

    if not doc.meta.creator.strip():
        err("MISSING_FIELD", "meta.creator", "creator is required")
    if doc.meta.release_date is None:
        err("MISSING_FIELD", "meta.release_date", "release date is required")
    if not doc.model.foundation_model.strip() and not doc.model.source.strip():
        err("MISSING_FIELD", "model.foundation_model", "foundation model or model source is required")
    if not doc.data.source.strip():
        err("MISSING_FIELD", "data.source", "data source is required")
    for n, dep in enumerate(doc.model.dependencies):
        if not dep.name.strip():
            err("INVALID_DEPENDENCY", f"model.dependencies[{n}].name", "dependency name is empty")
    if not doc.usage.intended:
        warn("RECOMMENDED_FIELD", "usage.intended", "intended usage is not documented")
    if not doc.consideration.risk:
        warn("RECOMMENDED_FIELD", "consideration.risk", "no risks are documented")
    return ValidationReport(None, tuple(findings))


# -- paths, diff, patch ------------------------------------------------------

PathKey = tuple  # (section, field) or (section, field, index-or-key)

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_\-]*$")
_TOKEN = re.compile(r'\.?([A-Za-z_][A-Za-z0-9_\-]*)|\[(\d+)\]|\[("(?:[^"\\]|\\.)*")\]')


def render_path(path: PathKey) -> str:
    out = ""
    for n, part in enumerate(path):
        if isinstance(part, int):
            out += f"[{part}]"
        elif _IDENT.match(part):
            out += part if n == 0 else f".{part}"
        else:
            out += "[" + json.dumps(part, ensure_ascii=False) + "]"
    return out


def parse_path(text: str) -> PathKey:
    parts: list[Any] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or (pos == 0 and text.startswith(".")) or m.end() == pos:
            raise AivdError("BAD_PATH", f"cannot parse path {text!r}")
        if m.group(1) is not None:
            parts.append(m.group(1))
        elif m.group(2) is not None:
            parts.append(int(m.group(2)))
        else:
            parts.append(json.loads(m.group(3)))
        pos = m.end()
    if not parts:
        raise AivdError("BAD_PATH", "empty path")
    return tuple(parts)


def leaves(doc: AibomDocument) -> dict[PathKey, Any]:
    """Flatten to ``path -> JSON value``; list elements and map entries are leaves."""
    out: dict[PathKey, Any] = {}
    for sname in SECTIONS:
        section = getattr(doc, sname)
        for f in fields(section):
            value = getattr(section, f.name)
            kind = f.metadata["kind"]
            if kind in ("texts", "deps"):
                for n, item in enumerate(value):
                    out[(sname, f.name, n)] = item.to_json() if kind == "deps" else item
            elif kind == "map":
                for k in value:
                    out[(sname, f.name, k)] = value[k]
            elif not _is_empty(f, value):
                out[(sname, f.name)] = _encode_value(f, value)
    return out


def _from_leaves(flat: Mapping[PathKey, Any]) -> AibomDocument:
    doc: dict[str, dict[str, Any]] = {name: {} for name in SECTIONS}
    containers: dict[tuple[str, str], dict[Any, Any]] = {}
    for path, value in flat.items():
        if len(path) == 2:
            doc[path[0]][path[1]] = value
        else:
            containers.setdefault((path[0], path[1]), {})[path[2]] = value
    for (sname, fname), items in containers.items():
        f = next(x for x in fields(SECTIONS[sname]) if x.name == fname)
        if f.metadata["kind"] == "map":
            doc[sname][fname] = dict(items)
        else:
            indices = sorted(items)
            if indices != list(range(len(indices))):
                raise AivdError("BAD_PATH", f"{sname}.{fname}: list indices are not contiguous")
            doc[sname][fname] = [items[i] for i in indices]
    return parse_aibom(doc)


def _sort_key(path: PathKey) -> tuple:
    sections = list(SECTIONS)
    sname, fname = path[0], path[1]
    field_names = [f.name for f in fields(SECTIONS[sname])]
    rest = () if len(path) == 2 else ((0, path[2], "") if isinstance(path[2], int) else (1, 0, path[2]),)
    return (sections.index(sname), field_names.index(fname)) + rest


@dataclass(frozen=True)
class DiffEntry:
    path: PathKey
    before: Any = None
    after: Any = None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"path": render_path(self.path)}
        if self.before is not None:
            out["before"] = self.before
        if self.after is not None:
            out["after"] = self.after
        return out


@dataclass(frozen=True)
class AibomDiff:
    added: tuple[DiffEntry, ...] = ()
    removed: tuple[DiffEntry, ...] = ()
    modified: tuple[DiffEntry, ...] = ()

    def __bool__(self) -> bool:
        return bool(self.added or self.removed or self.modified)

    def to_dict(self) -> dict[str, Any]:
        return {
            "added": [e.to_dict() for e in self.added],
            "removed": [e.to_dict() for e in self.removed],
            "modified": [e.to_dict() for e in self.modified],
        }


def diff_aibom(a: AibomDocument, b: AibomDocument) -> AibomDiff:
    left, right = leaves(a), leaves(b)
    added = [DiffEntry(p, None, right[p]) for p in right if p not in left]
    removed = [DiffEntry(p, left[p], None) for p in left if p not in right]
    modified = [DiffEntry(p, left[p], right[p]) for p in left if p in right and left[p] != right[p]]
    by_path = lambda e: _sort_key(e.path)  # noqa: E731
    return AibomDiff(
        tuple(sorted(added, key=by_path)),
        tuple(sorted(removed, key=by_path)),
        tuple(sorted(modified, key=by_path)),
    )


def patch_aibom(doc: AibomDocument, diff: AibomDiff) -> AibomDocument:
    flat = leaves(doc)
    for e in diff.removed:
        flat.pop(e.path, None)
    for e in diff.added + diff.modified:
        flat[e.path] = e.after
    return _from_leaves(flat)


# -- linkage -----------------------------------------------------------------


@dataclass(frozen=True)
class LinkedComponent:
    path: str
    value: Any


@dataclass(frozen=True)
class Linkage:
    record: "VulnerabilityRecord"
    document: AibomDocument
    components: tuple[LinkedComponent, ...]


def resolve_path(doc: AibomDocument, path_text: str) -> Any:
    """Value at ``path_text``; a bare list/map field path returns the whole container."""
    path = parse_path(path_text)
    if path[0] not in SECTIONS or len(path) < 2:
        raise AivdError("BAD_PATH", f"{path_text!r} does not name an AIBOM field")
    names = {f.name: f for f in fields(SECTIONS[path[0]])}
    if path[1] not in names:
        raise AivdError("BAD_PATH", f"{path_text!r} does not name an AIBOM field")
    flat = leaves(doc)
    if len(path) == 2:
        f = names[path[1]]
        value = getattr(getattr(doc, path[0]), path[1])
        if _is_empty(f, value):
            raise AivdError("BAD_PATH", f"{path_text!r} is empty in this document")
        return _encode_value(f, value)
    if path in flat and len(path) == 3:
        return flat[path]
    raise AivdError("BAD_PATH", f"{path_text!r} is not present in this document")


def link_aibom(
    record: "VulnerabilityRecord",
    doc: AibomDocument,
    component_paths: Iterable[str] = (),
    *,
    ref: str = "",
) -> Linkage:
    """Attach ``doc`` to the record's AI system, naming the implicated components.

    With ``ref`` the record stores a reference to a stored AIBOM instead of
    embedding the document.
    """
    from .record import AiSystem

    paths = list(component_paths)
    components = tuple(LinkedComponent(p, resolve_path(doc, p)) for p in paths)
    system = record.ai_system or AiSystem()
    system = replace(
        system,
        aibom=None if ref else doc,
        aibom_ref=ref,
        components=tuple(paths),
    )
    return Linkage(replace(record, ai_system=system), doc, components)
