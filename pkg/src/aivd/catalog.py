"""AI-CWE weakness enumeration and mitigation-technique catalog.

A catalog is loaded from JSON documents (one entry per file, or an array of
entries per file) and is fully cross-checked at load time: ids are unique,
every cross-reference resolves, and the ParentOf/ChildOf hierarchy is a DAG.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from graphlib import CycleError, TopologicalSorter
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import AivdError
from .severity import Band

WEAKNESS_ID = re.compile(r"^AI-CWE-[1-9][0-9]*$")
MITIGATION_ID = re.compile(r"^MIT-[0-9]*[1-9][0-9]*$")


class WeaknessClass(Enum):
    VALIDATION_MECHANISM = "ValidationMechanism"
    DATA_HANDLING = "DataHandling"
    LEARNING_ALGORITHM = "LearningAlgorithm"
    PRIVACY_SAFEGUARD = "PrivacySafeguard"

    @property
    def description(self) -> str:
        return CLASS_DESCRIPTIONS[self]


CLASS_DESCRIPTIONS = {
    WeaknessClass.VALIDATION_MECHANISM: (
        "Validation mechanisms are insufficient, so malicious samples can bypass "
        "security checks and enter the system."
    ),
    WeaknessClass.DATA_HANDLING: (
        "Data handling lacks robust filtering and normalization, leaving data "
        "integrity exposed to noise and perturbations."
    ),
    WeaknessClass.LEARNING_ALGORITHM: (
        "The learning algorithm lacks resilience to crafted inputs meant to "
        "mislead or corrupt the learning process."
    ),
    WeaknessClass.PRIVACY_SAFEGUARD: (
        "Privacy safeguards (encryption, anonymization, access control) are "
        "missing or deficient, exposing data to unauthorized access."
    ),
}


class RelationshipKind(Enum):
    PARENT_OF = "ParentOf"
    CHILD_OF = "ChildOf"
    RELATED_TO = "RelatedTo"


class IntroductionMode(Enum):
    DATA_COLLECTION = "DataCollection"
    TRAINING = "Training"
    FINE_TUNING = "FineTuning"
    INFERENCE = "Inference"
    DEPLOYMENT = "Deployment"


class MitigationType(Enum):
    PROACTIVE = "Proactive"
    REACTIVE = "Reactive"


class Orientation(Enum):
    DATA = "Data"
    MODEL = "Model"
    SYSTEM = "System"


@dataclass(frozen=True)
class CatalogReference:
    title: str
    url: str = ""

    def to_dict(self) -> dict[str, str]:
        return {"title": self.title, **({"url": self.url} if self.url else {})}


@dataclass(frozen=True)
class Relationship:
    target: str
    kind: RelationshipKind


@dataclass(frozen=True)
class BandRange:
    low: Band
    high: Band

    def __post_init__(self) -> None:
        if self.low.rank > self.high.rank:
            raise ValueError("severity band low bound exceeds high bound")

    def __contains__(self, band: Band) -> bool:
        return self.low.rank <= band.rank <= self.high.rank


@dataclass(frozen=True)
class AiCweEntry:
    id: str
    name: str
    weakness_class: WeaknessClass
    description: str = ""
    examples: tuple[str, ...] = ()
    severity_band: BandRange | None = None
    common_consequence: str = ""
    relationships: tuple[Relationship, ...] = ()
    modes_of_introduction: frozenset[IntroductionMode] = frozenset()
    potential_mitigations: tuple[str, ...] = ()
    references: tuple[CatalogReference, ...] = ()
    seed: bool = False

    def to_dict(self) -> dict[str, Any]:
        modes = [m.value for m in IntroductionMode if m in self.modes_of_introduction]
        out: dict[str, Any] = {
            "id": self.id,
            "name": self.name,
            "weakness_class": self.weakness_class.value,
            "description": self.description,
            "examples": list(self.examples),
            "severity_band": (
                {"low": self.severity_band.low.value, "high": self.severity_band.high.value}
                if self.severity_band
                else None
            ),
            "common_consequence": self.common_consequence,
            "relationships": [{"target": r.target, "kind": r.kind.value} for r in self.relationships],
            "modes_of_introduction": modes,
            "potential_mitigations": list(self.potential_mitigations),
            "references": [r.to_dict() for r in self.references],
        }
        if self.seed:
            out["seed"] = True
        return out


@dataclass(frozen=True)
class MitigationEntry:
    id: str
    name: str
    type: MitigationType
    orientation: Orientation
    description: str = ""
    effect: str = ""
    tactic: str = ""
    target_weaknesses: tuple[str, ...] = ()
    target_attacks: tuple[str, ...] = ()
    pros: tuple[str, ...] = ()
    cons: tuple[str, ...] = ()
    references: tuple[CatalogReference, ...] = ()
    seed: bool = False

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "id": self.id,
            "name": self.name,
            "description": self.description,
            "effect": self.effect,
            "type": self.type.value,
            "tactic": self.tactic,
            "orientation": self.orientation.value,
            "target_weaknesses": list(self.target_weaknesses),
            "target_attacks": list(self.target_attacks),
            "pros": list(self.pros),
            "cons": list(self.cons),
            "references": [r.to_dict() for r in self.references],
        }
        if self.seed:
            out["seed"] = True
        return out


@dataclass(frozen=True)
class Catalog:
    weaknesses: Mapping[str, AiCweEntry] = field(default_factory=dict)
    mitigations: Mapping[str, MitigationEntry] = field(default_factory=dict)
    version: str = ""

    def has_weakness(self, weakness_id: str) -> bool:
        return weakness_id in self.weaknesses

    def has_mitigation(self, mitigation_id: str) -> bool:
        return mitigation_id in self.mitigations

    def documents(self) -> list[dict[str, Any]]:
        """All entries as catalog documents, weaknesses first, each group ordered by id."""
        return [self.weaknesses[k].to_dict() for k in sorted(self.weaknesses, key=_id_number)] + [
            self.mitigations[k].to_dict() for k in sorted(self.mitigations, key=_id_number)
        ]


def _id_number(entry_id: str) -> int:
    return int(entry_id.rsplit("-", 1)[1])


# -- decoding ----------------------------------------------------------------


def _malformed(where: str, message: str) -> AivdError:
    return AivdError("MALFORMED_DOCUMENT", f"{where}: {message}")


def _str(doc: Mapping[str, Any], key: str, where: str, required: bool = False) -> str:
    value = doc.get(key, "")
    if not isinstance(value, str) or (required and not value.strip()):
        raise _malformed(where, f"{key} must be a {'nonempty ' if required else ''}string")
    return value


def _strs(doc: Mapping[str, Any], key: str, where: str) -> tuple[str, ...]:
    value = doc.get(key, [])
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise _malformed(where, f"{key} must be a list of strings")
    return tuple(value)


def _enum(enum: type[Enum], raw: Any, key: str, where: str) -> Any:
    try:
        return enum(raw)
    except ValueError:
        raise _malformed(where, f"{key}={raw!r} is not one of {[m.value for m in enum]}") from None


def _refs(doc: Mapping[str, Any], where: str) -> tuple[CatalogReference, ...]:
    raw = doc.get("references", [])
    if not isinstance(raw, list):
        raise _malformed(where, "references must be a list")
    out = []
    for r in raw:
        if not isinstance(r, dict) or not isinstance(r.get("title", ""), str) or not isinstance(r.get("url", ""), str):
            raise _malformed(where, "each reference must be {title, url}")
        out.append(CatalogReference(r.get("title", ""), r.get("url", "")))
    return tuple(out)


def _decode_weakness(doc: Mapping[str, Any], where: str) -> AiCweEntry:
    band = doc.get("severity_band")
    severity_band = None
    if band is not None:
        if not isinstance(band, dict):
            raise _malformed(where, "severity_band must be {low, high}")
        try:
            severity_band = BandRange(
                _enum(Band, band.get("low"), "severity_band.low", where),
                _enum(Band, band.get("high"), "severity_band.high", where),
            )
        except ValueError as exc:
            raise _malformed(where, str(exc)) from None
    rels = doc.get("relationships", [])
    if not isinstance(rels, list) or not all(isinstance(r, dict) for r in rels):
        raise _malformed(where, "relationships must be a list of {target, kind}")
    seed = doc.get("seed", False)
    if not isinstance(seed, bool):
        raise _malformed(where, "seed must be a boolean")
    return AiCweEntry(
        id=doc["id"],
        name=_str(doc, "name", where, required=True),
        weakness_class=_enum(WeaknessClass, doc.get("weakness_class"), "weakness_class", where),
        description=_str(doc, "description", where),
        examples=_strs(doc, "examples", where),
        severity_band=severity_band,
        common_consequence=_str(doc, "common_consequence", where),
        relationships=tuple(
            Relationship(_str(r, "target", where, True), _enum(RelationshipKind, r.get("kind"), "kind", where))
            for r in rels
        ),
        modes_of_introduction=frozenset(
            _enum(IntroductionMode, m, "modes_of_introduction", where)
            for m in _strs(doc, "modes_of_introduction", where)
        ),
        potential_mitigations=_strs(doc, "potential_mitigations", where),
        references=_refs(doc, where),
        seed=seed,
    )


def _decode_mitigation(doc: Mapping[str, Any], where: str) -> MitigationEntry:
    seed = doc.get("seed", False)
    if not isinstance(seed, bool):
        raise _malformed(where, "seed must be a boolean")
    return MitigationEntry(
        id=doc["id"],
        name=_str(doc, "name", where, required=True),
        type=_enum(MitigationType, doc.get("type"), "type", where),
        orientation=_enum(Orientation, doc.get("orientation"), "orientation", where),
        description=_str(doc, "description", where),
        effect=_str(doc, "effect", where),
        tactic=_str(doc, "tactic", where),
        target_weaknesses=_strs(doc, "target_weaknesses", where),
        target_attacks=_strs(doc, "target_attacks", where),
        pros=_strs(doc, "pros", where),
        cons=_strs(doc, "cons", where),
        references=_refs(doc, where),
        seed=seed,
    )


def load_catalog(documents: Iterable[Any], version: str = "") -> Catalog:
    """Build a catalog from parsed JSON documents (entry objects or arrays of them).

    Either the whole catalog loads or an :class:`AivdError` is raised; no
    partially checked catalog is ever returned.
    """
    weaknesses: dict[str, AiCweEntry] = {}
    mitigations: dict[str, MitigationEntry] = {}
    for n, doc in enumerate(documents):
        entries = doc if isinstance(doc, list) else [doc]
        for m, entry in enumerate(entries):
            where = f"document {n} entry {m}"
            if not isinstance(entry, dict) or not isinstance(entry.get("id"), str):
                raise _malformed(where, "entry must be an object with a string id")
            entry_id = entry["id"]
            if WEAKNESS_ID.match(entry_id):
                if entry_id in weaknesses:
                    raise AivdError("DUPLICATE_ID", f"{entry_id} is defined more than once")
                weaknesses[entry_id] = _decode_weakness(entry, f"{where} ({entry_id})")
            elif MITIGATION_ID.match(entry_id):
                if entry_id in mitigations:
                    raise AivdError("DUPLICATE_ID", f"{entry_id} is defined more than once")
                mitigations[entry_id] = _decode_mitigation(entry, f"{where} ({entry_id})")
            else:
                raise _malformed(where, f"id {entry_id!r} is neither AI-CWE-<n> nor MIT-<n>")

    for w in weaknesses.values():
        for rel in w.relationships:
            if rel.target not in weaknesses:
                raise AivdError("DANGLING_REF", f"{w.id} relationship targets unknown {rel.target}")
        for mid in w.potential_mitigations:
            if mid not in mitigations:
                raise AivdError("DANGLING_REF", f"{w.id} lists unknown mitigation {mid}")
    for mit in mitigations.values():
        for wid in mit.target_weaknesses:
            if wid not in weaknesses:
                raise AivdError("DANGLING_REF", f"{mit.id} targets unknown weakness {wid}")

    try:
        tuple(TopologicalSorter(_hierarchy(weaknesses, children=False)).static_order())
    except CycleError as exc:
        cycle = " -> ".join(exc.args[1]) if len(exc.args) > 1 else ""
        raise AivdError("RELATIONSHIP_CYCLE", f"ParentOf/ChildOf cycle: {cycle}") from None

    return Catalog(
        dict(sorted(weaknesses.items(), key=lambda kv: _id_number(kv[0]))),
        dict(sorted(mitigations.items(), key=lambda kv: _id_number(kv[0]))),
        version,
    )


def load_catalog_dir(path: str | Path, version: str = "") -> Catalog:
    root = Path(path)
    docs = []
    for file in sorted(root.glob("*.json")):
        try:
            docs.append(json.loads(file.read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise AivdError("MALFORMED_DOCUMENT", f"{file.name}: {exc}") from exc
    version_file = root / "VERSION"
    if not version and version_file.exists():
        version = version_file.read_text(encoding="utf-8").strip()
    return load_catalog(docs, version)


def _hierarchy(weaknesses: Mapping[str, AiCweEntry], *, children: bool) -> dict[str, set[str]]:
    """Adjacency over ParentOf/ChildOf edges.

    ``children=True`` maps each id to its children; otherwise to its parents.
    Both declaration styles (A ParentOf B, B ChildOf A) yield the same edge.
    """
    graph: dict[str, set[str]] = {wid: set() for wid in weaknesses}
    for w in weaknesses.values():
        for rel in w.relationships:
            if rel.kind is RelationshipKind.PARENT_OF:
                parent, child = w.id, rel.target
            elif rel.kind is RelationshipKind.CHILD_OF:
                parent, child = rel.target, w.id
            else:
                continue
            if children:
                graph[parent].add(child)
            else:
                graph[child].add(parent)
    return graph


# -- lookups -----------------------------------------------------------------


def get_weakness(catalog: Catalog, weakness_id: str) -> AiCweEntry:
    try:
        return catalog.weaknesses[weakness_id]
    except KeyError:
        raise AivdError("NOT_FOUND", f"weakness {weakness_id} is not in the catalog") from None


def get_mitigation(catalog: Catalog, mitigation_id: str) -> MitigationEntry:
    try:
        return catalog.mitigations[mitigation_id]
    except KeyError:
        raise AivdError("NOT_FOUND", f"mitigation {mitigation_id} is not in the catalog") from None


def list_by_class(catalog: Catalog, weakness_class: WeaknessClass) -> list[AiCweEntry]:
    return sorted(
        (w for w in catalog.weaknesses.values() if w.weakness_class is weakness_class),
        key=lambda w: _id_number(w.id),
    )


def find_weakness_by_name(catalog: Catalog, text: str) -> AiCweEntry:
    """Map an intake phrase such as "Lack of appropriate privacy safeguard" to its entry."""
    wanted = " ".join(text.split()).casefold()
    for w in catalog.weaknesses.values():
        if " ".join(w.name.split()).casefold() == wanted:
            return w
    raise AivdError("NOT_FOUND", f"no weakness named {text!r}")


def get_mitigations_for(catalog: Catalog, weakness_id: str) -> list[MitigationEntry]:
    get_weakness(catalog, weakness_id)
    return sorted(
        (m for m in catalog.mitigations.values() if weakness_id in m.target_weaknesses),
        key=lambda m: _id_number(m.id),
    )


@dataclass(frozen=True)
class RelationshipClosure:
    root: str
    descendants: tuple[str, ...]
    ancestors: tuple[str, ...]

    @property
    def members(self) -> tuple[str, ...]:
        return self.descendants + tuple(a for a in self.ancestors if a not in self.descendants)


def _bfs(graph: Mapping[str, set[str]], start: str) -> tuple[str, ...]:
    seen = {start}
    order: list[str] = []
    frontier = [start]
    while frontier:
        nxt: list[str] = []
        for node in frontier:
            for target in sorted(graph.get(node, ()), key=_id_number):
                if target not in seen:
                    seen.add(target)
                    order.append(target)
                    nxt.append(target)
        frontier = nxt
    return tuple(order)


def resolve_relationships(catalog: Catalog, weakness_id: str) -> RelationshipClosure:
    """Transitive ParentOf/ChildOf closure; RelatedTo edges are not followed."""
    get_weakness(catalog, weakness_id)
    return RelationshipClosure(
        weakness_id,
        _bfs(_hierarchy(catalog.weaknesses, children=True), weakness_id),
        _bfs(_hierarchy(catalog.weaknesses, children=False), weakness_id),
    )
