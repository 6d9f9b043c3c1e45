"""Event-sourced registry of AI-CVE records.

Every mutation is expressed as a :class:`RegistryEvent` and applied through
one code path (``Registry._apply``), which is also what :func:`replay` uses.
Live state and replayed state therefore cannot drift apart.

Mutations are serialized by a single writer lock; reads take the same lock
only long enough to grab a consistent snapshot of immutable record values.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace
from datetime import date, datetime
from enum import Enum
from typing import Any, Callable, Iterable, Mapping

from .canonical import format_timestamp, parse_timestamp, utcnow
from .catalog import WEAKNESS_ID, Catalog
from .errors import AivdError, ValidationFailed
from .record import (
    RECORD_KEYS,
    AiCveId,
    LifecycleStatus,
    StatusChange,
    VulnerabilityRecord,
    record_from_dict,
    record_to_dict,
    serialize_record,
    validate_record,
)
from .severity import SeverityVector, Trigger, parse_vector, reassess
from .validation import Profile

S = LifecycleStatus

TRANSITIONS: dict[LifecycleStatus, frozenset[LifecycleStatus]] = {
    S.REPORTED: frozenset({S.TRIAGED, S.REJECTED}),
    S.TRIAGED: frozenset({S.CONFIRMED, S.REJECTED, S.DEFERRED}),
    S.DEFERRED: frozenset({S.TRIAGED}),
    S.CONFIRMED: frozenset({S.DISCLOSED, S.REJECTED}),
    S.DISCLOSED: frozenset({S.MITIGATED}),
    S.MITIGATED: frozenset({S.RESOLVED}),
    S.RESOLVED: frozenset(),
    S.REJECTED: frozenset(),
}
TERMINAL = frozenset(s for s, targets in TRANSITIONS.items() if not targets)

# Entering these states requires the record to pass the named profile.
TRANSITION_GATES = {S.TRIAGED: Profile.TRIAGE, S.DISCLOSED: Profile.DISCLOSURE}

# Field updates are revalidated against the profile the record's stage implies.
STAGE_PROFILE = {
    S.REPORTED: Profile.SUBMISSION,
    S.REJECTED: Profile.SUBMISSION,
    S.TRIAGED: Profile.TRIAGE,
    S.DEFERRED: Profile.TRIAGE,
    S.CONFIRMED: Profile.TRIAGE,
    S.DISCLOSED: Profile.DISCLOSURE,
    S.MITIGATED: Profile.DISCLOSURE,
    S.RESOLVED: Profile.DISCLOSURE,
}

REGISTRY_MANAGED = frozenset({"id", "status", "status_history", "severity"})


@dataclass(frozen=True)
class CnaRegistration:
    cna_id: str
    name: str = ""
    first_year: int = 1999
    last_year: int = 9999

    def to_dict(self) -> dict[str, Any]:
        return {"cna_id": self.cna_id, "name": self.name, "allowed_year_range": [self.first_year, self.last_year]}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CnaRegistration":
        first, last = d.get("allowed_year_range", [1999, 9999])
        return cls(d["cna_id"], d.get("name", ""), int(first), int(last))


class EventKind(Enum):
    SUBMITTED = "Submitted"
    FIELDS_UPDATED = "FieldsUpdated"
    STATUS_CHANGED = "StatusChanged"
    RESCORED = "Rescored"


@dataclass(frozen=True)
class RegistryEvent:
    sequence: int
    kind: EventKind
    record_id: AiCveId
    actor: str
    timestamp: datetime
    payload: Mapping[str, Any]

    def to_dict(self) -> dict[str, Any]:
        return {
            "sequence": self.sequence,
            "kind": self.kind.value,
            "record_id": str(self.record_id),
            "actor": self.actor,
            "timestamp": format_timestamp(self.timestamp),
            "payload": self.payload,
        }

    @classmethod
    def from_dict(cls, d: Any) -> "RegistryEvent":
        try:
            return cls(
                sequence=int(d["sequence"]),
                kind=EventKind(d["kind"]),
                record_id=AiCveId.parse(d["record_id"]),
                actor=str(d["actor"]),
                timestamp=parse_timestamp(d["timestamp"], "timestamp"),
                payload=dict(d["payload"]),
            )
        except (KeyError, TypeError, ValueError, AivdError) as exc:
            raise AivdError("CORRUPT_EVENT", f"undecodable event: {exc}") from exc


@dataclass(frozen=True)
class QueryFilter:
    weakness: str | None = None
    product: tuple[str, ...] | None = None
    vendor: str | None = None
    status: frozenset[LifecycleStatus] | None = None
    min_score: float | None = None
    max_score: float | None = None
    from_date: date | None = None
    to_date: date | None = None
    text: str | None = None
    page: int = 1
    page_size: int = 50

    def __post_init__(self) -> None:
        if self.page < 1 or self.page_size < 1:
            raise AivdError("BAD_FILTER", "page and page_size must be positive")
        if self.min_score is not None and self.max_score is not None and self.min_score > self.max_score:
            raise AivdError("BAD_FILTER", "min_score exceeds max_score")
        if self.from_date and self.to_date and self.from_date > self.to_date:
            raise AivdError("BAD_FILTER", "from date is after to date")
        if self.weakness is not None and not WEAKNESS_ID.match(self.weakness):
            raise AivdError("BAD_FILTER", f"{self.weakness!r} is not an AI-CWE id")
        if self.product is not None and (not self.product or any(not s for s in self.product)):
            raise AivdError("BAD_FILTER", "product prefix has an empty segment")

    @classmethod
    def from_params(cls, params: Mapping[str, Any]) -> "QueryFilter":
        """Build from string parameters (HTTP query string or CLI flags)."""

        def opt(key: str) -> Any:
            value = params.get(key)
            return None if value in (None, "") else value

        try:
            status = opt("status")
            if status is not None:
                items = status if isinstance(status, (list, tuple, set, frozenset)) else str(status).split(",")
                status = frozenset(
                    s if isinstance(s, LifecycleStatus) else LifecycleStatus.parse(s) for s in items if s
                )
            product = opt("product")
            return cls(
                weakness=opt("weakness"),
                product=tuple(product.split("/")) if isinstance(product, str) else product,
                vendor=opt("vendor"),
                status=status,
                min_score=None if opt("min_score") is None else float(opt("min_score")),
                max_score=None if opt("max_score") is None else float(opt("max_score")),
                from_date=_as_date(opt("from")),
                to_date=_as_date(opt("to")),
                text=opt("q"),
                page=int(opt("page") or 1),
                page_size=int(opt("page_size") or 50),
            )
        except AivdError as exc:
            if exc.code == "BAD_FILTER":
                raise
            raise AivdError("BAD_FILTER", exc.message) from exc
        except (TypeError, ValueError) as exc:
            raise AivdError("BAD_FILTER", str(exc)) from exc

    def matches(self, r: VulnerabilityRecord) -> bool:
        if self.weakness is not None and self.weakness not in r.weaknesses:
            return False
        if self.status is not None and r.status not in self.status:
            return False
        if self.product is not None and not any(
            p.identifier is not None and p.identifier.has_prefix(self.product) for p in r.affected_products
        ):
            return False
        if self.vendor is not None:
            needle = self.vendor.casefold()
            if not any(needle in v.casefold() for v in r.vendors):
                return False
        if self.min_score is not None or self.max_score is not None:
            current = r.severity.current
            if current is None:
                return False
            if self.min_score is not None and current.value < self.min_score:
                return False
            if self.max_score is not None and current.value > self.max_score:
                return False
        if self.from_date is not None or self.to_date is not None:
            if r.report_date is None:
                return False
            if self.from_date is not None and r.report_date < self.from_date:
                return False
            if self.to_date is not None and r.report_date > self.to_date:
                return False
        if self.text is not None:
            needle = self.text.casefold()
            if needle not in r.description.casefold() and needle not in r.impact.casefold():
                return False
        return True


def _as_date(value: Any) -> date | None:
    if value is None or isinstance(value, date):
        return value
    return date.fromisoformat(str(value))


def result_order(r: VulnerabilityRecord) -> tuple:
    """report_date descending, then id ascending; undated records sort last."""
    day = -r.report_date.toordinal() if r.report_date else float("inf")
    return (day, r.id)


@dataclass(frozen=True)
class QueryPage:
    items: tuple[VulnerabilityRecord, ...]
    total: int
    page: int
    page_size: int


class Registry:
    def __init__(
        self,
        catalog: Catalog,
        *,
        cnas: Iterable[CnaRegistration] = (),
        clock: Callable[[], datetime] = utcnow,
        sink: Callable[[RegistryEvent], None] | None = None,
    ) -> None:
        self.catalog = catalog
        self.clock = clock
        self._sink = sink
        self._lock = threading.RLock()
        self._cnas: dict[str, CnaRegistration] = {c.cna_id: c for c in cnas}
        self._records: dict[AiCveId, VulnerabilityRecord] = {}
        self._events: list[RegistryEvent] = []
        self._high_water: dict[int, int] = {}
        self._by_weakness: dict[str, set[AiCveId]] = {}
        self._by_status: dict[LifecycleStatus, set[AiCveId]] = {}

    # -- CNAs and ids ------------------------------------------------------

    @property
    def cnas(self) -> dict[str, CnaRegistration]:
        return dict(self._cnas)

    def register_cna(self, cna: CnaRegistration) -> None:
        with self._lock:
            if cna.cna_id in self._cnas:
                raise AivdError("DUPLICATE_ID", f"CNA {cna.cna_id} is already registered")
            self._cnas[cna.cna_id] = cna

    def assign_id(self, cna_id: str, year: int) -> AiCveId:
        """Reserve the next serial for ``year``.

        Serials are allocated per year across all CNAs, which keeps ids unique
        and monotone for every (CNA, year) pair. A reservation that is never
        used by a submission is not persisted.
        """
        with self._lock:
            cna = self._cnas.get(cna_id)
            if cna is None:
                raise AivdError("UNKNOWN_CNA", f"CNA {cna_id!r} is not registered")
            if not cna.first_year <= year <= cna.last_year:
                raise AivdError("YEAR_OUT_OF_RANGE", f"{cna_id} may not assign ids for {year}")
            serial = self._high_water.get(year, 0) + 1
            new_id = AiCveId(year, serial)
            self._high_water[year] = serial
            return new_id

    # -- reads -------------------------------------------------------------

    @property
    def events(self) -> tuple[RegistryEvent, ...]:
        with self._lock:
            return tuple(self._events)

    def records(self) -> list[VulnerabilityRecord]:
        with self._lock:
            return sorted(self._records.values(), key=lambda r: r.id)

    def get(self, record_id: AiCveId | str) -> VulnerabilityRecord:
        rid = AiCveId.parse(record_id) if isinstance(record_id, str) else record_id
        with self._lock:
            try:
                return self._records[rid]
            except KeyError:
                raise AivdError("NOT_FOUND", f"no record {rid}") from None

    def snapshot(self) -> dict[str, str]:
        """Canonical text of every record, keyed by id; equal snapshots mean equal state."""
        return {str(r.id): serialize_record(r) for r in self.records()}

    def query(self, flt: QueryFilter) -> QueryPage:
        with self._lock:
            candidates: set[AiCveId] | None = None
            if flt.weakness is not None:
                candidates = set(self._by_weakness.get(flt.weakness, ()))
            if flt.status is not None:
                by_status = set().union(*(self._by_status.get(s, set()) for s in flt.status))
                candidates = by_status if candidates is None else candidates & by_status
            pool = self._records.values() if candidates is None else [self._records[i] for i in candidates]
            hits = sorted((r for r in pool if flt.matches(r)), key=result_order)
        start = (flt.page - 1) * flt.page_size
        return QueryPage(tuple(hits[start : start + flt.page_size]), len(hits), flt.page, flt.page_size)

    # -- mutations ---------------------------------------------------------

    def _validate(self, record: VulnerabilityRecord, profile: Profile, now: datetime) -> None:
        report = validate_record(record, profile, self.catalog, today=now.date())
        if not report.valid:
            raise ValidationFailed(report)

    def submit(self, draft: VulnerabilityRecord, cna_id: str) -> VulnerabilityRecord:
        with self._lock:
            if cna_id not in self._cnas:
                raise AivdError("UNKNOWN_CNA", f"CNA {cna_id!r} is not registered")
            now = self.clock()
            staged = replace(draft, id=None, status=S.REPORTED, status_history=())
            self._validate(staged, Profile.SUBMISSION, now)
            new_id = self.assign_id(cna_id, staged.report_date.year)
            stored = replace(staged, id=new_id)
            self._commit(EventKind.SUBMITTED, new_id, cna_id, now, {"record": record_to_dict(stored)})
            return self._records[new_id]

    def import_record(self, record: VulnerabilityRecord, actor: str) -> VulnerabilityRecord:
        """Store a record that already carries an id (seed corpora, import).

        Its status history is re-expressed as StatusChanged events so that the
        event log stays the single source of truth for lifecycle changes.
        """
        if record.id is None:
            raise AivdError("BAD_ID", "imported records must carry an id")
        path = [S.REPORTED] + [c.to_status for c in record.status_history]
        for change, prev in zip(record.status_history, path):
            if change.from_status is not prev or change.to_status not in TRANSITIONS[prev]:
                raise AivdError("BAD_STATUS_HISTORY", f"{record.id}: history is not a legal path from Reported")
        if (record.status or S.REPORTED) is not path[-1]:
            raise AivdError("BAD_STATUS_HISTORY", f"{record.id}: status does not match its history")
        with self._lock:
            if record.id in self._records:
                raise AivdError("DUPLICATE_ID", f"{record.id} already exists")
            base = replace(record, status=S.REPORTED, status_history=())
            self._commit(EventKind.SUBMITTED, record.id, actor, self.clock(), {"record": record_to_dict(base)})
            for change in record.status_history:
                self._commit(
                    EventKind.STATUS_CHANGED,
                    record.id,
                    change.actor,
                    change.at,
                    {"from": change.from_status.value, "to": change.to_status.value, "note": change.note},
                )
            return self._records[record.id]

    def update_fields(self, record_id: AiCveId | str, patch: Mapping[str, Any], actor: str) -> VulnerabilityRecord:
        if not isinstance(patch, Mapping):
            raise AivdError("MALFORMED_DOCUMENT", "patch must be a JSON object")
        managed = REGISTRY_MANAGED & set(patch)
        if managed:
            raise AivdError("BAD_FIELD_UPDATE", f"registry-managed field(s) cannot be patched: {sorted(managed)}")
        with self._lock:
            current = self.get(record_id)
            merged = record_from_dict({**record_to_dict(current), **patch})
            now = self.clock()
            self._validate(merged, STAGE_PROFILE[current.status], now)
            before, after = record_to_dict(current), record_to_dict(merged)
            payload = {
                key: after.get(key) for key in RECORD_KEYS if before.get(key) != after.get(key)
            }
            self._commit(EventKind.FIELDS_UPDATED, current.id, actor, now, {"fields": payload})
            return self._records[current.id]

    def transition_status(
        self, record_id: AiCveId | str, to: LifecycleStatus, actor: str, note: str = ""
    ) -> VulnerabilityRecord:
        with self._lock:
            current = self.get(record_id)
            if to not in TRANSITIONS[current.status]:
                raise AivdError(
                    "ILLEGAL_TRANSITION", f"{current.id}: {current.status.value} -> {to.value} is not allowed"
                )
            now = self.clock()
            gate = TRANSITION_GATES.get(to)
            if gate is not None:
                self._validate(replace(current, status=to), gate, now)
            payload = {"from": current.status.value, "to": to.value, "note": note}
            self._commit(EventKind.STATUS_CHANGED, current.id, actor, now, payload)
            return self._records[current.id]

    def rescore(
        self,
        record_id: AiCveId | str,
        vector: SeverityVector | str,
        trigger: Trigger,
        actor: str,
        note: str = "",
    ) -> VulnerabilityRecord:
        v = parse_vector(vector) if isinstance(vector, str) else vector
        with self._lock:
            current = self.get(record_id)
            now = self.clock()
            history = reassess(current.severity, v, trigger, note, now=now)
            score = history.current
            payload = {
                "vector": v.render(),
                "trigger": trigger.value,
                "note": note,
                "value": score.value,
                "band": score.band.value,
            }
            self._commit(EventKind.RESCORED, current.id, actor, now, payload)
            return self._records[current.id]

    # -- event application -------------------------------------------------

    def _commit(self, kind: EventKind, record_id: AiCveId, actor: str, ts: datetime, payload: dict) -> None:
        event = RegistryEvent(len(self._events) + 1, kind, record_id, actor, ts, payload)
        self._apply(event)
        if self._sink is not None:
            self._sink(event)

    def _index(self, record: VulnerabilityRecord, add: bool) -> None:
        for wid in record.weaknesses:
            bucket = self._by_weakness.setdefault(wid, set())
            bucket.add(record.id) if add else bucket.discard(record.id)
        bucket = self._by_status.setdefault(record.status, set())
        bucket.add(record.id) if add else bucket.discard(record.id)

    def _store(self, record: VulnerabilityRecord) -> None:
        old = self._records.get(record.id)
        if old is not None:
            self._index(old, add=False)
        self._records[record.id] = record
        self._index(record, add=True)
        self._high_water[record.id.year] = max(self._high_water.get(record.id.year, 0), record.id.serial)

    def _apply(self, event: RegistryEvent) -> None:
        expected = len(self._events) + 1
        if event.sequence != expected:
            raise AivdError("GAP_IN_SEQUENCE", f"expected sequence {expected}, got {event.sequence}")
        try:
            new = self._next_state(event)
        except AivdError as exc:
            if exc.code in ("CORRUPT_EVENT", "GAP_IN_SEQUENCE"):
                raise
            raise AivdError("CORRUPT_EVENT", f"event {event.sequence}: {exc.message}") from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise AivdError("CORRUPT_EVENT", f"event {event.sequence}: bad payload ({exc})") from exc
        self._store(new)
        self._events.append(event)

    def _next_state(self, event: RegistryEvent) -> VulnerabilityRecord:
        p = event.payload
        current = self._records.get(event.record_id)
        if event.kind is EventKind.SUBMITTED:
            if current is not None:
                raise AivdError("CORRUPT_EVENT", f"{event.record_id} submitted twice")
            record = record_from_dict(p["record"])
            if record.id != event.record_id or record.status is not S.REPORTED or record.status_history:
                raise AivdError("CORRUPT_EVENT", "submitted record does not match its event")
            return record
        if current is None:
            raise AivdError("CORRUPT_EVENT", f"{event.record_id} does not exist")
        if event.kind is EventKind.FIELDS_UPDATED:
            fields_doc = p["fields"]
            if not isinstance(fields_doc, dict) or REGISTRY_MANAGED & set(fields_doc):
                raise AivdError("CORRUPT_EVENT", "field update touches registry-managed fields")
            merged = {**record_to_dict(current), **fields_doc}
            return record_from_dict({k: v for k, v in merged.items() if v is not None})
        if event.kind is EventKind.STATUS_CHANGED:
            src, dst = S(p["from"]), S(p["to"])
            if src is not current.status or dst not in TRANSITIONS[src]:
                raise AivdError("CORRUPT_EVENT", f"illegal transition {src.value} -> {dst.value}")
            change = StatusChange(src, dst, event.timestamp, event.actor, p.get("note", ""))
            return replace(current, status=dst, status_history=current.status_history + (change,))
        if event.kind is EventKind.RESCORED:
            history = reassess(
                current.severity, parse_vector(p["vector"]), Trigger(p["trigger"]), p.get("note", ""),
                now=event.timestamp,
            )
            if history.current.value != p["value"]:
                raise AivdError("CORRUPT_EVENT", "recorded score does not match its vector")
            return replace(current, severity=history)
        raise AivdError("CORRUPT_EVENT", f"unknown event kind {event.kind}")


def replay(
    events: Iterable[RegistryEvent],
    catalog: Catalog | None = None,
    *,
    cnas: Iterable[CnaRegistration] = (),
    clock: Callable[[], datetime] = utcnow,
) -> Registry:
    registry = Registry(catalog or Catalog(), cnas=cnas, clock=clock)
    last = 0
    for event in events:
        if event.sequence != last + 1:
            raise AivdError("GAP_IN_SEQUENCE", f"sequence jumps from {last} to {event.sequence}")
        registry._apply(event)
        last = event.sequence
    return registry
