"""Directory-backed persistence for a :class:`~aivd.registry.Registry`.

Layout of a data directory::

    events.jsonl     append-only event log, one JSON event per line
    cnas.json        registered naming authorities
    catalog/         AI-CWE and mitigation catalog documents
    aibom/           named AIBOM documents referenced by records

Export writes canonical record documents named ``<AI-CVE-ID>.json`` next to
``catalog/``, ``aibom/`` and ``cnas.json``; import reads the same layout.
"""

from __future__ import annotations

import json
import logging
import os
import re
import shutil
from datetime import datetime
from importlib import resources
from pathlib import Path
from typing import Callable, Iterator

from .aibom import AibomDocument, parse_aibom, serialize_aibom
from .canonical import dumps, loads, utcnow
from .catalog import Catalog, load_catalog_dir
from .errors import AivdError
from .record import AiCveId, parse_record, serialize_record
from .registry import CnaRegistration, Registry, RegistryEvent

log = logging.getLogger(__name__)

RECORD_FILE = re.compile(r"^ai-cve-\d{4}-\d{4,}\.json$", re.IGNORECASE)
AIBOM_NAME = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


def seed_dir() -> Path:
    """Packaged seed corpus (export layout)."""
    return Path(str(resources.files("aivd") / "seed"))


def default_data_dir() -> Path:
    return Path(os.environ.get("AIVD_DATA_DIR") or ".aivd")


def read_events(path: Path) -> Iterator[RegistryEvent]:
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise AivdError("CORRUPT_EVENT", f"events.jsonl line {lineno}: {exc}") from exc
            yield RegistryEvent.from_dict(raw)


class Store:
    def __init__(self, root: Path, registry: Registry) -> None:
        self.root = root
        self.registry = registry
        self._log = None

    @classmethod
    def open(cls, root: str | Path, *, clock: Callable[[], datetime] = utcnow) -> "Store":
        root = Path(root)
        try:
            root.mkdir(parents=True, exist_ok=True)
            catalog_dir = root / "catalog"
            if not catalog_dir.is_dir() or not any(catalog_dir.glob("*.json")):
                shutil.copytree(seed_dir() / "catalog", catalog_dir, dirs_exist_ok=True)
            (root / "aibom").mkdir(exist_ok=True)
            catalog = load_catalog_dir(catalog_dir)
            cnas = _read_cnas(root / "cnas.json")
        except AivdError as exc:
            raise AivdError("CORRUPT_STORE", f"{root}: {exc.message}") from exc

        store = cls(root, Registry(catalog, cnas=cnas, clock=clock))
        events_path = root / "events.jsonl"
        if events_path.exists():
            try:
                for event in read_events(events_path):
                    store.registry._apply(event)
            except AivdError as exc:
                raise AivdError("CORRUPT_STORE", f"{events_path}: {exc.message}") from exc
        store.registry._sink = store._append
        return store

    # -- event log ---------------------------------------------------------

    def _append(self, event: RegistryEvent) -> None:
        if self._log is None:
            self._log = (self.root / "events.jsonl").open("a", encoding="utf-8")
        self._log.write(json.dumps(event.to_dict(), ensure_ascii=False, separators=(",", ":")) + "\n")
        self._log.flush()

    def close(self) -> None:
        if self._log is not None:
            self._log.flush()
            os.fsync(self._log.fileno())
            self._log.close()
            self._log = None

    def __enter__(self) -> "Store":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    # -- CNAs, AIBOMs ------------------------------------------------------

    def register_cna(self, cna: CnaRegistration) -> None:
        self.registry.register_cna(cna)
        _write_cnas(self.root / "cnas.json", self.registry.cnas.values())

    def get_aibom(self, name: str) -> AibomDocument:
        path = self.root / "aibom" / f"{name}.json"
        if not AIBOM_NAME.match(name) or not path.exists():
            raise AivdError("NOT_FOUND", f"no stored AIBOM named {name!r}")
        return parse_aibom(loads(path.read_text(encoding="utf-8")))

    def put_aibom(self, name: str, doc: AibomDocument) -> None:
        if not AIBOM_NAME.match(name):
            raise AivdError("BAD_PATH", f"invalid AIBOM name {name!r}")
        (self.root / "aibom" / f"{name}.json").write_text(dumps(serialize_aibom(doc)), encoding="utf-8")

    def record_aibom(self, record_id: str) -> AibomDocument:
        record = self.registry.get(record_id)
        system = record.ai_system
        if system is not None and system.aibom is not None:
            return system.aibom
        if system is not None and system.aibom_ref:
            return self.get_aibom(system.aibom_ref)
        raise AivdError("NOT_FOUND", f"{record.id} has no linked AIBOM")

    @property
    def catalog(self) -> Catalog:
        return self.registry.catalog

    # -- export / import ---------------------------------------------------

    def export(self, out: str | Path) -> int:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        records = self.registry.records()
        for record in records:
            (out / f"{record.id}.json").write_text(serialize_record(record), encoding="utf-8")
        shutil.copytree(self.root / "catalog", out / "catalog", dirs_exist_ok=True)
        shutil.copytree(self.root / "aibom", out / "aibom", dirs_exist_ok=True)
        _write_cnas(out / "cnas.json", self.registry.cnas.values())
        return len(records)

    def import_dir(self, src: str | Path, actor: str = "import") -> int:
        """Load an export directory. All record files are parsed before anything is applied."""
        src = Path(src)
        if not src.is_dir():
            raise AivdError("NOT_FOUND", f"{src} is not a directory")
        files = sorted(p for p in src.iterdir() if RECORD_FILE.match(p.name))
        records = []
        for path in files:
            record = parse_record(path.read_text(encoding="utf-8"))
            if record.id is None or str(record.id).lower() != path.stem.lower():
                raise AivdError("BAD_ID", f"{path.name}: file name does not match record id")
            records.append(record)
        records.sort(key=lambda r: r.id)
        clash = [str(r.id) for r in records if _exists(self.registry, r.id)]
        if clash:
            raise AivdError("DUPLICATE_ID", f"already present: {', '.join(clash)}")

        if (src / "catalog").is_dir() and not self.registry.records():
            catalog = load_catalog_dir(src / "catalog")
            shutil.rmtree(self.root / "catalog")
            shutil.copytree(src / "catalog", self.root / "catalog")
            self.registry.catalog = catalog
        if (src / "aibom").is_dir():
            shutil.copytree(src / "aibom", self.root / "aibom", dirs_exist_ok=True)
        for cna in _read_cnas(src / "cnas.json"):
            if cna.cna_id not in self.registry.cnas:
                self.register_cna(cna)
        for record in records:
            self.registry.import_record(record, actor)
        log.info("imported %d record(s) from %s", len(records), src)
        return len(records)


def _exists(registry: Registry, record_id: AiCveId) -> bool:
    try:
        registry.get(record_id)
    except AivdError:
        return False
    return True


def _read_cnas(path: Path) -> list[CnaRegistration]:
    if not path.exists():
        return []
    raw = loads(path.read_text(encoding="utf-8"))
    try:
        return [CnaRegistration.from_dict(d) for d in raw]
    except (KeyError, TypeError, ValueError) as exc:
        raise AivdError("MALFORMED_DOCUMENT", f"{path.name}: {exc}") from exc


def _write_cnas(path: Path, cnas) -> None:
    path.write_text(dumps([c.to_dict() for c in sorted(cnas, key=lambda c: c.cna_id)]), encoding="utf-8")
