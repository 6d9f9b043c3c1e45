from __future__ import annotations

import json

import pytest

from aivd.aibom import parse_aibom
from aivd.errors import AivdError
from aivd.record import LifecycleStatus, parse_record
from aivd.registry import CnaRegistration
from aivd.severity import Trigger
from aivd.store import Store, seed_dir
from conftest import SEED_VECTOR, StepClock


def code_of(fn, *args, **kw) -> str:
    with pytest.raises(AivdError) as exc:
        fn(*args, **kw)
    return exc.value.code


@pytest.fixture
def store(tmp_path):
    with Store.open(tmp_path / "data", clock=StepClock()) as s:
        s.register_cna(CnaRegistration("lab", "Lab", 2020, 2030))
        s.import_dir(seed_dir(), "seed")
        yield s


def test_fresh_store_layout(tmp_path):
    with Store.open(tmp_path / "d") as s:
        assert s.registry.records() == []
        assert s.catalog.version == "2024.1"
    assert sorted(p.name for p in (tmp_path / "d").iterdir()) == ["aibom", "catalog"]


def test_reopen_replays(store, tmp_path):
    store.registry.transition_status("AI-CVE-2024-1234", LifecycleStatus.TRIAGED, "ana", "checked")
    store.registry.rescore("AI-CVE-2024-1234", SEED_VECTOR.replace("MI:H", "MI:L"), Trigger.MODEL_UPDATE, "ana")
    before = store.registry.snapshot()
    store.close()
    lines = (tmp_path / "data" / "events.jsonl").read_text().splitlines()
    assert [json.loads(x)["sequence"] for x in lines] == [1, 2, 3]
    with Store.open(tmp_path / "data") as again:
        assert again.registry.snapshot() == before
        assert again.registry.events == store.registry.events
        assert set(again.registry.cnas) == {"lab"}
        assert str(again.registry.assign_id("lab", 2024)) == "AI-CVE-2024-1235"


def test_corrupt_log(store, tmp_path):
    store.close()
    log = tmp_path / "data" / "events.jsonl"
    log.write_text(log.read_text() + "{broken\n")
    assert code_of(Store.open, tmp_path / "data") == "CORRUPT_STORE"


def test_tampered_log(store, tmp_path):
    store.registry.transition_status("AI-CVE-2024-1234", LifecycleStatus.TRIAGED, "ana")
    store.close()
    log = tmp_path / "data" / "events.jsonl"
    lines = log.read_text().splitlines()
    event = json.loads(lines[-1])
    event["payload"]["to"] = "Resolved"
    log.write_text("\n".join(lines[:-1] + [json.dumps(event)]) + "\n")
    with pytest.raises(AivdError) as exc:
        Store.open(tmp_path / "data")
    assert exc.value.code == "CORRUPT_STORE" and "illegal transition" in exc.value.message


def test_corrupt_catalog(tmp_path):
    root = tmp_path / "d"
    (root / "catalog").mkdir(parents=True)
    (root / "catalog" / "x.json").write_text('[{"id": "AI-CWE-1", "name": "a", "weakness_class": "DataHandling", '
                                             '"relationships": [{"kind": "ChildOf", "target": "AI-CWE-1"}]}]')
    assert code_of(Store.open, root) == "CORRUPT_STORE"


def test_export_import_round_trip(store, tmp_path):
    rid = store.registry.submit(
        parse_record({"description": "d", "report_date": "2024-07-01", "reported_by": "r",
                      "ai_system": {"name": "n", "type": "t", "aibom_ref": "cnn"}}),
        "lab",
    ).id
    store.put_aibom("cnn", store.record_aibom("AI-CVE-2024-1234"))
    out = tmp_path / "export"
    assert store.export(out) == 2
    names = sorted(p.name for p in out.iterdir())
    assert names == ["AI-CVE-2024-1234.json", f"{rid}.json", "aibom", "catalog", "cnas.json"]
    assert (out / "AI-CVE-2024-1234.json").read_text() == (seed_dir() / "ai-cve-2024-1234.json").read_text()

    with Store.open(tmp_path / "other") as other:
        assert other.import_dir(out) == 2
        assert other.registry.snapshot() == store.registry.snapshot()
        assert "lab" in other.registry.cnas
        assert other.record_aibom(str(rid)) == store.record_aibom("AI-CVE-2024-1234")
        assert code_of(other.import_dir, out) == "DUPLICATE_ID"
        assert len(other.registry.records()) == 2


def test_import_checks_file_names(store, tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    (src / "AI-CVE-2024-0007.json").write_text((seed_dir() / "ai-cve-2024-1234.json").read_text())
    assert code_of(store.import_dir, src) == "BAD_ID"
    assert code_of(store.import_dir, tmp_path / "missing") == "NOT_FOUND"


def test_aibom_names(store):
    doc = parse_aibom({"data": {"source": "x"}})
    store.put_aibom("model-1.0", doc)
    assert store.get_aibom("model-1.0") == doc
    assert code_of(store.put_aibom, "../evil", doc) == "BAD_PATH"
    assert code_of(store.get_aibom, "../evil") == "NOT_FOUND"
    assert code_of(store.record_aibom, "AI-CVE-2024-9999") == "NOT_FOUND"
