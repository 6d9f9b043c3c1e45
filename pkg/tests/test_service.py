from __future__ import annotations

import json
import socket
from concurrent.futures import ThreadPoolExecutor

import pytest
from fastapi.testclient import TestClient

from aivd.errors import AivdError
from aivd.registry import CnaRegistration
from aivd.service import create_app, envelope, http_status, parse_addr, serve
from aivd.store import Store, seed_dir
from conftest import SEED_RECORD, SEED_VECTOR, StepClock

RID = "AI-CVE-2024-1234"
DRAFT = {
    "description": "Gradient leakage exposes private inputs.",
    "report_date": "2024-08-01",
    "reported_by": "Example Lab",
    "ai_system": {"name": "federated model", "type": "CNN"},
}


@pytest.fixture
def store(tmp_path):
    with Store.open(tmp_path / "data", clock=StepClock()) as s:
        s.register_cna(CnaRegistration("lab", "Lab", 2020, 2030))
        s.import_dir(seed_dir(), "seed")
        yield s


@pytest.fixture
def client(store):
    return TestClient(create_app(store), raise_server_exceptions=False)


def assert_error(resp, status: int, code: str) -> dict:
    assert resp.status_code == status, resp.text
    body = resp.json()
    assert set(body) == {"error"} and set(body["error"]) == {"code", "message", "details"}
    assert body["error"]["code"] == code
    return body["error"]


# -- status mapping ---------------------------------------------------------------------


@pytest.mark.parametrize(
    "code, status",
    [("VALIDATION_FAILED", 422), ("NOT_FOUND", 404), ("ILLEGAL_TRANSITION", 409), ("DUPLICATE_ID", 409),
     ("UNKNOWN_CNA", 400), ("YEAR_OUT_OF_RANGE", 400), ("BAD_PREFIX", 400), ("MISSING_METRIC", 400),
     ("MALFORMED_DOCUMENT", 400), ("OUT_OF_RANGE", 400), ("CORRUPT_STORE", 500), ("INTERNAL", 500)],
)
def test_http_status(code, status):
    assert http_status(code) == status


def test_envelope_shape():
    assert envelope(AivdError("NOT_FOUND", "gone", {"id": 1})) == {
        "error": {"code": "NOT_FOUND", "message": "gone", "details": {"id": 1}}
    }


# -- records ---------------------------------------------------------------------------


def test_get_record_is_canonical_bytes(client):
    resp = client.get(f"/api/v1/records/{RID}")
    assert resp.status_code == 200
    assert resp.headers["content-type"].startswith("application/json")
    assert resp.text == SEED_RECORD.read_text(encoding="utf-8")


def test_missing_record(client):
    assert_error(client.get("/api/v1/records/AI-CVE-2024-9999"), 404, "NOT_FOUND")
    assert_error(client.get("/api/v1/records/CVE-2024-1"), 400, "BAD_ID")
    assert_error(client.get("/api/v1/nothing"), 404, "NOT_FOUND")
    assert_error(client.delete(f"/api/v1/records/{RID}"), 405, "METHOD_NOT_ALLOWED")


def test_submit(client):
    resp = client.post("/api/v1/records", json=DRAFT, headers={"X-CNA-ID": "lab"})
    assert resp.status_code == 201
    body = resp.json()
    assert body["id"] == "AI-CVE-2024-1235" and body["status"] == "Reported"
    assert client.get("/api/v1/records/AI-CVE-2024-1235").text == resp.text


def test_submit_errors(client):
    assert_error(client.post("/api/v1/records", json=DRAFT), 400, "MISSING_HEADER")
    assert_error(client.post("/api/v1/records", json=DRAFT, headers={"X-CNA-ID": "nobody"}), 400, "UNKNOWN_CNA")
    err = assert_error(
        client.post("/api/v1/records", json={**DRAFT, "reported_by": ""}, headers={"X-CNA-ID": "lab"}),
        422, "VALIDATION_FAILED",
    )
    assert [f["path"] for f in err["details"]["findings"] if f["level"] == "Error"] == ["reported_by"]
    assert_error(client.post("/api/v1/records", content=b"{nope", headers={"X-CNA-ID": "lab"}), 400, "MALFORMED_DOCUMENT")


def test_parallel_submits_are_contiguous(client, store):
    def one(_):
        return client.post("/api/v1/records", json=DRAFT, headers={"X-CNA-ID": "lab"}).json()["id"]

    with ThreadPoolExecutor(8) as pool:
        ids = list(pool.map(one, range(24)))
    serials = sorted(int(i.rsplit("-", 1)[1]) for i in ids)
    assert serials == list(range(1235, 1235 + 24))
    assert [e.sequence for e in store.registry.events] == list(range(1, len(store.registry.events) + 1))


def test_patch(client):
    resp = client.patch(f"/api/v1/records/{RID}", json={"impact": "Privacy leakage"}, headers={"X-Actor": "ana"})
    assert resp.status_code == 200 and resp.json()["impact"] == "Privacy leakage"
    assert_error(client.patch(f"/api/v1/records/{RID}", json={"status": "Resolved"}), 400, "BAD_FIELD_UPDATE")
    assert_error(client.patch(f"/api/v1/records/{RID}", json={"description": ""}), 422, "VALIDATION_FAILED")


def test_status(client):
    url = f"/api/v1/records/{RID}/status"
    assert_error(client.post(url, json={"to": "Resolved", "actor": "ana"}), 409, "ILLEGAL_TRANSITION")
    assert_error(client.post(url, json={"to": "Open", "actor": "ana"}), 400, "BAD_STATUS")
    assert_error(client.post(url, json={"to": "Triaged"}), 400, "MISSING_FIELD")
    resp = client.post(url, json={"to": "Triaged", "actor": "ana", "note": "ok"})
    assert resp.status_code == 200
    assert resp.json()["status_history"][-1]["to"] == "Triaged"


def test_rescore(client):
    url = f"/api/v1/records/{RID}/rescore"
    vector = SEED_VECTOR.replace("MI:H", "MI:L")
    resp = client.post(url, json={"vector": vector, "trigger": "ModelUpdate", "actor": "ana", "note": "retrained"})
    assert resp.status_code == 200
    severity = resp.json()["severity"]
    assert severity["value"] == 8.1 and severity["band"] == "High"
    assert [(e["value"], e["trigger"]) for e in severity["history"]] == [(9.0, "Initial"), (8.1, "ModelUpdate")]
    assert_error(client.post(url, json={"vector": "AIVSS:1.0/AV:N", "trigger": "Manual", "actor": "a"}), 400, "MISSING_METRIC")
    assert_error(client.post(url, json={"vector": vector, "trigger": "Whim", "actor": "a"}), 400, "BAD_TRIGGER")


def test_search(client):
    body = client.get("/api/v1/records", params={"vendor": "Google", "min_score": "9.0"}).json()
    assert body["total"] == 1 and body["page"] == 1 and body["page_size"] == 50
    assert body["items"][0]["id"] == RID
    assert client.get("/api/v1/records", params={"weakness": "AI-CWE-100"}).json()["total"] == 0
    assert client.get("/api/v1/records", params={"min_score": "9.5"}).json()["items"] == []
    assert_error(client.get("/api/v1/records", params={"colour": "red"}), 400, "BAD_FILTER")
    assert_error(client.get("/api/v1/records", params={"page": "0"}), 400, "BAD_FILTER")


def test_record_aibom(client):
    body = client.get(f"/api/v1/records/{RID}/aibom").json()
    assert body["data"]["source"] == "NIST (MNIST)"


# -- catalog, scoring, AIBOM -------------------------------------------------------------


def test_catalog_routes(client):
    assert [w["id"] for w in client.get("/api/v1/catalog/weaknesses").json()] == [
        "AI-CWE-100", "AI-CWE-101", "AI-CWE-102", "AI-CWE-103"
    ]
    assert [w["id"] for w in client.get("/api/v1/catalog/weaknesses", params={"class": "PrivacySafeguard"}).json()] == ["AI-CWE-103"]
    assert client.get("/api/v1/catalog/weaknesses/AI-CWE-100").json()["name"] == "Inadequate Input Filtering"
    assert [m["id"] for m in client.get("/api/v1/catalog/weaknesses/AI-CWE-100/mitigations").json()] == ["MIT-0001"]
    assert client.get("/api/v1/catalog/mitigations/MIT-0001").json()["tactic"] == "Adversarial Detection"
    assert_error(client.get("/api/v1/catalog/weaknesses/AI-CWE-7"), 404, "NOT_FOUND")
    assert_error(client.get("/api/v1/catalog/weaknesses", params={"class": "Vibes"}), 400, "BAD_FILTER")


def test_score(client):
    assert client.post("/api/v1/score", json={"vector": SEED_VECTOR}).json() == {
        "value": 9.0, "band": "Critical", "vector": SEED_VECTOR
    }
    env = client.post("/api/v1/score", json={"vector": SEED_VECTOR, "environmental": {"requirements": {"AIR": "H"}}})
    assert env.json()["value"] == 9.8
    assert_error(client.post("/api/v1/score", json={"vector": SEED_VECTOR + "/AV:L"}), 400, "DUPLICATE_METRIC")
    assert_error(client.post("/api/v1/score", json={"vector": "nonsense"}), 400, "BAD_PREFIX")
    assert_error(client.post("/api/v1/score", json={}), 400, "MISSING_FIELD")


def test_aibom_validate(client):
    ok = client.post("/api/v1/aibom/validate", json=json.loads(SEED_RECORD.read_text())["ai_system"]["aibom"])
    assert ok.status_code == 200 and ok.json()["valid"] is True
    bad = client.post("/api/v1/aibom/validate", json={"meta": {}})
    assert bad.status_code == 200 and bad.json()["valid"] is False
    assert_error(client.post("/api/v1/aibom/validate", json={"meta": {"owner": 1}}), 400, "MALFORMED_DOCUMENT")


# -- serve ------------------------------------------------------------------------------


def test_parse_addr():
    assert parse_addr("127.0.0.1:8640") == ("127.0.0.1", 8640)
    assert parse_addr("[::1]:80") == ("::1", 80)
    for bad in ("8640", ":80", "host:port", "h:70000"):
        with pytest.raises(AivdError) as exc:
            parse_addr(bad)
        assert exc.value.code == "BAD_ADDR"


def test_serve_bind_failure(tmp_path):
    with socket.socket() as busy:
        busy.bind(("127.0.0.1", 0))
        busy.listen()
        port = busy.getsockname()[1]
        with pytest.raises(AivdError) as exc:
            serve(tmp_path / "d", f"127.0.0.1:{port}")
    assert exc.value.code == "BIND_FAILURE"
