"""HTTP API over a :class:`~aivd.store.Store`.

Handlers are thin adapters: decode the request, call one module operation,
encode the result with the canonical serializers. Every failure is rendered
as ``{"error": {"code", "message", "details"}}``.
"""

from __future__ import annotations

import logging
import os
import socket
from typing import Any

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import Response
from starlette.exceptions import HTTPException as StarletteHTTPException

from .aibom import parse_aibom, serialize_aibom, validate_aibom
from .canonical import dumps
from .catalog import WeaknessClass, get_mitigation, get_mitigations_for, get_weakness, list_by_class
from .errors import AivdError
from .record import LifecycleStatus, parse_record, record_to_dict, serialize_record
from .registry import QueryFilter
from .severity import EnvironmentalContext, Trigger, apply_environmental, compute_score, parse_vector
from .store import Store

log = logging.getLogger(__name__)

DEFAULT_ADDR = "127.0.0.1:8640"
FILTER_PARAMS = frozenset(
    {"weakness", "product", "vendor", "status", "min_score", "max_score", "from", "to", "q", "page", "page_size"}
)

_STATUS = {
    "VALIDATION_FAILED": 422,
    "NOT_FOUND": 404,
    "ILLEGAL_TRANSITION": 409,
    "DUPLICATE_ID": 409,
    "CLOCK_REGRESSION": 409,
    "UNKNOWN_CNA": 400,
    "YEAR_OUT_OF_RANGE": 400,
    "OUT_OF_RANGE": 400,
    "DUPLICATE_METRIC": 400,
    "MISSING_METRIC": 400,
    "METHOD_NOT_ALLOWED": 405,
}


def http_status(code: str) -> int:
    if code in _STATUS:
        return _STATUS[code]
    if code.startswith(("BAD_", "MALFORMED_", "MISSING_")):
        return 400
    return 500


def _json(body: Any, status: int = 200) -> Response:
    return Response(dumps(body), status_code=status, media_type="application/json")


def envelope(exc: AivdError) -> dict[str, Any]:
    return {"error": {"code": exc.code, "message": exc.message, "details": exc.details}}


def _error(exc: AivdError, status: int | None = None) -> Response:
    return _json(envelope(exc), status or http_status(exc.code))


async def _body(request: Request) -> Any:
    try:
        return await request.json()
    except ValueError as exc:
        raise AivdError("MALFORMED_DOCUMENT", f"request body is not JSON: {exc}") from None


def _field(body: Any, key: str, required: bool = True) -> str:
    if not isinstance(body, dict):
        raise AivdError("MALFORMED_DOCUMENT", "request body must be a JSON object")
    value = body.get(key)
    if value is None and not required:
        return ""
    if not isinstance(value, str) or (required and not value):
        raise AivdError("MISSING_FIELD", f"body field {key!r} is required and must be text")
    return value


def create_app(store: Store) -> FastAPI:
    app = FastAPI(title="AIVD", version="1.0")
    registry = store.registry
    app.state.store = store

    @app.exception_handler(AivdError)
    async def _on_domain_error(request: Request, exc: AivdError) -> Response:
        return _error(exc)

    @app.exception_handler(RequestValidationError)
    async def _on_request_error(request: Request, exc: RequestValidationError) -> Response:
        return _error(AivdError("BAD_REQUEST", "request does not match the route", exc.errors()))

    @app.exception_handler(StarletteHTTPException)
    async def _on_http_error(request: Request, exc: StarletteHTTPException) -> Response:
        code = {404: "NOT_FOUND", 405: "METHOD_NOT_ALLOWED"}.get(exc.status_code, "BAD_REQUEST")
        return _error(AivdError(code, str(exc.detail)), exc.status_code)

    @app.exception_handler(Exception)
    async def _on_unexpected(request: Request, exc: Exception) -> Response:
        log.exception("unhandled error on %s %s", request.method, request.url.path)
        return _error(AivdError("INTERNAL", "internal error"))

    # -- records -----------------------------------------------------------

    @app.post("/api/v1/records")
    async def submit(request: Request) -> Response:
        cna = request.headers.get("X-CNA-ID")
        if not cna:
            raise AivdError("MISSING_HEADER", "X-CNA-ID header is required")
        draft = parse_record(await _body(request))
        record = registry.submit(draft, cna)
        return Response(serialize_record(record), status_code=201, media_type="application/json")

    @app.get("/api/v1/records")
    async def search(request: Request) -> Response:
        params = request.query_params
        unknown = sorted(set(params) - FILTER_PARAMS)
        if unknown:
            raise AivdError("BAD_FILTER", f"unknown filter parameter(s): {', '.join(unknown)}")
        flat = {k: ",".join(params.getlist(k)) for k in params}
        page = registry.query(QueryFilter.from_params(flat))
        return _json(
            {
                "items": [record_to_dict(r) for r in page.items],
                "total": page.total,
                "page": page.page,
                "page_size": page.page_size,
            }
        )

    @app.get("/api/v1/records/{record_id}")
    async def show(record_id: str) -> Response:
        return Response(serialize_record(registry.get(record_id)), media_type="application/json")

    @app.patch("/api/v1/records/{record_id}")
    async def update(record_id: str, request: Request) -> Response:
        actor = request.headers.get("X-Actor", "api")
        record = registry.update_fields(record_id, await _body(request), actor)
        return Response(serialize_record(record), media_type="application/json")

    @app.post("/api/v1/records/{record_id}/status")
    async def transition(record_id: str, request: Request) -> Response:
        body = await _body(request)
        to = LifecycleStatus.parse(_field(body, "to"))
        record = registry.transition_status(record_id, to, _field(body, "actor"), _field(body, "note", False))
        return Response(serialize_record(record), media_type="application/json")

    @app.post("/api/v1/records/{record_id}/rescore")
    async def rescore(record_id: str, request: Request) -> Response:
        body = await _body(request)
        record = registry.rescore(
            record_id,
            _field(body, "vector"),
            Trigger.parse(_field(body, "trigger")),
            _field(body, "actor"),
            _field(body, "note", False),
        )
        return Response(serialize_record(record), media_type="application/json")

    @app.get("/api/v1/records/{record_id}/aibom")
    async def record_aibom(record_id: str) -> Response:
        return _json(serialize_aibom(store.record_aibom(record_id)))

    # -- catalog -----------------------------------------------------------

    @app.get("/api/v1/catalog/weaknesses")
    async def weaknesses(request: Request) -> Response:
        cls = request.query_params.get("class")
        if cls:
            try:
                entries = list_by_class(store.catalog, WeaknessClass(cls))
            except ValueError:
                raise AivdError("BAD_FILTER", f"unknown weakness class {cls!r}") from None
        else:
            entries = list(store.catalog.weaknesses.values())
        return _json([e.to_dict() for e in entries])

    @app.get("/api/v1/catalog/weaknesses/{weakness_id}")
    async def weakness(weakness_id: str) -> Response:
        return _json(get_weakness(store.catalog, weakness_id).to_dict())

    @app.get("/api/v1/catalog/weaknesses/{weakness_id}/mitigations")
    async def weakness_mitigations(weakness_id: str) -> Response:
        return _json([m.to_dict() for m in get_mitigations_for(store.catalog, weakness_id)])

    @app.get("/api/v1/catalog/mitigations/{mitigation_id}")
    async def mitigation(mitigation_id: str) -> Response:
        return _json(get_mitigation(store.catalog, mitigation_id).to_dict())

    # -- scoring and AIBOM -------------------------------------------------

    @app.post("/api/v1/score")
    async def score(request: Request) -> Response:
        body = await _body(request)
        vector = parse_vector(_field(body, "vector"))
        env = body.get("environmental")
        if env is None:
            result = compute_score(vector, now=registry.clock())
        else:
            result = apply_environmental(vector, EnvironmentalContext.from_dict(env), now=registry.clock())
        return _json({"value": result.value, "band": result.band.value, "vector": result.vector.render()})

    @app.post("/api/v1/aibom/validate")
    async def aibom_validate(request: Request) -> Response:
        doc = parse_aibom(await _body(request))
        return _json(validate_aibom(doc).to_dict())

    return app


def parse_addr(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host or not port.isdigit() or not 0 <= int(port) <= 65535:
        raise AivdError("BAD_ADDR", f"bind address must be host:port, got {text!r}")
    return host.strip("[]"), int(port)


def serve(data_dir: str | os.PathLike[str], addr: str | None = None) -> None:
    """Run the API until interrupted; the event log is flushed on shutdown."""
    import uvicorn

    host, port = parse_addr(addr or os.environ.get("AIVD_ADDR") or DEFAULT_ADDR)
    store = Store.open(data_dir)
    try:
        family = socket.AF_INET6 if ":" in host else socket.AF_INET
        sock = socket.socket(family, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            sock.bind((host, port))
        except OSError as exc:
            sock.close()
            raise AivdError("BIND_FAILURE", f"cannot bind {host}:{port}: {exc.strerror}") from exc
        config = uvicorn.Config(create_app(store), log_level="warning")
        uvicorn.Server(config).run(sockets=[sock])
    finally:
        store.close()
