"""Canonical JSON rendering and ISO-8601 helpers used by every document format."""

from __future__ import annotations

import json
from datetime import date, datetime, timezone
from typing import Any

from .errors import AivdError


def dumps(obj: Any) -> str:
    """Two-space indented UTF-8 JSON with a trailing newline.

    Key order is whatever the caller built; document serializers build their
    dicts in schema order so the output is deterministic.
    """
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


def loads(text: str | bytes) -> Any:
    try:
        return json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise AivdError("MALFORMED_DOCUMENT", f"invalid JSON: {exc}") from exc


def sort_keys_deep(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: sort_keys_deep(value[k]) for k in sorted(value)}
    if isinstance(value, list):
        return [sort_keys_deep(v) for v in value]
    return value


def format_date(d: date) -> str:
    return d.isoformat()


def parse_date(text: Any, path: str) -> date:
    if not isinstance(text, str):
        raise AivdError("BAD_FIELD_TYPE", f"{path}: expected ISO-8601 date string")
    try:
        return date.fromisoformat(text)
    except ValueError as exc:
        raise AivdError("BAD_FIELD_TYPE", f"{path}: {text!r} is not an ISO-8601 date") from exc


def utcnow() -> datetime:
    return datetime.now(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    ts = ts.astimezone(timezone.utc)
    return ts.isoformat().replace("+00:00", "Z")


def parse_timestamp(text: Any, path: str) -> datetime:
    if not isinstance(text, str):
        raise AivdError("BAD_FIELD_TYPE", f"{path}: expected ISO-8601 timestamp string")
    raw = text[:-1] + "+00:00" if text.endswith("Z") else text
    try:
        ts = datetime.fromisoformat(raw)
    except ValueError as exc:
        raise AivdError("BAD_FIELD_TYPE", f"{path}: {text!r} is not an ISO-8601 timestamp") from exc
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)
