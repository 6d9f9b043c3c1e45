"""The reference tables under docs/ must match the code they describe."""

from __future__ import annotations

import re
from pathlib import Path

from aivd.aibom import leaf_fields
from aivd.record import ME_FIELDS, PROFILE_MES
from aivd.validation import Profile

DOCS = Path(__file__).resolve().parent.parent / "docs"


def table_rows(text: str) -> list[list[str]]:
    rows = []
    for line in text.splitlines():
        if line.startswith("|") and not re.match(r"^\|[-| ]+\|$", line):
            rows.append([c.strip() for c in line.strip("|").split("|")])
    return rows[1:]


def test_minimum_elements_table():
    rows = table_rows((DOCS / "minimum_elements.md").read_text(encoding="utf-8"))
    assert [int(r[0]) for r in rows] == sorted(ME_FIELDS)
    for me, _, field, first in rows:
        assert field.strip("`") == ME_FIELDS[int(me)]
        earliest = next(p for p in Profile if int(me) in PROFILE_MES[p])
        assert first == earliest.value


def test_aibom_fields_table():
    text = (DOCS / "aibom_fields.md").read_text(encoding="utf-8")
    listed = [r[0].strip("`") for r in table_rows(text)]
    assert listed == leaf_fields()
    assert f"Total: {len(leaf_fields())} leaves in 5 sections." in text
