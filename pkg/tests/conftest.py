from __future__ import annotations

from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import HealthCheck, settings

from aivd.catalog import load_catalog_dir
from aivd.record import parse_record
from aivd.registry import CnaRegistration, Registry
from aivd.store import seed_dir

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large]
)
settings.load_profile("default")

SEED_RECORD = seed_dir() / "ai-cve-2024-1234.json"
SEED_VECTOR = "AIVSS:1.0/AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:N/A:N/DP:N/MI:H/AE:N/DS:N"

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


class StepClock:
    """Deterministic clock: each call advances one second."""

    def __init__(self, start: datetime = datetime(2025, 1, 1, tzinfo=timezone.utc)) -> None:
        self.now = start

    def __call__(self) -> datetime:
        self.now += timedelta(seconds=1)
        return self.now


@pytest.fixture(scope="session")
def catalog():
    return load_catalog_dir(seed_dir() / "catalog")


@pytest.fixture(scope="session")
def seed_text() -> str:
    return SEED_RECORD.read_text(encoding="utf-8")


@pytest.fixture
def seed_record(seed_text):
    return parse_record(seed_text)


@pytest.fixture
def clock() -> StepClock:
    return StepClock()


@pytest.fixture
def registry(catalog, clock) -> Registry:
    return Registry(catalog, cnas=[CnaRegistration("test-cna", "Test CNA", 2000, 2030)], clock=clock)


@pytest.fixture
def seeded(registry, seed_record) -> Registry:
    registry.import_record(seed_record, "seed")
    return registry


def pytest_terminal_summary(terminalreporter) -> None:
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
