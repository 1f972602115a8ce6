from __future__ import annotations

import sys
import time
from contextlib import contextmanager
from pathlib import Path

import pytest

TESTS = Path(__file__).resolve().parent
ROOT = TESTS.parent
FIXTURES = ROOT / "fixtures"
sys.path.insert(0, str(TESTS))

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


class Acceptance:
    """Records one pass/fail line per acceptance criterion."""

    @contextmanager
    def criterion(self, number: int, title: str, limit_s: float):
        t0 = time.perf_counter()
        detail = {"text": ""}
        try:
            yield detail
        except BaseException as exc:
            _ACCEPTANCE[number] = ("FAIL", f"{title}: {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
            raise
        elapsed = time.perf_counter() - t0
        if elapsed >= limit_s:
            _ACCEPTANCE[number] = ("FAIL", f"{title}: took {elapsed:.2f}s, limit {limit_s}s")
            pytest.fail(f"criterion {number} exceeded its time limit ({elapsed:.2f}s >= {limit_s}s)")
        _ACCEPTANCE[number] = ("PASS", f"{title}: {detail['text']} ({elapsed:.2f}s < {limit_s}s)")


@pytest.fixture
def acceptance() -> Acceptance:
    return Acceptance()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        status, text = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {status} - {text}")


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES
