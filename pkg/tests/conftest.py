"""Shared helpers and the per-criterion summary printed after the acceptance run."""
from __future__ import annotations

import random

import pytest

from zkdl.field import P

_CRITERIA: dict[int, tuple[str, str]] = {}


def random_table(rng: random.Random, nvars: int, small: bool = False) -> list[int]:
    hi = 100 if small else P
    return [rng.randrange(hi) for _ in range(1 << nvars)]


def random_point(rng: random.Random, n: int) -> list[int]:
    return [rng.randrange(P) for _ in range(n)]


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    name = report.nodeid.rsplit("::", 1)[-1]
    if not name.startswith("test_criterion_"):
        return
    num = int(name.split("_")[2])
    for key, value in report.user_properties:
        if key == "detail":
            detail = value
            break
    else:
        detail = ""
    _CRITERIA[num] = ("PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        status, detail = _CRITERIA[num]
        terminalreporter.write_line(f"criterion {num}: {status}  {detail}".rstrip())


@pytest.fixture
def detail(record_property):
    """Attach a one-line result summary to the criterion line."""
    def put(text: str):
        record_property("detail", text)
    return put
