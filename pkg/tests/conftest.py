"""Shared fixtures.

Every MKL solve made anywhere in the test session is recorded, and each test
fails if one of its solves produced a non-monotone objective trace.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

import rffmkl.methods  # noqa: E402
import rffmkl.mkl  # noqa: E402
import rffmkl.selection  # noqa: E402

TRACES: list = []
ACCEPTANCE: list = []
MONOTONE_SLACK = 1e-9

_solve_gram = rffmkl.mkl.solve_gram


def _recording_solve_gram(*args, **kwargs):
    fit = _solve_gram(*args, **kwargs)
    TRACES.append(fit.trace)
    return fit


for _mod in (rffmkl.mkl, rffmkl.methods, rffmkl.selection):
    _mod.solve_gram = _recording_solve_gram


@pytest.fixture(autouse=True)
def _monotone_traces():
    start = len(TRACES)
    yield
    bad = [t.objectives for t in TRACES[start:] if not t.is_monotone(MONOTONE_SLACK)]
    assert not bad, f"{len(bad)} non-monotone solver traces, first: {bad[0][:10]}"


@pytest.fixture(scope="session")
def frozen() -> dict:
    return json.loads((Path(__file__).parent / "data" / "frozen.json").read_text())


def pytest_collection_modifyitems(items):
    # acceptance runs last so the monotonicity check sees every solve of the session
    items.sort(key=lambda item: item.module.__name__.endswith("test_acceptance"))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE):
        terminalreporter.write_line(line[1])
