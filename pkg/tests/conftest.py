from __future__ import annotations

import pytest

from codesign_lab import memcalc


@pytest.fixture(autouse=True)
def _no_user_presets(monkeypatch):
    # keep tests independent of the caller's environment
    monkeypatch.delenv(memcalc.PRESET_ENV, raising=False)


@pytest.fixture(scope="session")
def models():
    return memcalc.builtin_models()


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
