from __future__ import annotations

from pathlib import Path

import pytest

from branchfront.nonlinearity import CombustionNonlinearity
from branchfront.wave1d import compute_wave

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


@pytest.fixture(scope="session")
def nl():
    return CombustionNonlinearity()


@pytest.fixture(scope="session")
def profile(nl):
    return compute_wave(nl)


@pytest.fixture(scope="session")
def configs_dir():
    return CONFIGS


# (criterion, passed, detail) rows filled by test_acceptance.py
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
