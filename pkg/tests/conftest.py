from __future__ import annotations

from pathlib import Path

import pytest

from skillforge.config import GlobalConfig, package_data
from skillforge.pipeline import make_backends

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report_criterion():
    """Record a one-line verdict for the acceptance summary."""

    def record(number: int, title: str, ok: bool, detail: str = "") -> None:
        status = "PASS" if ok else "FAIL"
        ACCEPTANCE_LINES.append(f"[{status}] criterion {number}: {title}" + (f" ({detail})" if detail else ""))

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return package_data()


@pytest.fixture
def config(tmp_path) -> GlobalConfig:
    return GlobalConfig(library_path=tmp_path / "library.json", out_dir=tmp_path / "out")


@pytest.fixture
def backends(config):
    return make_backends(config)
