import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("sosmom", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("sosmom")

ACCEPTANCE: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def report():
    """Record one pass/fail line for the acceptance summary."""

    def add(name: str, ok: bool, detail: str) -> bool:
        ACCEPTANCE.append(f"{name:<5} {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
