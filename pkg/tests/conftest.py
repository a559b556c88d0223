from pathlib import Path

import numpy as np
import pytest

from fepca.dataio import read_csv

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture
def rng():
    return np.random.default_rng(20160401)


@pytest.fixture(scope="session")
def decathlon():
    return read_csv(DATA_DIR / "decathlon.csv")


def low_rank(rng, n, p, rank, offset=True):
    x = rng.standard_normal((n, rank)) @ rng.standard_normal((rank, p))
    if offset:
        x = x + rng.standard_normal(p)
    return x


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line for an acceptance criterion and fail the test on FAIL."""

    def _report(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        if not ok:
            pytest.fail(line, pytrace=False)

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
