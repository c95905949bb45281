import os
from pathlib import Path

import numpy as np
import pytest

from archprune import data as datamod

REPO = Path(__file__).resolve().parent.parent

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def mnist_root():
    root = Path(os.environ.get("APDATA", REPO / "data"))
    if not datamod.mnist_available(root):
        try:
            datamod.fetch_mnist(root, try_download=False)
        except FileNotFoundError as exc:
            pytest.skip(str(exc))
    os.environ["APDATA"] = str(root)
    return root


@pytest.fixture(scope="session")
def mnist(mnist_root):
    return datamod.load_mnist(mnist_root)


@pytest.fixture
def acceptance():
    """Record ``(criterion, passed, detail)`` for the end-of-run summary."""

    def record(key, passed, detail):
        ACCEPTANCE[key] = (bool(passed), detail)
        print(f"[{'PASS' if passed else 'FAIL'}] criterion {key}: {detail}")
        return passed

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {key}: {detail}")
