import os

import numpy as np
import pytest


def pytest_collection_modifyitems(config, items):
    if os.environ.get("TMSNET_LONG") == "1":
        return
    skip = pytest.mark.skip(reason="long tier; set TMSNET_LONG=1 to run")
    for item in items:
        if "long" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_density(rng, d, rank=None):
    rank = rank or d
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho)


_VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_VERDICTS] = []


@pytest.fixture
def verdict(request):
    """Record one acceptance line; the summary prints them after the run."""

    def record(number, ok, detail):
        line = f"criterion {number:>3}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        request.config.stash[_VERDICTS].append((number, line))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance")
        for _, line in sorted(lines, key=lambda t: str(t[0]).zfill(4)):
            terminalreporter.write_line(line)
