import time

import numpy as np
import pytest

from assn.benchmarks import packaged_reference
from assn.quadrature import build_icosahedron_quadrature


@pytest.fixture(scope="session")
def quads():
    return {p: build_icosahedron_quadrature(p) for p in (2, 3, 4, 5)}


@pytest.fixture(scope="session")
def q2(quads):
    return quads[2]


@pytest.fixture(scope="session")
def q4(quads):
    return quads[4]


@pytest.fixture(scope="session")
def mc_ref():
    return packaged_reference()


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Record one acceptance line: ``acceptance(criterion, passed, detail, budget)``.

    Returns the verdict, which also requires the test to finish within
    ``budget`` seconds.
    """
    start = time.perf_counter()

    def record(criterion, passed, detail, budget):
        elapsed = time.perf_counter() - start
        passed = bool(passed) and elapsed < budget
        detail = f"{detail}; {elapsed:.1f} s of {budget:g} s"
        ACCEPTANCE[criterion] = (passed, detail)
        print(f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
