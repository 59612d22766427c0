import warnings

import numpy as np
import pytest
from hypothesis import settings

# numba warns once about a missing TBB threading layer; harmless here
warnings.filterwarnings("ignore", message=".*TBB.*")

settings.register_profile("fixed", derandomize=True, deadline=None, max_examples=40, print_blob=True)
settings.load_profile("fixed")


def random_unit(rng, n):
    p = rng.standard_normal((n, 3))
    return p / np.linalg.norm(p, axis=1, keepdims=True)


def random_rotation(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def ico3():
    from csfmm.geometry import build_grid

    return build_grid("icosahedral", 3)


@pytest.fixture(scope="session")
def ico4():
    from csfmm.geometry import build_grid

    return build_grid("icosahedral", 4)


# PASS/FAIL lines from the acceptance suite, repeated after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
