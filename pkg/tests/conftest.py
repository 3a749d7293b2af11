import math

import numpy as np
import pytest

from srbresponse.observables import Perturbation
from srbresponse.response import reference_decomposition
from srbresponse.transfer import invariant_density_exact_tent
from srbresponse.unimodal import TentMap, critical_orbit

SQRT2 = math.sqrt(2.0)
U = 1.0 / (6.0 - 4.0 * SQRT2)

# acceptance lines collected by tests/test_acceptance.py, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def g2():
    return TentMap(2.0)


@pytest.fixture(scope="session")
def gsqrt2():
    return TentMap(SQRT2)


@pytest.fixture(scope="session")
def g19():
    return TentMap(1.9)


@pytest.fixture(scope="session")
def gamma_sqrt2(gsqrt2):
    return invariant_density_exact_tent(gsqrt2)


@pytest.fixture(scope="session")
def dec_g2(g2):
    return reference_decomposition(g2)


@pytest.fixture(scope="session")
def dec_sqrt2(gsqrt2):
    return reference_decomposition(gsqrt2)


@pytest.fixture(scope="session")
def dec_g19(g19):
    return reference_decomposition(g19, cells=2 ** 12, depth=64)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def gap_bumps(orbit_points, count=6, amplitudes=(0.8, -0.5, 0.7, -0.9, 0.4, 0.6)):
    """Smooth X supported in the widest gaps between orbit points, so X vanishes on the orbit."""
    pts = np.sort(np.concatenate([[0.0, 1.0], np.asarray(orbit_points)]))
    widths = np.diff(pts)
    idx = np.sort(np.argsort(widths)[::-1][:count])
    supports = [(pts[i] + 0.05 * widths[i], pts[i + 1] - 0.05 * widths[i]) for i in idx]
    return Perturbation.bumps(supports, amplitudes[:count])


@pytest.fixture(scope="session")
def X_g19(dec_g19):
    return gap_bumps(dec_g19.locations)
