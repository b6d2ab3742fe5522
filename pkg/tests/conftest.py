import math

import numpy as np
import pytest

from accelaid.geodesy import GeodeticPosition, euler_to_dcm
from accelaid.strapdown import NavState


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_state(rng, speed=10.0):
    """Random non-polar state with a random attitude."""
    pos = GeodeticPosition(
        rng.uniform(-1.2, 1.2), rng.uniform(-math.pi, math.pi), rng.uniform(-100.0, 3000.0)
    )
    rpy = rng.uniform([-0.5, -0.5, -math.pi], [0.5, 0.5, math.pi])
    return NavState(pos, rng.normal(scale=speed, size=3), euler_to_dcm(*rpy), 0.0)


def random_spd(rng, n, scale=1.0):
    A = rng.normal(size=(n, n))
    return scale * (A @ A.T + n * np.eye(n))


# acceptance results, printed as one line per criterion at the end of the session
ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
