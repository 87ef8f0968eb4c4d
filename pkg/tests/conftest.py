"""Shared fixtures: unique port ranges per test and netcore cleanup."""
from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from beavr.netcore import shutdown_all_publishers

# The suite runs on slow single-core CI boxes; wall-clock deadlines on
# individual hypothesis examples only produce flaky failures there.
settings.register_profile(
    "beavr", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("beavr")

_SESSION_SHIFTS = itertools.count(0)
# Step 10: every data port brings a +1 handshake port, and a few tests bind
# small clusters of related endpoints.
_PORTS = itertools.count(17000, 10)


@pytest.fixture(autouse=True)
def _close_publishers():
    """Publishers are process-wide singletons; drop them between tests."""
    yield
    shutdown_all_publishers()


@pytest.fixture
def port_shift() -> int:
    """Unique offset moving a session's whole port block out of the canned
    range, so process tests never collide with each other or the defaults."""
    return 3000 + 200 * next(_SESSION_SHIFTS)


@pytest.fixture
def free_port() -> int:
    """One never-reused port for raw netcore endpoints."""
    return next(_PORTS)


@pytest.fixture
def free_ports():
    """Allocator handing out distinct ports on demand."""

    def take() -> int:
        return next(_PORTS)

    return take


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation matrix via a normalized random quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )
