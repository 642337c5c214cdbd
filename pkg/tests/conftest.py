import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from forgecam.bmfe import extract_features  # noqa: E402
from forgecam.fixtures import (default_machine, default_ncu, default_tools, fixture_die,  # noqa: E402
                               pocket_die)
from forgecam.ppg import generate_plan  # noqa: E402
from forgecam.topology import build_topology_graph  # noqa: E402


@pytest.fixture(scope="session")
def die():
    return fixture_die()


@pytest.fixture(scope="session")
def features(die):
    return extract_features(die)


@pytest.fixture(scope="session")
def graph(die, features):
    return build_topology_graph(die, features, index=features.index)


@pytest.fixture(scope="session")
def timed_plan(die):
    t0 = time.perf_counter()
    plan = generate_plan(die, default_tools(), default_machine(), default_ncu())
    return plan, time.perf_counter() - t0


@pytest.fixture(scope="session")
def plan(timed_plan):
    return timed_plan[0]


@pytest.fixture(scope="session")
def pocket():
    return pocket_die()


@pytest.fixture(scope="session")
def pocket_features(pocket):
    return extract_features(pocket)
