import os
import sys

import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

from sdiotsim.scenario import parse_scenario  # noqa: E402

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def section_v():
    return parse_scenario("sdiot_sectionV")


@pytest.fixture(scope="session")
def toy():
    return parse_scenario("toy_2x3")


@pytest.fixture(scope="session")
def failover():
    return parse_scenario("failover")


def simple_topology(links, n, m, capacity=1000.0, mains=(0,)):
    from sdiotsim.topology import build_topology

    return build_topology({
        "main_controllers": list(mains),
        "base_controllers": [{"id": i, "capacity": capacity} for i in range(n)],
        "switches": m,
        "links": [list(l) for l in links],
    })
