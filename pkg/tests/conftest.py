import dataclasses
import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from wdnopt import kernels, network, synthetic  # noqa: E402
from wdnopt.network import Link, Node, Source, assemble_network  # noqa: E402

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# criterion number -> (status, detail), filled by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"CRITERION {k:2d}: {status}  {detail}")


@pytest.fixture(scope="session")
def toys():
    """Toy models with their default scenarios, keyed by name."""
    out = {}
    for name in synthetic.TOY_SPECS:
        m = synthetic.toy_network(name)
        out[name] = (m, network.build_scenario(m))
    return out


@pytest.fixture(params=sorted(kernels.backends()))
def backend(request):
    return kernels.backends()[request.param]


def line_network(n_junctions=3, head=60.0, length=200.0, diameter=0.2, elevation=10.0, demand=0.002):
    """Source R feeding a chain of junctions J1..Jn."""
    juncs = [Node(f"J{i + 1}", elevation, demand) for i in range(n_junctions)]
    ends = ["R"] + [j.id for j in juncs]
    links = [Link(f"P{i + 1}", ends[i], ends[i + 1], length, diameter, 100.0) for i in range(n_junctions)]
    return assemble_network(juncs, [Source("R", head)], links)


def with_resistance(model, j, r):
    links = list(model.links)
    links[j] = dataclasses.replace(links[j], resistance=r)
    return dataclasses.replace(model, links=tuple(links))


def zero_demand(model, scenario):
    return dataclasses.replace(scenario, demands=np.zeros_like(scenario.demands))
