import os

import pytest
from hypothesis import HealthCheck, settings

from dvne.substrate import SubstrateNetwork, VirtualNetwork
from dvne.workload import WorkloadConfig

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=400, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def line3():
    # 0 - 1 - 2
    return SubstrateNetwork([10, 10, 10], [(0, 1, 10), (1, 2, 10)])


@pytest.fixture
def square():
    # 0 - 1
    # |   |
    # 3 - 2     plus diagonal 0-2
    return SubstrateNetwork([20, 20, 20, 20], [(0, 1, 10), (1, 2, 10), (2, 3, 10), (0, 3, 10), (0, 2, 5)])


@pytest.fixture
def pair_vn():
    return VirtualNetwork.from_lists([3, 4], [(0, 1, 2)])


@pytest.fixture
def small_cfg():
    return WorkloadConfig(n_substrate_nodes=12, n_substrate_links=24, n_vnrs=30, vnodes_range=(2, 4),
                          arrivals_per_100_time_units=5, mean_lifetime=200, rng_seed=3)


def random_vn(rng, n_max=5, demand=(1, 6)):
    n = int(rng.integers(2, n_max + 1))
    cpu = rng.integers(demand[0], demand[1] + 1, size=n).tolist()
    links = [(i, int(rng.integers(0, i)), int(rng.integers(demand[0], demand[1] + 1))) for i in range(1, n)]
    return VirtualNetwork.from_lists(cpu, links)


def random_substrate(rng, n=10, extra=10, cap=(20, 40)):
    perm = rng.permutation(n)
    edges = {tuple(sorted((int(perm[i]), int(perm[rng.integers(0, i)])))) for i in range(1, n)}
    while len(edges) < n - 1 + extra and len(edges) < n * (n - 1) // 2:
        a, b = rng.choice(n, size=2, replace=False)
        edges.add((int(min(a, b)), int(max(a, b))))
    cpu = rng.integers(cap[0], cap[1] + 1, size=n)
    return SubstrateNetwork(cpu, [(u, v, int(rng.integers(cap[0], cap[1] + 1))) for u, v in sorted(edges)])


# criterion name -> (passed, detail); filled by the acceptance suite
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in ACCEPTANCE.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
