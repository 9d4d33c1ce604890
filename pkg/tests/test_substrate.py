import networkx as nx
import numpy as np
import pytest
from hypothesis import given, strategies as st

from dvne.substrate import (BrokenPath, InsufficientBandwidth, InsufficientCpu, OverRelease,
                            SubstrateNetwork, TopologyError, VirtualLink, VirtualNetwork)

from conftest import random_substrate


def test_construction_and_views(square):
    assert square.n_nodes == 4 and square.n_links == 5
    assert square.link_between(2, 0) == square.link_between(0, 2) == 4
    assert square.link_between(1, 3) is None
    assert [n.cpu_free for n in square.nodes] == [20] * 4
    assert square.links[0].endpoints == (0, 1)
    assert [v for v, _ in square.neighbors[0]] == [1, 2, 3]


@pytest.mark.parametrize("cpu,links", [
    ([1, 1], [(0, 0, 1)]),
    ([1, 1], [(0, 1, 1), (1, 0, 2)]),
    ([1, 1], [(0, 5, 1)]),
    ([-1, 1], [(0, 1, 1)]),
    ([1, 1], [(0, 1, -3)]),
])
def test_bad_topologies(cpu, links):
    with pytest.raises(TopologyError):
        SubstrateNetwork(cpu, links)


def test_node_ledger(line3):
    line3.allocate_node(1, 7)
    assert line3.cpu_free[1] == 3
    with pytest.raises(InsufficientCpu):
        line3.allocate_node(1, 4)
    assert line3.cpu_free[1] == 3
    with pytest.raises(OverRelease):
        line3.release_node(1, 8)
    line3.release_node(1, 7)
    assert line3.cpu_free[1] == 10


def test_path_ledger_is_all_or_nothing(line3):
    line3.allocate_path([1], 8)
    with pytest.raises(InsufficientBandwidth):
        line3.allocate_path([0, 1], 5)
    # first link untouched by the failed call
    assert line3.bw_free.tolist() == [10, 2]
    with pytest.raises(BrokenPath):
        line3.allocate_path([1, 1], 1)
    with pytest.raises(OverRelease):
        line3.release_path([0, 1], 1)
    assert line3.bw_free.tolist() == [10, 2]


def test_path_nodes_orientation(square):
    assert square.path_nodes([0, 1]) == [0, 1, 2]
    assert square.path_nodes([1, 0]) == [2, 1, 0]
    assert square.path_nodes([3]) == [0, 3]
    with pytest.raises(BrokenPath):
        square.path_nodes([0, 2])
    with pytest.raises(BrokenPath):
        square.path_nodes([])
    assert square.links_of([0, 1, 2]) == [0, 1]
    with pytest.raises(BrokenPath):
        square.links_of([1, 3])


def test_snapshot_restore_and_copy(square):
    snap = square.snapshot()
    square.allocate_node(0, 5)
    square.allocate_path([0, 1], 3)
    assert square.allocated_units == 5 + 6
    twin = square.copy()
    square.restore(snap)
    assert square.cpu_free.tolist() == [20] * 4 and square.allocated_units == 0
    assert twin.cpu_free[0] == 15 and twin.bw_free[0] == 7


def test_text_round_trip(square):
    text = square.to_text()
    back = SubstrateNetwork.from_text("# comment\n" + text)
    assert back.to_text() == text
    with pytest.raises(TopologyError):
        SubstrateNetwork.from_text("NODES 2 LINKS 0\nNODE 1 3\nNODE 0 3\n")


@given(st.integers(0, 10_000))
def test_connectivity_matches_networkx(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 9))
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.3]
    net = SubstrateNetwork([1] * n, [(u, v, 1) for u, v in pairs])
    g = nx.Graph()
    g.add_nodes_from(range(n))
    g.add_edges_from(pairs)
    assert net.is_connected() == nx.is_connected(g)


def test_virtual_network_validate():
    VirtualNetwork.from_lists([1, 2, 3], [(0, 1, 1), (1, 2, 1)]).validate()
    bad = [
        VirtualNetwork.from_lists([1, 0], [(0, 1, 1)]),
        VirtualNetwork.from_lists([1, 1], [(0, 1, 0)]),
        VirtualNetwork({0: 1, 1: 1}, {0: VirtualLink(0, 0, 1)}),
        VirtualNetwork({0: 1, 1: 1}, {0: VirtualLink(0, 1, 1), 1: VirtualLink(1, 0, 1)}),
        VirtualNetwork.from_lists([1, 1, 1], [(0, 1, 1)]),
    ]
    for vn in bad:
        with pytest.raises(TopologyError):
            vn.validate()


def test_virtual_network_helpers():
    vn = VirtualNetwork.from_lists([5, 6, 7], [(0, 1, 2), (2, 1, 3)])
    assert vn.incident(1) == [0, 1]
    assert vn.neighbors(1) == [0, 2]
    assert vn.link_between(1, 2) == 1
    assert vn.links[1].other(2) == 1
    assert VirtualNetwork.from_text(vn.to_text()) == vn
    c = vn.copy()
    c.nodes[0] = 99
    assert vn.nodes[0] == 5


@given(st.integers(0, 10_000))
def test_random_substrate_round_trip(seed):
    net = random_substrate(np.random.default_rng(seed))
    assert SubstrateNetwork.from_text(net.to_text()).edge_list() == net.edge_list()
