"""Non-learning node placement strategies."""
from __future__ import annotations

import numpy as np

from .embedding import NoNodeCandidate
from .substrate import SubstrateNetwork, VirtualNetwork


def _by_demand(vn: VirtualNetwork) -> list[int]:
    return sorted(vn.nodes, key=lambda v: (-vn.nodes[v], v))


def node_rank_scores(net: SubstrateNetwork) -> np.ndarray:
    incident = np.zeros(net.n_nodes, dtype=np.int64)
    np.add.at(incident, net.link_ends[:, 0], net.bw_free)
    np.add.at(incident, net.link_ends[:, 1], net.bw_free)
    return net.cpu_free.astype(np.int64) * incident


def place_noderank(net: SubstrateNetwork, vn: VirtualNetwork) -> dict[int, int]:
    """noderank-lite: cpu_free * incident free bandwidth, highest first.

    A simplified stand-in for the random-walk NodeRank; links are then
    mapped breadth-first by ``map_links``.
    """
    score = node_rank_scores(net)
    ranked = sorted(range(net.n_nodes), key=lambda p: (-int(score[p]), p))
    used: set[int] = set()
    out = {}
    for v in _by_demand(vn):
        for p in ranked:
            if p not in used and net.cpu_free[p] >= vn.nodes[v]:
                out[v] = p
                used.add(p)
                break
        else:
            raise NoNodeCandidate(f"no host for virtual node {v}")
    return out


place_noderank.name = "noderank-lite"


def place_greedy(net: SubstrateNetwork, vn: VirtualNetwork) -> dict[int, int]:
    """Each virtual node (largest demand first) to the feasible node with most free CPU."""
    used: set[int] = set()
    out = {}
    for v in _by_demand(vn):
        best = None
        for p in range(net.n_nodes):
            if p in used or net.cpu_free[p] < vn.nodes[v]:
                continue
            if best is None or net.cpu_free[p] > net.cpu_free[best]:
                best = p
        if best is None:
            raise NoNodeCandidate(f"no host for virtual node {v}")
        out[v] = best
        used.add(best)
    return out


place_greedy.name = "greedy"


def place_slack(net: SubstrateNetwork, vn: VirtualNetwork) -> dict[int, int]:
    """Fitness-driven placement: the feasible host left with the smallest free/capacity ratio.

    Pairs with consolidation for the fitness-consolidate strategy.
    """
    used: set[int] = set()
    out = {}
    for v in _by_demand(vn):
        best, best_key = None, None
        for p in range(net.n_nodes):
            d = vn.nodes[v]
            if p in used or net.cpu_free[p] < d:
                continue
            key = ((net.cpu_free[p] - d) / max(int(net.cpu_capacity[p]), 1), p)
            if best_key is None or key < best_key:
                best, best_key = p, key
        if best is None:
            raise NoNodeCandidate(f"no host for virtual node {v}")
        out[v] = best
        used.add(best)
    return out


place_slack.name = "fitness-consolidate"


def place_random(net: SubstrateNetwork, vn: VirtualNetwork, seed=None, rng=None) -> dict[int, int]:
    """Uniform over feasible, unused physical nodes, one virtual node at a time."""
    if rng is None:
        rng = np.random.default_rng(seed)
    used: set[int] = set()
    out = {}
    for v in _by_demand(vn):
        feasible = [p for p in range(net.n_nodes) if p not in used and net.cpu_free[p] >= vn.nodes[v]]
        if not feasible:
            raise NoNodeCandidate(f"no host for virtual node {v}")
        p = feasible[int(rng.integers(len(feasible)))]
        out[v] = p
        used.add(p)
    return out


class RandomPlacer:
    name = "random"

    def __init__(self, seed=0):
        self.rng = np.random.default_rng(seed)

    def __call__(self, net, vn):
        return place_random(net, vn, rng=self.rng)
