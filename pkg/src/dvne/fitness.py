"""Fitness matrix, fitness values and the consolidation hill-climb.

Entry ``F[i, j]`` is the CPU that physical node ``i`` would have left while
hosting embedded virtual node ``j``: the current free CPU when ``i`` is the
actual host, otherwise free CPU minus the demand of ``j``. Entries that would
be ``<= 0``, or that collide with another node of the same request, carry the
infeasible marker (``feasible[i, j] == False``) and never enter a sum.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .embedding import Embedding, NoPath, map_links
from .substrate import LedgerError, SubstrateNetwork


@dataclass
class FitnessMatrix:
    columns: list[tuple[int, int]]  # (vnr id, virtual node id)
    hosts: np.ndarray
    capacity: np.ndarray
    values: np.ndarray
    feasible: np.ndarray

    @property
    def shape(self):
        return self.values.shape


@dataclass
class AdjointMatrix:
    values: np.ndarray
    has_link: np.ndarray


@dataclass(frozen=True)
class FitnessObjective:
    value: float
    beta: float


def _columns(embeddings: Iterable[Embedding]):
    cols = []
    for emb in sorted(embeddings, key=lambda e: e.vnr_id):
        for v in sorted(emb.node_map):
            cols.append((emb, v))
    return cols


def _column_values(net: SubstrateNetwork, emb: Embedding, v: int):
    host = emb.node_map[v]
    vals = net.cpu_free.astype(np.int64) - emb.vn.nodes[v]
    vals[host] = net.cpu_free[host]
    ok = vals > 0
    for u, p in emb.node_map.items():
        if u != v:
            ok[p] = False
    return host, vals, ok


def build_fitness_matrix(net: SubstrateNetwork, embeddings: Iterable[Embedding]) -> FitnessMatrix:
    cols = _columns(embeddings)
    n = net.n_nodes
    values = np.zeros((n, len(cols)), dtype=np.int64)
    feasible = np.zeros((n, len(cols)), dtype=bool)
    hosts = np.zeros(len(cols), dtype=np.int64)
    for j, (emb, v) in enumerate(cols):
        hosts[j], values[:, j], feasible[:, j] = _column_values(net, emb, v)
    return FitnessMatrix([(e.vnr_id, v) for e, v in cols], hosts, net.cpu_capacity.copy(), values, feasible)


class FitnessTracker:
    """Incrementally maintained fitness matrix.

    ``sync`` adds/drops columns for embeddings that appeared or vanished and
    rewrites only the rows whose free CPU changed since the previous sync.
    """

    def __init__(self, net: SubstrateNetwork):
        self.net = net
        self._seen_free = net.cpu_free.copy()
        self._cols: dict[tuple[int, int], tuple] = {}

    def sync(self, embeddings: Iterable[Embedding]) -> None:
        live = {}
        for emb in embeddings:
            for v in emb.node_map:
                live[(emb.vnr_id, v)] = emb
        for key in [k for k in self._cols if k not in live]:
            del self._cols[key]
        changed = np.flatnonzero(self.net.cpu_free != self._seen_free)
        for key, emb in live.items():
            v = key[1]
            old = self._cols.get(key)
            sig = (emb.node_map[v], emb.vn.nodes[v], tuple(sorted(emb.node_map.values())))
            if old is None or old[0] != sig:
                _, vals, ok = _column_values(self.net, emb, v)
                self._cols[key] = (sig, vals, ok)
            elif len(changed):
                _, vals, ok = old
                host, demand, hosts = sig
                for i in changed:
                    free = int(self.net.cpu_free[i])
                    vals[i] = free if i == host else free - demand
                    ok[i] = vals[i] > 0 and (i == host or i not in hosts)
        self._seen_free = self.net.cpu_free.copy()

    @property
    def matrix(self) -> FitnessMatrix:
        keys = sorted(self._cols)
        n = self.net.n_nodes
        values = np.zeros((n, len(keys)), dtype=np.int64)
        feasible = np.zeros((n, len(keys)), dtype=bool)
        hosts = np.zeros(len(keys), dtype=np.int64)
        for j, key in enumerate(keys):
            sig, vals, ok = self._cols[key]
            hosts[j], values[:, j], feasible[:, j] = sig[0], vals, ok
        return FitnessMatrix(keys, hosts, self.net.cpu_capacity.copy(), values, feasible)


def fitness_value(F: FitnessMatrix, j: int) -> float:
    """alpha_j: sum over physical nodes of host-indicator * f_ij / c_i."""
    host = F.hosts[j]
    total = 0.0
    for i in range(F.values.shape[0]):
        if i != host:
            continue
        if F.feasible[i, j] and F.capacity[i] > 0:
            total += F.values[i, j] / F.capacity[i]
    return total


def adjoint_matrix(net: SubstrateNetwork) -> AdjointMatrix:
    n = net.n_nodes
    values = np.zeros((n, n), dtype=np.int64)
    has = np.zeros((n, n), dtype=bool)
    for lid, (u, v) in enumerate(net.link_ends):
        values[u, v] = values[v, u] = net.bw_free[lid]
        has[u, v] = has[v, u] = True
    return AdjointMatrix(values, has)


def _ratio(free, cap) -> float:
    return float(free) / float(cap) if cap > 0 else 0.0


def overall_fitness(net: SubstrateNetwork, embeddings: Iterable[Embedding]) -> float:
    """beta(t): node availability ratios plus ratios of every used physical link."""
    node_term = 0.0
    link_term = 0.0
    for emb in sorted(embeddings, key=lambda e: e.vnr_id):
        for v in sorted(emb.node_map):
            p = emb.node_map[v]
            node_term += _ratio(net.cpu_free[p], net.cpu_capacity[p])
        for lid in sorted(emb.link_map):
            used = sorted({pl for s in emb.link_map[lid] for pl in s.links})
            for pl in used:
                link_term += _ratio(net.bw_free[pl], net.bw_capacity[pl])
    return node_term + link_term


def objective(net: SubstrateNetwork, embeddings: Iterable[Embedding]) -> FitnessObjective:
    """Per-virtual-element minimum over the substrate elements it occupies.

    A virtual node occupies exactly its host, so its term is alpha_j; a
    virtual link contributes the smallest free/capacity ratio on its paths.
    """
    embeddings = list(embeddings)
    value = 0.0
    for emb in sorted(embeddings, key=lambda e: e.vnr_id):
        for v in sorted(emb.node_map):
            host = emb.node_map[v]
            value += min(_ratio(net.cpu_free[i], net.cpu_capacity[i])
                         for i in range(net.n_nodes) if i == host)
        for lid in sorted(emb.link_map):
            used = {pl for s in emb.link_map[lid] for pl in s.links}
            value += min(_ratio(net.bw_free[pl], net.bw_capacity[pl]) for pl in used)
    return FitnessObjective(value, overall_fitness(net, embeddings))


class _Counts:
    """Occupancy counts so beta is a dot product of counts with free/capacity."""

    def __init__(self, net: SubstrateNetwork, embeddings: Iterable[Embedding]):
        self.node = np.zeros(net.n_nodes, dtype=np.int64)
        self.link = np.zeros(net.n_links, dtype=np.int64)
        for emb in embeddings:
            for p in emb.node_map.values():
                self.node[p] += 1
            for shares in emb.link_map.values():
                self.add_link(shares, 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            self._inv_cpu = np.where(net.cpu_capacity > 0, 1.0 / net.cpu_capacity, 0.0)
            self._inv_bw = np.where(net.bw_capacity > 0, 1.0 / net.bw_capacity, 0.0)

    def add_link(self, shares, sign):
        for pl in {pl for s in shares for pl in s.links}:
            self.link[pl] += sign

    def beta(self, net: SubstrateNetwork) -> float:
        return float(np.dot(self.node * net.cpu_free, self._inv_cpu)
                     + np.dot(self.link * net.bw_free, self._inv_bw))


@dataclass
class ConsolidationReport:
    moves: list[tuple[int, int, int, int]] = field(default_factory=list)  # (vnr, vnode, from, to)
    passes: int = 0
    betas: list[float] = field(default_factory=list)
    trials: int = 0


def _try_move(net, emb: Embedding, v: int, target: int, k: int):
    """Relocate ``v`` to ``target`` with its links re-routed; returns the old state or None."""
    vn = emb.vn
    old_host = emb.node_map[v]
    incident = vn.incident(v)
    old_links = {lid: emb.link_map[lid] for lid in incident}
    snap = net.snapshot()
    try:
        net.release_node(old_host, vn.nodes[v])
        for shares in old_links.values():
            for s in shares:
                net.release_path(list(s.links), s.bw)
        net.allocate_node(target, vn.nodes[v])
        emb.node_map[v] = target
        new_links = map_links(net, vn, emb.node_map, k, links=incident)
    except (NoPath, LedgerError):
        net.restore(snap)
        emb.node_map[v] = old_host
        return None
    emb.link_map.update(new_links)
    return snap, old_host, old_links, new_links


def _screen(net, counts: _Counts, emb: Embedding, v: int, limit: int | None) -> np.ndarray:
    host = emb.node_map[v]
    d = emb.vn.nodes[v]
    free = net.cpu_free.astype(float)
    inv = counts._inv_cpu
    c = counts.node
    # node-side change of beta for every possible target
    gain = (c[host] - 1) * (free[host] + d) * inv[host] - c[host] * free[host] * inv[host]
    delta = gain + (free - d * (c + 1)) * inv
    used = {pl for lid in emb.vn.incident(v) for sh in emb.link_map[lid] for pl in sh.links}
    ids = np.fromiter(used, dtype=np.int64, count=len(used))
    slack = float(np.sum(counts.link[ids] * net.bw_free[ids] * counts._inv_bw[ids])) if len(ids) else 0.0
    ok = np.flatnonzero((free >= d) & (delta <= slack + 1e-12))
    ok = ok[np.argsort(delta[ok], kind="stable")]
    return ok if limit is None else ok[:limit]


def consolidate(net: SubstrateNetwork, embeddings: list[Embedding], D: int = 0,
                embed_round: Callable[[], None] | None = None, k: int = 1,
                max_passes: int = 100, screen: bool = True,
                max_targets: int | None = 8) -> ConsolidationReport:
    """Greedy single-node relocations that never increase beta.

    Each pass visits every embedded virtual node and every physical target.
    A move is kept when the recomputed beta is no larger than before; a tie
    is kept at most once per (node, target) over the whole call, and only
    strict improvements schedule a further pass, so the loop terminates.
    After the climb, ``embed_round`` (if given) runs while ``D >= 0``.

    With ``screen`` only targets whose node-side change is at most the
    weight carried by the node's current paths are tried, best node-side
    change first and at most ``max_targets`` of them; acceptance is still
    decided on the recomputed beta.
    """
    if D < 0:
        raise ValueError("D must be non-negative")
    report = ConsolidationReport()
    embs = sorted(embeddings, key=lambda e: e.vnr_id)
    counts = _Counts(net, embs)
    beta = counts.beta(net)
    report.betas.append(beta)
    tied: set[tuple[int, int, int]] = set()
    improved = True
    while improved and report.passes < max_passes:
        improved = False
        report.passes += 1
        for emb in embs:
            for v in sorted(emb.node_map):
                for target in _screen(net, counts, emb, v, max_targets) if screen else range(net.n_nodes):
                    host = emb.node_map[v]
                    demand = emb.vn.nodes[v]
                    if target == host or net.cpu_free[target] < demand:
                        continue
                    if target in emb.node_map.values():
                        continue
                    report.trials += 1
                    moved = _try_move(net, emb, v, target, k)
                    if moved is None:
                        continue
                    snap, old_host, old_links, new_links = moved
                    counts.node[old_host] -= 1
                    counts.node[target] += 1
                    for shares in old_links.values():
                        counts.add_link(shares, -1)
                    for shares in new_links.values():
                        counts.add_link(shares, 1)
                    new_beta = counts.beta(net)
                    key = (emb.vnr_id, v, target)
                    if new_beta < beta - 1e-12:
                        improved = True
                    elif new_beta <= beta and key not in tied:
                        tied.add(key)
                    else:
                        counts.node[old_host] += 1
                        counts.node[target] -= 1
                        for shares in new_links.values():
                            counts.add_link(shares, -1)
                        for shares in old_links.values():
                            counts.add_link(shares, 1)
                        net.restore(snap)
                        emb.node_map[v] = old_host
                        emb.link_map.update(old_links)
                        continue
                    beta = new_beta
                    report.betas.append(beta)
                    report.moves.append((emb.vnr_id, v, old_host, target))
    if embed_round is not None:
        while D >= 0:
            D -= 1
            embed_round()
    return report
