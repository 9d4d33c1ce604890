"""Node/link assignment of virtual networks onto a substrate.

``embed`` is two-stage: a placer produces the node map, then ``map_links``
routes every virtual link over a hop-count shortest path through links with
enough free bandwidth. Every mutating entry point is all-or-nothing.
"""
from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .substrate import LedgerError, SubstrateNetwork, VirtualNetwork
from .workload import (AddLink, AddNode, InvalidMutation, MutationEvent, RemoveLink, RemoveNode,
                       ResizeLinkBw, ResizeNodeCpu, apply_mutation)


class RejectReason(enum.Enum):
    NO_NODE_CANDIDATE = "NoNodeCandidate"
    NO_PATH = "NoPath"
    TIMEOUT = "Timeout"
    INVALID_MUTATION = "InvalidMutation"


class NoNodeCandidate(Exception):
    pass


class NoPath(Exception):
    def __init__(self, vlink):
        super().__init__(f"no feasible path for virtual link {vlink}")
        self.vlink = vlink


class UnknownEmbedding(Exception):
    pass


class MutationRejected(Exception):
    def __init__(self, reason: RejectReason, detail: str = ""):
        super().__init__(f"{reason.value}: {detail}")
        self.reason = reason


@dataclass
class PathShare:
    nodes: tuple[int, ...]
    links: tuple[int, ...]
    bw: int

    @property
    def hops(self) -> int:
        return len(self.links)


@dataclass
class Embedding:
    vnr_id: int
    vn: VirtualNetwork
    node_map: dict[int, int]
    link_map: dict[int, list[PathShare]]
    active: bool = True

    def hosts(self) -> set[int]:
        return set(self.node_map.values())

    def node_usage(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for v, p in self.node_map.items():
            out[p] = out.get(p, 0) + self.vn.nodes[v]
        return out

    def link_usage(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for shares in self.link_map.values():
            for s in shares:
                for lid in s.links:
                    out[lid] = out.get(lid, 0) + s.bw
        return out

    def dump(self) -> str:
        lines = [f"MAP {self.vnr_id} NODE {v}->{p}" for v, p in sorted(self.node_map.items())]
        for lid in sorted(self.link_map):
            for s in self.link_map[lid]:
                lines.append(f"MAP {self.vnr_id} LINK {lid} PATH {','.join(map(str, s.nodes))} BW {s.bw}")
        return "\n".join(lines) + "\n"


@dataclass
class AdmissionOutcome:
    accepted: bool
    embedding: Embedding | None = None
    reject_reason: RejectReason | None = None
    detail: str = ""


@dataclass
class Verdict:
    ok: bool
    violation: str | None = None
    detail: str = ""

    def __bool__(self):
        return self.ok


Placer = Callable[[SubstrateNetwork, VirtualNetwork], dict]


def check_feasible(net: SubstrateNetwork, vn: VirtualNetwork, emb: Embedding,
                   allocated: bool = False) -> Verdict:
    """Check injectivity, link coverage and both capacity constraints for ``emb``.

    Capacities are judged against the ledger before this embedding's own
    allocations; pass ``allocated=True`` when those are already applied.
    """
    cpu_free = net.cpu_free.astype(np.int64)
    bw_free = net.bw_free.astype(np.int64)
    if allocated:
        cpu_free = cpu_free.copy()
        bw_free = bw_free.copy()
        for p, amt in emb.node_usage().items():
            cpu_free[p] += amt
        for lid, amt in emb.link_usage().items():
            bw_free[lid] += amt
    if set(emb.node_map) != set(vn.nodes):
        return Verdict(False, "coverage", "node map does not cover exactly the virtual nodes")
    hosts = list(emb.node_map.values())
    if any(not 0 <= p < net.n_nodes for p in hosts):
        return Verdict(False, "unknown-host", "node map references unknown physical node")
    if len(set(hosts)) != len(hosts):
        return Verdict(False, "injectivity", "two virtual nodes share a physical node")
    if set(emb.link_map) != set(vn.links):
        return Verdict(False, "coverage", "link map does not cover exactly the virtual links")
    for lid, link in vn.links.items():
        shares = emb.link_map[lid]
        if not shares:
            return Verdict(False, "link-coverage", f"virtual link {lid} has no path")
        ends = {emb.node_map[link.u], emb.node_map[link.v]}
        for s in shares:
            if s.bw <= 0:
                return Verdict(False, "share", f"virtual link {lid} has a non-positive share")
            try:
                walked = net.path_nodes(list(s.links))
            except LedgerError as exc:
                return Verdict(False, "path", f"virtual link {lid}: {exc}")
            if tuple(s.nodes) not in (tuple(walked), tuple(walked[::-1])) or {walked[0], walked[-1]} != ends:
                return Verdict(False, "path-endpoints", f"virtual link {lid} path does not join its hosts")
        if sum(s.bw for s in shares) != link.bw:
            return Verdict(False, "share-sum", f"virtual link {lid} shares do not sum to demand")
    for p, amt in emb.node_usage().items():
        if amt > cpu_free[p]:
            return Verdict(False, "cpu", f"node {p}: demand {amt} exceeds free {cpu_free[p]}")
    for lid, amt in emb.link_usage().items():
        if amt > bw_free[lid]:
            return Verdict(False, "bandwidth", f"link {lid}: demand {amt} exceeds free {bw_free[lid]}")
    return Verdict(True)


def audit(net: SubstrateNetwork, embeddings: Iterable[Embedding]) -> list[str]:
    """Global conservation plus per-embedding validity; returns violations."""
    embeddings = list(embeddings)
    problems = []
    if (net.cpu_free < 0).any() or (net.cpu_free > net.cpu_capacity).any():
        problems.append("cpu_free out of bounds")
    if (net.bw_free < 0).any() or (net.bw_free > net.bw_capacity).any():
        problems.append("bw_free out of bounds")
    cpu_used = np.zeros(net.n_nodes, dtype=np.int64)
    bw_used = np.zeros(net.n_links, dtype=np.int64)
    for emb in embeddings:
        for p, amt in emb.node_usage().items():
            cpu_used[p] += amt
        for lid, amt in emb.link_usage().items():
            bw_used[lid] += amt
        v = check_feasible(net, emb.vn, emb, allocated=True)
        if not v:
            problems.append(f"vnr {emb.vnr_id}: {v.violation}: {v.detail}")
    if not np.array_equal(net.cpu_capacity - net.cpu_free, cpu_used):
        problems.append("cpu conservation violated")
    if not np.array_equal(net.bw_capacity - net.bw_free, bw_used):
        problems.append("bandwidth conservation violated")
    return problems


def shortest_feasible_path(net: SubstrateNetwork, src: int, dst: int, demand: int) -> list[int] | None:
    """Hop-count shortest path over links with ``bw_free >= demand``.

    FIFO BFS with ascending neighbor order and first-discovery parents yields
    the lexicographically smallest node sequence among shortest paths.
    """
    if src == dst:
        return [src]
    parent = {src: -1}
    queue = deque([src])
    free = net.bw_free
    while queue:
        u = queue.popleft()
        for v, lid in net.neighbors[u]:
            if v in parent or free[lid] < demand:
                continue
            parent[v] = u
            if v == dst:
                path = [v]
                while parent[path[-1]] != -1:
                    path.append(parent[path[-1]])
                return path[::-1]
            queue.append(v)
    return None


def route_link(net: SubstrateNetwork, src: int, dst: int, demand: int, k: int = 1) -> list[PathShare]:
    """Allocate ``demand`` between two hosts; splits over up to ``k`` paths.

    Raises NoPath (with the ledger untouched) when the demand cannot be met.
    """
    nodes = shortest_feasible_path(net, src, dst, demand)
    if nodes is not None:
        links = net.links_of(nodes)
        net.allocate_path(links, demand)
        return [PathShare(tuple(nodes), tuple(links), demand)]
    if k <= 1:
        raise NoPath(None)
    snap = net.snapshot()
    shares: list[PathShare] = []
    remaining = demand
    while remaining > 0 and len(shares) < k:
        nodes = shortest_feasible_path(net, src, dst, 1)
        if nodes is None:
            break
        links = net.links_of(nodes)
        amount = min(remaining, int(min(net.bw_free[l] for l in links)))
        net.allocate_path(links, amount)
        shares.append(PathShare(tuple(nodes), tuple(links), amount))
        remaining -= amount
    if remaining > 0:
        net.restore(snap)
        raise NoPath(None)
    return shares


def _link_order(vn: VirtualNetwork, links: Iterable[int]) -> list[int]:
    return sorted(links, key=lambda l: (-vn.links[l].bw, l))


def map_links(net: SubstrateNetwork, vn: VirtualNetwork, node_map: dict[int, int], k: int = 1,
              links: Iterable[int] | None = None) -> dict[int, list[PathShare]]:
    """Route the virtual links (all, or the given subset) and allocate them.

    Links are routed largest demand first. On failure every allocation made
    by this call is rolled back and NoPath names the offending virtual link.
    """
    todo = _link_order(vn, vn.links if links is None else links)
    snap = net.snapshot()
    out: dict[int, list[PathShare]] = {}
    for lid in todo:
        link = vn.links[lid]
        try:
            out[lid] = route_link(net, node_map[link.u], node_map[link.v], link.bw, k)
        except NoPath:
            net.restore(snap)
            raise NoPath(lid) from None
    return out


def embed(net: SubstrateNetwork, vn: VirtualNetwork, placer: Placer, k: int = 1,
          vnr_id: int = 0) -> AdmissionOutcome:
    snap = net.snapshot()
    try:
        node_map = dict(placer(net, vn))
    except NoNodeCandidate as exc:
        return AdmissionOutcome(False, reject_reason=RejectReason.NO_NODE_CANDIDATE, detail=str(exc))
    hosts = list(node_map.values())
    if set(node_map) != set(vn.nodes) or len(set(hosts)) != len(hosts):
        return AdmissionOutcome(False, reject_reason=RejectReason.NO_NODE_CANDIDATE,
                                detail="placer returned a partial or non-injective node map")
    try:
        for v in sorted(node_map):
            net.allocate_node(node_map[v], vn.nodes[v])
    except LedgerError as exc:
        net.restore(snap)
        return AdmissionOutcome(False, reject_reason=RejectReason.NO_NODE_CANDIDATE, detail=str(exc))
    try:
        link_map = map_links(net, vn, node_map, k)
    except NoPath as exc:
        net.restore(snap)
        return AdmissionOutcome(False, reject_reason=RejectReason.NO_PATH, detail=str(exc))
    return AdmissionOutcome(True, Embedding(vnr_id, vn, node_map, link_map))


def _release_link(net: SubstrateNetwork, shares: list[PathShare]) -> None:
    for s in shares:
        net.release_path(list(s.links), s.bw)


def evict(net: SubstrateNetwork, emb: Embedding) -> None:
    if not emb.active:
        raise UnknownEmbedding(f"embedding of vnr {emb.vnr_id} is not active")
    for v, p in emb.node_map.items():
        net.release_node(p, emb.vn.nodes[v])
    for shares in emb.link_map.values():
        _release_link(net, shares)
    emb.active = False


def choose_host(net: SubstrateNetwork, vn: VirtualNetwork, emb: Embedding, node: int,
                exclude: set[int] = frozenset()) -> int:
    """Host for a single (re)placed virtual node.

    Prefers physical nodes adjacent to the hosts of its virtual neighbours,
    then more free CPU, then the lower id.
    """
    demand = vn.nodes[node]
    taken = {p for v, p in emb.node_map.items() if v != node} | set(exclude)
    peer_hosts = {emb.node_map[u] for u in vn.neighbors(node) if u in emb.node_map and u != node}
    best, best_key = None, None
    for p in range(net.n_nodes):
        if p in taken or net.cpu_free[p] < demand:
            continue
        near = sum(1 for q, _ in net.neighbors[p] if q in peer_hosts)
        key = (-near, -int(net.cpu_free[p]), p)
        if best_key is None or key < best_key:
            best, best_key = p, key
    if best is None:
        raise NoNodeCandidate(f"no host for virtual node {node}")
    return best


def _migrate_node(net, emb, old_vn, new_vn, node, k):
    """Move one virtual node (with its incident links) to a new host."""
    old_host = emb.node_map[node]
    net.release_node(old_host, old_vn.nodes[node])
    for lid in old_vn.incident(node):
        _release_link(net, emb.link_map.pop(lid))
    host = choose_host(net, new_vn, emb, node, exclude={old_host})
    net.allocate_node(host, new_vn.nodes[node])
    emb.node_map[node] = host
    emb.link_map.update(map_links(net, new_vn, emb.node_map, k, links=new_vn.incident(node)))


def _apply_delta(net, emb: Embedding, new_vn: VirtualNetwork, kind, k) -> str:
    old_vn = emb.vn
    if isinstance(kind, AddNode):
        emb.vn = new_vn
        host = choose_host(net, new_vn, emb, kind.node)
        net.allocate_node(host, kind.cpu)
        emb.node_map[kind.node] = host
        emb.link_map.update(map_links(net, new_vn, emb.node_map, k, links=[l for l, _, _ in kind.links]))
        return "added"
    if isinstance(kind, RemoveNode):
        net.release_node(emb.node_map.pop(kind.node), old_vn.nodes[kind.node])
        for lid in old_vn.incident(kind.node):
            _release_link(net, emb.link_map.pop(lid))
        return "removed"
    if isinstance(kind, AddLink):
        emb.link_map.update(map_links(net, new_vn, emb.node_map, k, links=[kind.link]))
        return "added"
    if isinstance(kind, RemoveLink):
        _release_link(net, emb.link_map.pop(kind.link))
        return "removed"
    if isinstance(kind, ResizeNodeCpu):
        host = emb.node_map[kind.node]
        diff = kind.cpu - old_vn.nodes[kind.node]
        if diff <= 0:
            net.release_node(host, -diff)
            return "in-place"
        if net.cpu_free[host] >= diff:
            net.allocate_node(host, diff)
            return "in-place"
        _migrate_node(net, emb, old_vn, new_vn, kind.node, k)
        return "migrated"
    if isinstance(kind, ResizeLinkBw):
        diff = kind.bw - old_vn.links[kind.link].bw
        shares = emb.link_map[kind.link]
        if diff <= 0:
            remaining = -diff
            kept = []
            for s in reversed(shares):
                take = min(s.bw, remaining)
                if take:
                    net.release_path(list(s.links), take)
                    remaining -= take
                if s.bw - take > 0:
                    kept.append(PathShare(s.nodes, s.links, s.bw - take))
            emb.link_map[kind.link] = kept[::-1]
            return "in-place"
        for i, s in enumerate(shares):
            if all(net.bw_free[l] >= diff for l in s.links):
                net.allocate_path(list(s.links), diff)
                shares[i] = PathShare(s.nodes, s.links, s.bw + diff)
                return "in-place"
        _release_link(net, emb.link_map.pop(kind.link))
        emb.link_map.update(map_links(net, new_vn, emb.node_map, k, links=[kind.link]))
        return "migrated"
    raise InvalidMutation(f"unsupported mutation {kind!r}")


def re_embed_delta(net: SubstrateNetwork, emb: Embedding, e: MutationEvent, k: int = 1,
                   strict: bool = False) -> AdmissionOutcome:
    """Apply one mutation to a live embedding with minimal change.

    On rejection the ledger and ``emb`` are exactly as before the call; with
    ``strict`` the rejection is raised as ``MutationRejected`` instead.
    """
    if not emb.active:
        raise UnknownEmbedding(f"embedding of vnr {emb.vnr_id} is not active")
    kind = e.kind if isinstance(e, MutationEvent) else e
    try:
        new_vn = apply_mutation(emb.vn, kind)
    except InvalidMutation as exc:
        out = AdmissionOutcome(False, reject_reason=RejectReason.INVALID_MUTATION, detail=str(exc))
        if strict:
            raise MutationRejected(out.reject_reason, out.detail)
        return out
    snap = net.snapshot()
    saved = (emb.vn, dict(emb.node_map), {l: list(s) for l, s in emb.link_map.items()})
    try:
        how = _apply_delta(net, emb, new_vn, kind, k)
    except (NoPath, NoNodeCandidate, LedgerError) as exc:
        net.restore(snap)
        emb.vn, emb.node_map, emb.link_map = saved
        reason = RejectReason.NO_PATH if isinstance(exc, NoPath) else RejectReason.NO_NODE_CANDIDATE
        if strict:
            raise MutationRejected(reason, str(exc))
        return AdmissionOutcome(False, reject_reason=reason, detail=str(exc))
    emb.vn = new_vn
    return AdmissionOutcome(True, emb, detail=how)
