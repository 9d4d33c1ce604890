"""Physical and virtual network graphs with an integer resource ledger."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class LedgerError(Exception):
    pass


class InsufficientCpu(LedgerError):
    def __init__(self, node, amount, free):
        super().__init__(f"node {node}: need {amount}, free {free}")
        self.node = node


class InsufficientBandwidth(LedgerError):
    def __init__(self, link, amount, free):
        super().__init__(f"link {link}: need {amount}, free {free}")
        self.link = link


class OverRelease(LedgerError):
    pass


class BrokenPath(LedgerError):
    pass


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class SubstrateNode:
    id: int
    cpu_capacity: int
    cpu_free: int


@dataclass(frozen=True)
class SubstrateLink:
    id: int
    endpoints: tuple[int, int]
    bw_capacity: int
    bw_free: int


class SubstrateNetwork:
    """Undirected physical network.

    Topology is fixed after construction; ``cpu_free`` and ``bw_free`` are
    the mutable ledger. ``allocated_units`` counts every unit ever allocated
    (a link allocation counts once per hop) and is restored by ``restore``.
    """

    def __init__(self, cpu_capacity: Sequence[int], links: Iterable[tuple[int, int, int]]):
        self.cpu_capacity = np.asarray(cpu_capacity, dtype=np.int64).copy()
        if self.cpu_capacity.ndim != 1:
            raise TopologyError("cpu_capacity must be one-dimensional")
        if (self.cpu_capacity < 0).any():
            raise TopologyError("negative cpu capacity")
        n = len(self.cpu_capacity)
        ends, bws = [], []
        self._pair: dict[tuple[int, int], int] = {}
        for u, v, bw in links:
            u, v = int(u), int(v)
            if not (0 <= u < n and 0 <= v < n):
                raise TopologyError(f"link ({u},{v}) references unknown node")
            if u == v:
                raise TopologyError(f"self-loop at node {u}")
            key = (min(u, v), max(u, v))
            if key in self._pair:
                raise TopologyError(f"duplicate link {key}")
            if bw < 0:
                raise TopologyError("negative bandwidth capacity")
            self._pair[key] = len(ends)
            ends.append(key)
            bws.append(int(bw))
        self.link_ends = np.asarray(ends, dtype=np.int64).reshape(-1, 2)
        self.bw_capacity = np.asarray(bws, dtype=np.int64)
        self.cpu_free = self.cpu_capacity.copy()
        self.bw_free = self.bw_capacity.copy()
        self.allocated_units = 0
        # neighbors[u] is sorted by neighbor id: BFS relies on it for tie-breaking
        nbrs: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        for lid, (u, v) in enumerate(ends):
            nbrs[u].append((v, lid))
            nbrs[v].append((u, lid))
        self.neighbors = [sorted(x) for x in nbrs]
        self.adjacency = [{lid for _, lid in x} for x in self.neighbors]

    @property
    def n_nodes(self) -> int:
        return len(self.cpu_capacity)

    @property
    def n_links(self) -> int:
        return len(self.bw_capacity)

    @property
    def nodes(self) -> list[SubstrateNode]:
        return [SubstrateNode(i, int(c), int(f))
                for i, (c, f) in enumerate(zip(self.cpu_capacity, self.cpu_free))]

    @property
    def links(self) -> list[SubstrateLink]:
        return [SubstrateLink(i, (int(u), int(v)), int(c), int(f))
                for i, ((u, v), c, f) in enumerate(zip(self.link_ends, self.bw_capacity, self.bw_free))]

    def link_between(self, u: int, v: int) -> int | None:
        return self._pair.get((min(u, v), max(u, v)))

    def edge_list(self) -> list[tuple[int, int]]:
        return [(int(u), int(v)) for u, v in self.link_ends]

    def is_connected(self) -> bool:
        if self.n_nodes == 0:
            return True
        seen = {0}
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for v, _ in self.neighbors[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return len(seen) == self.n_nodes

    # -- ledger ---------------------------------------------------------

    def allocate_node(self, node: int, amount: int) -> None:
        if amount < 0:
            raise ValueError("negative amount")
        free = self.cpu_free[node]
        if amount > free:
            raise InsufficientCpu(node, amount, int(free))
        self.cpu_free[node] = free - amount
        self.allocated_units += amount

    def release_node(self, node: int, amount: int) -> None:
        if amount < 0:
            raise ValueError("negative amount")
        if amount > self.cpu_capacity[node] - self.cpu_free[node]:
            raise OverRelease(f"node {node}: release {amount} exceeds outstanding")
        self.cpu_free[node] += amount

    def path_nodes(self, path: Sequence[int]) -> list[int]:
        """Node sequence traversed by a list of link ids; raises BrokenPath."""
        if len(path) == 0:
            raise BrokenPath("empty path")
        for lid in path:
            if not 0 <= lid < self.n_links:
                raise BrokenPath(f"unknown link {lid}")
        a, b = (int(x) for x in self.link_ends[path[0]])
        if len(path) == 1:
            return [a, b]
        c, d = (int(x) for x in self.link_ends[path[1]])
        if a in (c, d):
            nodes = [b, a]
        elif b in (c, d):
            nodes = [a, b]
        else:
            raise BrokenPath(f"links {path[0]} and {path[1]} are not adjacent")
        for lid in path[1:]:
            u, v = (int(x) for x in self.link_ends[lid])
            last = nodes[-1]
            if u == last:
                nodes.append(v)
            elif v == last:
                nodes.append(u)
            else:
                raise BrokenPath(f"link {lid} does not continue the walk at node {last}")
        if len(set(nodes)) != len(nodes):
            raise BrokenPath("path revisits a node")
        return nodes

    def links_of(self, nodes: Sequence[int]) -> list[int]:
        """Link ids along a node sequence; raises BrokenPath on a missing hop."""
        out = []
        for u, v in zip(nodes, nodes[1:]):
            lid = self.link_between(u, v)
            if lid is None:
                raise BrokenPath(f"no link between {u} and {v}")
            out.append(lid)
        return out

    def allocate_path(self, path: Sequence[int], amount: int) -> None:
        if amount < 0:
            raise ValueError("negative amount")
        self.path_nodes(path)
        for lid in path:
            if self.bw_free[lid] < amount:
                raise InsufficientBandwidth(lid, amount, int(self.bw_free[lid]))
        for lid in path:
            self.bw_free[lid] -= amount
        self.allocated_units += amount * len(path)

    def release_path(self, path: Sequence[int], amount: int) -> None:
        if amount < 0:
            raise ValueError("negative amount")
        self.path_nodes(path)
        for lid in path:
            if amount > self.bw_capacity[lid] - self.bw_free[lid]:
                raise OverRelease(f"link {lid}: release {amount} exceeds outstanding")
        for lid in path:
            self.bw_free[lid] += amount

    def snapshot(self):
        return self.cpu_free.copy(), self.bw_free.copy(), self.allocated_units

    def restore(self, snap) -> None:
        cpu, bw, units = snap
        self.cpu_free[:] = cpu
        self.bw_free[:] = bw
        self.allocated_units = units

    def copy(self) -> "SubstrateNetwork":
        out = SubstrateNetwork.__new__(SubstrateNetwork)
        out.cpu_capacity = self.cpu_capacity.copy()
        out.cpu_free = self.cpu_free.copy()
        out.link_ends = self.link_ends.copy()
        out.bw_capacity = self.bw_capacity.copy()
        out.bw_free = self.bw_free.copy()
        out.allocated_units = self.allocated_units
        out._pair = dict(self._pair)
        out.neighbors = [list(x) for x in self.neighbors]
        out.adjacency = [set(x) for x in self.adjacency]
        return out

    def to_text(self) -> str:
        lines = [f"NODES {self.n_nodes} LINKS {self.n_links}"]
        lines += [f"NODE {i} {int(c)}" for i, c in enumerate(self.cpu_capacity)]
        lines += [f"LINK {int(u)} {int(v)} {int(b)}"
                  for (u, v), b in zip(self.link_ends, self.bw_capacity)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SubstrateNetwork":
        nodes, links = parse_network_lines(text.splitlines())
        ids = [i for i, _ in nodes]
        if ids != list(range(len(ids))):
            raise TopologyError("substrate node ids must be dense 0..n-1 in order")
        return cls([c for _, c in nodes], links)


def parse_network_lines(lines: Iterable[str]):
    """Parse the ``NODES/NODE/LINK`` block format into (nodes, links)."""
    rows = []
    for raw in lines:
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append(line.split())
    if not rows or rows[0][0] != "NODES" or len(rows[0]) != 4 or rows[0][2] != "LINKS":
        raise TopologyError("expected header 'NODES <n> LINKS <m>'")
    try:
        n, m = int(rows[0][1]), int(rows[0][3])
        body = rows[1:]
        if len(body) != n + m:
            raise TopologyError(f"expected {n} NODE and {m} LINK lines, got {len(body)}")
        nodes = []
        for r in body[:n]:
            if r[0] != "NODE" or len(r) != 3:
                raise TopologyError(f"bad NODE line: {' '.join(r)}")
            nodes.append((int(r[1]), int(r[2])))
        links = []
        for r in body[n:]:
            if r[0] != "LINK" or len(r) != 4:
                raise TopologyError(f"bad LINK line: {' '.join(r)}")
            links.append((int(r[1]), int(r[2]), int(r[3])))
    except ValueError as exc:
        raise TopologyError(f"non-integer field: {exc}") from None
    return nodes, links


@dataclass(frozen=True)
class VirtualLink:
    u: int
    v: int
    bw: int

    def other(self, node: int) -> int:
        return self.v if node == self.u else self.u


class VirtualNetwork:
    """Virtual network with CPU demands on nodes and bandwidth demands on links.

    Node and link ids are stable integers that survive mutation, so after a
    RemoveNode they are no longer dense.
    """

    def __init__(self, nodes: dict[int, int] | None = None, links: dict[int, VirtualLink] | None = None):
        self.nodes: dict[int, int] = dict(nodes or {})
        self.links: dict[int, VirtualLink] = dict(links or {})

    @classmethod
    def from_lists(cls, cpu: Sequence[int], links: Iterable[tuple[int, int, int]]) -> "VirtualNetwork":
        return cls({i: int(c) for i, c in enumerate(cpu)},
                   {k: VirtualLink(int(u), int(v), int(b)) for k, (u, v, b) in enumerate(links)})

    def copy(self) -> "VirtualNetwork":
        return VirtualNetwork(self.nodes, self.links)

    def incident(self, node: int) -> list[int]:
        return [k for k, l in self.links.items() if node in (l.u, l.v)]

    def neighbors(self, node: int) -> list[int]:
        return sorted(self.links[k].other(node) for k in self.incident(node))

    def link_between(self, u: int, v: int) -> int | None:
        for k, l in self.links.items():
            if {l.u, l.v} == {u, v}:
                return k
        return None

    def is_connected(self) -> bool:
        if not self.nodes:
            return True
        adj: dict[int, list[int]] = {n: [] for n in self.nodes}
        for l in self.links.values():
            adj[l.u].append(l.v)
            adj[l.v].append(l.u)
        start = next(iter(self.nodes))
        seen = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == len(self.nodes)

    def validate(self) -> None:
        for n, c in self.nodes.items():
            if c <= 0:
                raise TopologyError(f"virtual node {n} has non-positive demand {c}")
        pairs = set()
        for k, l in self.links.items():
            if l.u not in self.nodes or l.v not in self.nodes:
                raise TopologyError(f"virtual link {k} references unknown node")
            if l.u == l.v:
                raise TopologyError(f"virtual link {k} is a self-loop")
            if l.bw <= 0:
                raise TopologyError(f"virtual link {k} has non-positive demand {l.bw}")
            key = frozenset((l.u, l.v))
            if key in pairs:
                raise TopologyError(f"parallel virtual links on {sorted(key)}")
            pairs.add(key)
        if not self.is_connected():
            raise TopologyError("virtual network is disconnected")

    def __eq__(self, other):
        return isinstance(other, VirtualNetwork) and self.nodes == other.nodes and self.links == other.links

    def __repr__(self):
        return f"VirtualNetwork(nodes={self.nodes}, links={self.links})"

    def to_text(self) -> str:
        ids = sorted(self.nodes)
        lines = [f"NODES {len(ids)} LINKS {len(self.links)}"]
        lines += [f"NODE {n} {self.nodes[n]}" for n in ids]
        lines += [f"LINK {l.u} {l.v} {l.bw}" for _, l in sorted(self.links.items())]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "VirtualNetwork":
        nodes, links = parse_network_lines(text.splitlines())
        vn = cls(dict(nodes), {k: VirtualLink(u, v, b) for k, (u, v, b) in enumerate(links)})
        return vn
