"""Random substrates, VNR streams and dynamic mutation events."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .substrate import SubstrateNetwork, TopologyError, VirtualLink, VirtualNetwork, parse_network_lines


class InfeasibleTopology(ValueError):
    pass


class InvalidMutation(ValueError):
    pass


@dataclass
class WorkloadConfig:
    # defaults follow the reference setting; mean_lifetime and mutation_rate are our own choices
    n_substrate_nodes: int = 100
    n_substrate_links: int = 600
    cpu_capacity_range: tuple[int, int] = (50, 100)
    bw_capacity_range: tuple[int, int] = (50, 100)
    n_vnrs: int = 1000
    vnodes_range: tuple[int, int] = (2, 12)
    edge_prob: float = 0.5
    cpu_demand_range: tuple[int, int] = (1, 50)
    bw_demand_range: tuple[int, int] = (1, 50)
    arrivals_per_100_time_units: float = 5.0
    mean_lifetime: float = 500.0
    mutation_rate: float = 0.2
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("cpu_capacity_range", "bw_capacity_range", "vnodes_range",
                     "cpu_demand_range", "bw_demand_range"):
            lo, hi = getattr(self, name)
            setattr(self, name, (int(lo), int(hi)))
        self.validate()

    def validate(self) -> None:
        for name in ("cpu_capacity_range", "bw_capacity_range", "vnodes_range",
                     "cpu_demand_range", "bw_demand_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} is empty: {lo} > {hi}")
            if lo < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.cpu_demand_range[0] < 1 or self.bw_demand_range[0] < 1:
            raise ValueError("demands must be positive")
        if self.vnodes_range[0] < 2:
            raise ValueError("virtual networks need at least 2 nodes")
        if not 0.0 <= self.edge_prob <= 1.0:
            raise ValueError("edge_prob must lie in [0, 1]")
        if self.n_substrate_nodes < 1 or self.n_vnrs < 0:
            raise ValueError("node and request counts must be positive")
        if self.arrivals_per_100_time_units <= 0 or self.mean_lifetime <= 0:
            raise ValueError("arrival rate and mean lifetime must be positive")
        if self.mutation_rate < 0:
            raise ValueError("mutation_rate must be non-negative")

    def replace(self, **changes) -> "WorkloadConfig":
        return dataclasses.replace(self, **changes)


# -- mutation events ------------------------------------------------------

@dataclass(frozen=True)
class AddNode:
    node: int
    cpu: int
    links: tuple[tuple[int, int, int], ...]  # (link id, peer node, bandwidth)


@dataclass(frozen=True)
class RemoveNode:
    node: int


@dataclass(frozen=True)
class AddLink:
    link: int
    u: int
    v: int
    bw: int


@dataclass(frozen=True)
class RemoveLink:
    link: int


@dataclass(frozen=True)
class ResizeNodeCpu:
    node: int
    cpu: int


@dataclass(frozen=True)
class ResizeLinkBw:
    link: int
    bw: int


MutationKind = Union[AddNode, RemoveNode, AddLink, RemoveLink, ResizeNodeCpu, ResizeLinkBw]


@dataclass(frozen=True)
class MutationEvent:
    at: int
    kind: MutationKind


@dataclass
class VirtualRequest:
    id: int
    vn: VirtualNetwork
    arrival: int
    lifetime: int
    events: list[MutationEvent] = field(default_factory=list)

    @property
    def departure(self) -> int:
        return self.arrival + self.lifetime


def apply_mutation(vn: VirtualNetwork, e: MutationEvent | MutationKind) -> VirtualNetwork:
    """Return a mutated copy of ``vn``. The input is never modified."""
    k = e.kind if isinstance(e, MutationEvent) else e
    out = vn.copy()
    if isinstance(k, AddNode):
        if k.node in out.nodes:
            raise InvalidMutation(f"node {k.node} already exists")
        if not k.links:
            raise InvalidMutation("added node must attach to at least one link")
        out.nodes[k.node] = k.cpu
        for lid, peer, bw in k.links:
            if lid in out.links:
                raise InvalidMutation(f"link {lid} already exists")
            if peer not in vn.nodes:
                raise InvalidMutation(f"unknown peer node {peer}")
            out.links[lid] = VirtualLink(k.node, peer, bw)
    elif isinstance(k, RemoveNode):
        if k.node not in out.nodes:
            raise InvalidMutation(f"unknown node {k.node}")
        del out.nodes[k.node]
        for lid in vn.incident(k.node):
            del out.links[lid]
    elif isinstance(k, AddLink):
        if k.link in out.links:
            raise InvalidMutation(f"link {k.link} already exists")
        if k.u not in out.nodes or k.v not in out.nodes:
            raise InvalidMutation("link endpoint unknown")
        out.links[k.link] = VirtualLink(k.u, k.v, k.bw)
    elif isinstance(k, RemoveLink):
        if k.link not in out.links:
            raise InvalidMutation(f"unknown link {k.link}")
        del out.links[k.link]
    elif isinstance(k, ResizeNodeCpu):
        if k.node not in out.nodes:
            raise InvalidMutation(f"unknown node {k.node}")
        out.nodes[k.node] = k.cpu
    elif isinstance(k, ResizeLinkBw):
        if k.link not in out.links:
            raise InvalidMutation(f"unknown link {k.link}")
        old = out.links[k.link]
        out.links[k.link] = VirtualLink(old.u, old.v, k.bw)
    else:
        raise InvalidMutation(f"unsupported mutation {k!r}")
    try:
        out.validate()
    except TopologyError as exc:
        raise InvalidMutation(str(exc)) from None
    return out


# -- generators -----------------------------------------------------------

def _uniform(rng, lo_hi) -> int:
    lo, hi = lo_hi
    return int(rng.integers(lo, hi + 1))


def generate_substrate(cfg: WorkloadConfig) -> SubstrateNetwork:
    """Connected random graph: random spanning tree plus uniform extra edges."""
    n, m = cfg.n_substrate_nodes, cfg.n_substrate_links
    if m < n - 1 or m > n * (n - 1) // 2:
        raise InfeasibleTopology(f"cannot build a connected simple graph with {n} nodes and {m} links")
    rng = np.random.default_rng([cfg.rng_seed, 0])
    perm = rng.permutation(n)
    edges = set()
    for i in range(1, n):
        a, b = int(perm[i]), int(perm[rng.integers(0, i)])
        edges.add((min(a, b), max(a, b)))
    extra = m - len(edges)
    if extra > 0:
        candidates = [(u, v) for u in range(n) for v in range(u + 1, n) if (u, v) not in edges]
        for idx in rng.choice(len(candidates), size=extra, replace=False):
            edges.add(candidates[int(idx)])
    cpu = rng.integers(cfg.cpu_capacity_range[0], cfg.cpu_capacity_range[1] + 1, size=n)
    ordered = sorted(edges)
    bw = rng.integers(cfg.bw_capacity_range[0], cfg.bw_capacity_range[1] + 1, size=len(ordered))
    return SubstrateNetwork(cpu, [(u, v, int(b)) for (u, v), b in zip(ordered, bw)])


def _components(nodes, edges):
    parent = {x: x for x in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in edges:
        parent[find(u)] = find(v)
    groups: dict[int, list[int]] = {}
    for x in nodes:
        groups.setdefault(find(x), []).append(x)
    return sorted(groups.values())


def generate_vn(cfg: WorkloadConfig, rng, cpu_rng=None, bw_rng=None) -> VirtualNetwork:
    """Random connected VN; demands come from ``cpu_rng``/``bw_rng`` (default ``rng``)."""
    cpu_rng = rng if cpu_rng is None else cpu_rng
    bw_rng = rng if bw_rng is None else bw_rng
    n = _uniform(rng, cfg.vnodes_range)
    edges = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < cfg.edge_prob]
    comps = _components(range(n), edges)
    # join components with random spanning edges until connected
    while len(comps) > 1:
        a, b = comps[0], comps[1]
        u, v = int(rng.choice(a)), int(rng.choice(b))
        edges.append((min(u, v), max(u, v)))
        comps = _components(range(n), edges)
    edges.sort()
    cpu = [_uniform(cpu_rng, cfg.cpu_demand_range) for _ in range(n)]
    bw = [_uniform(bw_rng, cfg.bw_demand_range) for _ in edges]
    return VirtualNetwork.from_lists(cpu, [(u, v, b) for (u, v), b in zip(edges, bw)])


def _is_bridge(vn: VirtualNetwork, lid: int) -> bool:
    probe = vn.copy()
    del probe.links[lid]
    return not probe.is_connected()


def draw_mutation(cfg, rng, vn: VirtualNetwork, next_node: int, next_link: int):
    options = []
    if len(vn.nodes) < cfg.vnodes_range[1]:
        options.append("add_node")
    removable = []
    if len(vn.nodes) > cfg.vnodes_range[0]:
        for n in sorted(vn.nodes):
            probe = vn.copy()
            del probe.nodes[n]
            for lid in vn.incident(n):
                del probe.links[lid]
            if probe.is_connected():
                removable.append(n)
    if removable:
        options.append("remove_node")
    ids = sorted(vn.nodes)
    missing = [(u, v) for i, u in enumerate(ids) for v in ids[i + 1:] if vn.link_between(u, v) is None]
    if missing:
        options.append("add_link")
    cuttable = [lid for lid in sorted(vn.links) if not _is_bridge(vn, lid)]
    if cuttable:
        options.append("remove_link")
    if cfg.cpu_demand_range[0] < cfg.cpu_demand_range[1]:
        options.append("resize_node")
    if vn.links and cfg.bw_demand_range[0] < cfg.bw_demand_range[1]:
        options.append("resize_link")
    if not options:
        return None
    choice = options[int(rng.integers(len(options)))]
    if choice == "add_node":
        peers = [p for p in ids if rng.random() < cfg.edge_prob] or [int(rng.choice(ids))]
        links = tuple((next_link + i, p, _uniform(rng, cfg.bw_demand_range)) for i, p in enumerate(peers))
        return AddNode(next_node, _uniform(rng, cfg.cpu_demand_range), links)
    if choice == "remove_node":
        return RemoveNode(int(rng.choice(removable)))
    if choice == "add_link":
        u, v = missing[int(rng.integers(len(missing)))]
        return AddLink(next_link, u, v, _uniform(rng, cfg.bw_demand_range))
    if choice == "remove_link":
        return RemoveLink(int(rng.choice(cuttable)))
    if choice == "resize_node":
        node = int(rng.choice(ids))
        new = vn.nodes[node]
        while new == vn.nodes[node]:
            new = _uniform(rng, cfg.cpu_demand_range)
        return ResizeNodeCpu(node, new)
    lid = int(rng.choice(sorted(vn.links)))
    new = vn.links[lid].bw
    while new == vn.links[lid].bw:
        new = _uniform(rng, cfg.bw_demand_range)
    return ResizeLinkBw(lid, new)


def generate_events(cfg: WorkloadConfig, rng, vn: VirtualNetwork, arrival: int, lifetime: int):
    if cfg.mutation_rate <= 0 or lifetime < 2:
        return []
    count = int(rng.poisson(cfg.mutation_rate))
    if count == 0:
        return []
    # strictly after arrival so a mutation never precedes its own arrival at a tied instant
    times = sorted(int(t) for t in rng.integers(arrival + 1, arrival + lifetime, size=count))
    events = []
    state = vn
    next_node = max(vn.nodes) + 1
    next_link = max(vn.links, default=-1) + 1
    for t in times:
        kind = draw_mutation(cfg, rng, state, next_node, next_link)
        if kind is None:
            continue
        state = apply_mutation(state, kind)
        if isinstance(kind, AddNode):
            next_node += 1
            next_link += len(kind.links)
        elif isinstance(kind, AddLink):
            next_link += 1
        events.append(MutationEvent(t, kind))
    return events


def generate_vnr_stream(cfg: WorkloadConfig) -> list[VirtualRequest]:
    """Poisson arrivals, exponential lifetimes, random VNs and mutation events.

    Arrivals, topologies, demands and events use independent generators, so
    changing the CPU demand range leaves arrivals, VN shapes and bandwidth
    demands unchanged.
    """
    timing = np.random.default_rng([cfg.rng_seed, 1])
    shape = np.random.default_rng([cfg.rng_seed, 2])
    cpu = np.random.default_rng([cfg.rng_seed, 3])
    bw = np.random.default_rng([cfg.rng_seed, 5])
    mutate = np.random.default_rng([cfg.rng_seed, 4])
    mean_gap = 100.0 / cfg.arrivals_per_100_time_units
    clock = 0.0
    out = []
    for i in range(cfg.n_vnrs):
        clock += timing.exponential(mean_gap)
        arrival = int(round(clock))
        lifetime = max(1, int(round(timing.exponential(cfg.mean_lifetime))))
        vn = generate_vn(cfg, shape, cpu, bw)
        events = generate_events(cfg, mutate, vn, arrival, lifetime)
        out.append(VirtualRequest(i, vn, arrival, lifetime, events))
    return out


# -- text formats ---------------------------------------------------------

def format_event(e: MutationEvent) -> str:
    k = e.kind
    if isinstance(k, AddNode):
        parts = ["ADD_NODE", k.node, k.cpu, len(k.links)]
        for lid, peer, bw in k.links:
            parts += [lid, peer, bw]
    elif isinstance(k, RemoveNode):
        parts = ["REMOVE_NODE", k.node]
    elif isinstance(k, AddLink):
        parts = ["ADD_LINK", k.link, k.u, k.v, k.bw]
    elif isinstance(k, RemoveLink):
        parts = ["REMOVE_LINK", k.link]
    elif isinstance(k, ResizeNodeCpu):
        parts = ["RESIZE_NODE", k.node, k.cpu]
    else:
        parts = ["RESIZE_LINK", k.link, k.bw]
    return "EVENT " + " ".join(str(p) for p in [e.at] + parts)


def parse_event(tokens: list[str]) -> MutationEvent:
    at, name, args = int(tokens[1]), tokens[2], [int(x) for x in tokens[3:]]
    if name == "ADD_NODE":
        node, cpu, n = args[:3]
        rest = args[3:]
        if len(rest) != 3 * n:
            raise ValueError("ADD_NODE link triples do not match declared count")
        kind = AddNode(node, cpu, tuple(tuple(rest[3 * i:3 * i + 3]) for i in range(n)))
    elif name == "REMOVE_NODE":
        kind = RemoveNode(*args)
    elif name == "ADD_LINK":
        kind = AddLink(*args)
    elif name == "REMOVE_LINK":
        kind = RemoveLink(*args)
    elif name == "RESIZE_NODE":
        kind = ResizeNodeCpu(*args)
    elif name == "RESIZE_LINK":
        kind = ResizeLinkBw(*args)
    else:
        raise ValueError(f"unknown event kind {name}")
    return MutationEvent(at, kind)


def format_stream(stream: list[VirtualRequest]) -> str:
    chunks = []
    for r in stream:
        chunks.append(f"VNR {r.id} ARRIVE {r.arrival} LIFE {r.lifetime}\n")
        chunks.append(r.vn.to_text())
        chunks.extend(format_event(e) + "\n" for e in r.events)
    return "".join(chunks)


def parse_stream(text: str) -> list[VirtualRequest]:
    out = []
    header = None
    body: list[str] = []

    def flush():
        if header is None:
            return
        net_lines = [l for l in body if not l.split("#", 1)[0].strip().startswith("EVENT")]
        ev_lines = [l.split("#", 1)[0].split() for l in body
                    if l.split("#", 1)[0].strip().startswith("EVENT")]
        nodes, links = parse_network_lines(net_lines)
        vn = VirtualNetwork(dict(nodes), {k: VirtualLink(u, v, b) for k, (u, v, b) in enumerate(links)})
        out.append(VirtualRequest(int(header[1]), vn, int(header[3]), int(header[5]),
                                  [parse_event(t) for t in ev_lines]))

    for raw in text.splitlines():
        tokens = raw.split("#", 1)[0].split()
        if tokens and tokens[0] == "VNR":
            flush()
            if len(tokens) != 6 or tokens[2] != "ARRIVE" or tokens[4] != "LIFE":
                raise ValueError(f"bad VNR header: {raw!r}")
            header, body = tokens, []
        elif tokens:
            if header is None:
                raise ValueError("content before first VNR header")
            body.append(raw)
    flush()
    return out


_RANGE_FIELDS = {"cpu_capacity_range", "bw_capacity_range", "vnodes_range",
                 "cpu_demand_range", "bw_demand_range"}


def parse_kv(text: str) -> dict[str, str]:
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def config_from_mapping(values: dict[str, str], base: WorkloadConfig | None = None) -> WorkloadConfig:
    """Build a WorkloadConfig from string values; unknown keys are ignored."""
    base = base or WorkloadConfig()
    changes = {}
    types = {f.name: f.type for f in dataclasses.fields(WorkloadConfig)}
    for key, raw in values.items():
        if key not in types:
            continue
        if key in _RANGE_FIELDS:
            parts = raw.replace(",", " ").split()
            if len(parts) != 2:
                raise ValueError(f"{key}: expected 'lo,hi'")
            changes[key] = (int(parts[0]), int(parts[1]))
        elif types[key] in ("int", int):
            changes[key] = int(raw)
        else:
            changes[key] = float(raw)
    return dataclasses.replace(base, **changes)


def format_config(cfg: WorkloadConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {v[0]},{v[1]}" if isinstance(v, tuple) else f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
