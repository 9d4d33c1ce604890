"""Actor-critic placement agent over GCN node embeddings.

One action places one virtual node on one physical node. A virtual network
is placed node by node in ``placement_order``; once every node is placed the
links are routed with ``map_links`` and the request's reward is
``R * R / C`` (0 on rejection), assigned to the request's last step.
"""
from __future__ import annotations

import math
import threading
from collections import deque
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from . import gcn
from .embedding import NoNodeCandidate, NoPath, Embedding, evict, map_links
from .metrics import cost, revenue
from .substrate import SubstrateNetwork, VirtualNetwork
from .workload import WorkloadConfig, generate_substrate, generate_vnr_stream

N_FEATURES = 6
FEATURE_NAMES = ("cpu_free", "incident_bw_free", "current_demand", "peer_proximity",
                 "unplaced_demand", "cpu_free_abs")


class NoFeasibleAction(Exception):
    pass


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class StateEncoding:
    features: np.ndarray  # (n_physical, N_FEATURES)
    mask: np.ndarray      # feasible physical nodes for the current virtual node
    current: int


def placement_order(vn: VirtualNetwork) -> list[int]:
    """Breadth-first from the largest-demand node, neighbours by demand."""
    key = lambda v: (-vn.nodes[v], v)
    order, seen = [], set()
    for start in sorted(vn.nodes, key=key):
        if start in seen:
            continue
        seen.add(start)
        queue = deque([start])
        while queue:
            u = queue.popleft()
            order.append(u)
            for w in sorted(vn.neighbors(u), key=key):
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
    return order


class _NetCache:
    """Per-substrate constants: Laplacian and bandwidth normalisers."""

    def __init__(self, net: SubstrateNetwork):
        self.laplacian = gcn.normalized_laplacian(gcn.adjacency_matrix(net))
        inc = np.zeros((net.n_nodes, net.n_links))
        for lid, (u, v) in enumerate(net.link_ends):
            inc[u, lid] = inc[v, lid] = 1.0
        self.incidence = inc
        cap = inc @ net.bw_capacity
        self.bw_scale = float(cap.max()) if cap.size and cap.max() > 0 else 1.0
        self.cpu_cap = np.maximum(net.cpu_capacity.astype(float), 1.0)
        self.cpu_max = float(self.cpu_cap.max()) if net.n_nodes else 1.0
        self.hops = hop_matrix(net)


def hop_matrix(net: SubstrateNetwork) -> np.ndarray:
    """All-pairs hop counts by BFS; unreachable pairs get n."""
    n = net.n_nodes
    D = np.full((n, n), n, dtype=np.int64)
    for s in range(n):
        D[s, s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v, _ in net.neighbors[u]:
                if D[s, v] == n:
                    D[s, v] = D[s, u] + 1
                    queue.append(v)
    return D


_CACHE: dict[int, tuple[SubstrateNetwork, _NetCache]] = {}


def net_cache(net: SubstrateNetwork) -> _NetCache:
    hit = _CACHE.get(id(net))
    if hit is None or hit[0] is not net:
        if len(_CACHE) > 64:
            _CACHE.clear()
        hit = (net, _NetCache(net))
        _CACHE[id(net)] = hit
    return hit[1]


def encode_state(net: SubstrateNetwork, vn: VirtualNetwork, placement: dict[int, int],
                 current: int) -> StateEncoding:
    c = net_cache(net)
    n = net.n_nodes
    X = np.empty((n, N_FEATURES))
    free = net.cpu_free.astype(float)
    X[:, 0] = free / c.cpu_cap
    X[:, 1] = (c.incidence @ net.bw_free) / c.bw_scale
    demand = vn.nodes[current]
    X[:, 2] = min(demand / c.cpu_max, 1.0)
    # 1 / (1 + mean hops to the hosts of already placed neighbours), 0 if none
    hosts = [placement[u] for u in vn.neighbors(current) if u in placement]
    X[:, 3] = 1.0 / (1.0 + c.hops[:, hosts].mean(axis=1)) if hosts else 0.0
    total = sum(vn.nodes.values())
    unplaced = sum(d for v, d in vn.nodes.items() if v not in placement)
    X[:, 4] = unplaced / total if total else 0.0
    X[:, 5] = free / c.cpu_max
    mask = net.cpu_free >= demand
    for p in placement.values():
        mask[p] = False
    return StateEncoding(X, mask, current)


# -- policy model ----------------------------------------------------------

@dataclass
class AgentConfig:
    hidden: int = 16
    layers: int = 2
    order: int = 2
    lr: float = 1e-3
    gamma: float = 1.0          # within one request
    vnr_discount: float = 0.0   # across request boundaries; 0 keeps requests independent
    entropy_coef: float = 0.01
    critic_coef: float = 0.5
    reward_scale: float = 0.01
    rollout_vnrs: int = 1
    epoch_updates: int = 100
    grad_clip: float = 5.0
    k_paths: int = 1


def init_params(cfg: AgentConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    params = gcn.init_gcn(gcn.GCNConfig(N_FEATURES, cfg.hidden, cfg.layers, cfg.order), rng)
    width = cfg.hidden + N_FEATURES
    s = width ** -0.5
    params["actor.w"] = rng.uniform(-s, s, size=width)
    params["critic.w"] = rng.uniform(-s, s, size=width)
    params["critic.b"] = np.zeros(1)
    return params


@dataclass
class Forward:
    logits: np.ndarray
    probs: np.ndarray
    value: float
    E: np.ndarray
    cache: list


def forward(params: dict, cfg: AgentConfig, X: np.ndarray, L: np.ndarray, mask: np.ndarray) -> Forward:
    H, cache = gcn.gcn_forward(params, X, L, cfg.layers)
    E = np.concatenate([H, X], axis=1)
    logits = E @ params["actor.w"]
    probs = masked_softmax(logits, mask)
    value = float(E.mean(axis=0) @ params["critic.w"] + params["critic.b"][0])
    return Forward(logits, probs, value, E, cache)


def masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    probs = np.zeros_like(logits, dtype=float)
    if not mask.any():
        return probs
    z = logits[mask]
    z = np.exp(z - z.max())
    probs[mask] = z / z.sum()
    return probs


class PolicyModel:
    def __init__(self, cfg: AgentConfig | None = None, params: dict | None = None, seed: int = 0):
        self.cfg = cfg or AgentConfig()
        self.params = params if params is not None else init_params(self.cfg, np.random.default_rng(seed))

    def copy(self) -> "PolicyModel":
        return PolicyModel(self.cfg, {k: v.copy() for k, v in self.params.items()})

    def forward(self, state: StateEncoding, L: np.ndarray) -> Forward:
        return forward(self.params, self.cfg, state.features, L, state.mask)

    def save(self, path) -> None:
        gcn.save_checkpoint(path, self.params, {"agent": asdict(self.cfg)})

    @classmethod
    def load(cls, path) -> "PolicyModel":
        params, config = gcn.load_checkpoint(path)
        return cls(AgentConfig(**config["agent"]), params)


def select_action(fwd_or_probs, mask: np.ndarray, mode: str = "greedy",
                  rng: np.random.Generator | None = None) -> int:
    probs = fwd_or_probs.probs if isinstance(fwd_or_probs, Forward) else np.asarray(fwd_or_probs)
    if not mask.any():
        raise NoFeasibleAction("no feasible physical node")
    if mode == "greedy":
        # logits when available: probabilities can underflow into ties
        score = fwd_or_probs.logits if isinstance(fwd_or_probs, Forward) else probs
        return int(np.argmax(np.where(mask, score, -np.inf)))
    if mode == "sample":
        p = np.where(mask, probs, 0.0)
        p = p / p.sum()
        return int(rng.choice(len(p), p=p))
    raise ValueError(f"unknown mode {mode!r}")


def reward(vn: VirtualNetwork, emb: Embedding | None) -> float:
    if emb is None:
        return 0.0
    R = revenue(vn)
    C = cost(vn, emb)
    return R * R / C if C else 0.0


# -- losses and gradients --------------------------------------------------

@dataclass
class Step:
    features: np.ndarray
    mask: np.ndarray
    action: int
    reward: float = 0.0
    boundary: bool = False  # last step of its request
    done: bool = False


def _zeros_like(params):
    return {k: np.zeros_like(v) for k, v in params.items()}


def _accumulate(grads, extra):
    for k, v in extra.items():
        grads[k] += v


def _batch(params, cfg, steps: list[Step], L):
    """Forward pass over all steps at once: (E, cache, probs, values)."""
    X = np.stack([s.features for s in steps])
    M = np.stack([s.mask for s in steps])
    H, cache = gcn.gcn_forward(params, X, L, cfg.layers)
    E = np.concatenate([H, X], axis=2)
    logits = E @ params["actor.w"]
    z = np.where(M, logits, -np.inf)
    z = np.exp(z - z.max(axis=1, keepdims=True))
    probs = z / z.sum(axis=1, keepdims=True)
    values = E.mean(axis=1) @ params["critic.w"] + params["critic.b"][0]
    return E, cache, probs, M, values


def _actor_terms(params, cfg, steps, advantages, probs, M, E, grads):
    T = len(steps)
    acts = np.array([s.action for s in steps])
    logp = np.log(np.where(M, probs, 1.0))
    H = -np.sum(np.where(M, probs * logp, 0.0), axis=1)
    A = np.asarray(advantages, dtype=float)
    rows = np.arange(T)
    loss = float(np.mean(-logp[rows, acts] * A - cfg.entropy_coef * H))
    dlog = probs.copy()
    dlog[rows, acts] -= 1.0
    dlog *= A[:, None]
    dlog += cfg.entropy_coef * probs * (logp + H[:, None])
    dlog[~M] = 0.0
    dlog /= T
    grads["actor.w"] += np.einsum("tnw,tn->w", E, dlog)
    return loss, float(np.mean(H)), dlog[:, :, None] * params["actor.w"]


def _critic_terms(params, cfg, returns, values, E, grads):
    T, n = E.shape[0], E.shape[1]
    err = values - np.asarray(returns, dtype=float)
    loss = float(cfg.critic_coef * np.mean(err * err))
    dv = 2.0 * cfg.critic_coef * err / T
    grads["critic.w"] += E.mean(axis=1).T @ dv
    grads["critic.b"] += dv.sum()
    return loss, np.broadcast_to((dv[:, None] * params["critic.w"] / n)[:, None, :], E.shape)


def _finish(params, cfg, cache, L, dE, grads):
    g, _ = gcn.gcn_backward(params, cache, L, dE[:, :, :cfg.hidden])
    _accumulate(grads, g)
    return grads


def actor_loss(params, cfg: AgentConfig, steps: list[Step], advantages, L):
    """Mean over steps of -log pi(a) * A - entropy_coef * H(pi); (loss, grads, entropy)."""
    E, cache, probs, M, _ = _batch(params, cfg, steps, L)
    grads = _zeros_like(params)
    loss, ent, dE = _actor_terms(params, cfg, steps, advantages, probs, M, E, grads)
    return loss, _finish(params, cfg, cache, L, dE, grads), ent


def critic_loss(params, cfg: AgentConfig, steps: list[Step], returns, L):
    """critic_coef * mean squared (return - value); (loss, grads)."""
    E, cache, _, _, values = _batch(params, cfg, steps, L)
    grads = _zeros_like(params)
    loss, dE = _critic_terms(params, cfg, returns, values, E, grads)
    return loss, _finish(params, cfg, cache, L, dE, grads)


def discounted_returns(steps: list[Step], cfg: AgentConfig, bootstrap: float = 0.0) -> np.ndarray:
    out = np.zeros(len(steps))
    G = bootstrap
    for t in reversed(range(len(steps))):
        s = steps[t]
        if s.done:
            G = 0.0
        elif s.boundary:
            G = cfg.vnr_discount * G
        else:
            G = cfg.gamma * G
        G = s.reward + G
        out[t] = G
    return out


# -- environment -----------------------------------------------------------

class PlacementEnv:
    """Arrival/departure replay of VNR streams for training and evaluation.

    Each ``reset`` loads the next workload seed from ``seeds`` (cycling).
    Mutation events are not replayed here.
    """

    def __init__(self, cfg: WorkloadConfig, seeds, k_paths: int = 1,
                 builder: Callable[[WorkloadConfig], tuple] | None = None):
        self.cfg = cfg
        self.seeds = list(seeds)
        self.k_paths = k_paths
        self.builder = builder
        self._cursor = 0
        self.reset()

    def reset(self) -> None:
        seed = self.seeds[self._cursor % len(self.seeds)]
        self._cursor += 1
        cfg = self.cfg.replace(rng_seed=seed)
        if self.builder is not None:
            self.net, self.stream = self.builder(cfg)
        else:
            self.net, self.stream = generate_substrate(cfg), generate_vnr_stream(cfg)
        self.index = 0
        self.active: list[tuple[int, Embedding]] = []
        self.L = net_cache(self.net).laplacian

    @property
    def finished(self) -> bool:
        return self.index >= len(self.stream)

    def advance(self):
        """Release departures before the next arrival and return that request."""
        req = self.stream[self.index]
        keep = []
        for dep, emb in self.active:
            if dep <= req.arrival:
                evict(self.net, emb)
            else:
                keep.append((dep, emb))
        self.active = keep
        return req

    def commit(self, req, node_map: dict[int, int] | None):
        """Allocate a completed placement; returns the embedding or None."""
        self.index += 1
        if node_map is None:
            return None
        snap = self.net.snapshot()
        for v, p in node_map.items():
            self.net.allocate_node(p, req.vn.nodes[v])
        try:
            links = map_links(self.net, req.vn, node_map, self.k_paths)
        except NoPath:
            self.net.restore(snap)
            return None
        emb = Embedding(req.id, req.vn, dict(node_map), links)
        self.active.append((req.departure, emb))
        return emb


def play_request(model: PolicyModel, env: PlacementEnv, req, mode: str, rng=None):
    """Place one request node by node; returns (steps, embedding or None)."""
    steps: list[Step] = []
    placement: dict[int, int] = {}
    for v in placement_order(req.vn):
        state = encode_state(env.net, req.vn, placement, v)
        if not state.mask.any():
            break
        f = model.forward(state, env.L)
        a = select_action(f, state.mask, mode, rng)
        steps.append(Step(state.features, state.mask, a))
        placement[v] = a
    complete = len(placement) == len(req.vn.nodes)
    emb = env.commit(req, placement if complete else None)
    return steps, emb


# -- shared parameters and training ------------------------------------------

class ParamStore:
    """Shared parameters with atomic per-tensor delta application."""

    def __init__(self, params: dict[str, np.ndarray], track: bool = False):
        self._params = {k: v.copy() for k, v in params.items()}
        self._locks = {k: threading.Lock() for k in params}
        self.applied = {k: np.zeros_like(v) for k, v in params.items()} if track else None

    def apply(self, deltas: dict[str, np.ndarray]) -> None:
        for k, d in deltas.items():
            with self._locks[k]:
                self._params[k] += d
                if self.applied is not None:
                    self.applied[k] += d

    def snapshot(self) -> dict[str, np.ndarray]:
        out = {}
        for k, lock in self._locks.items():
            with lock:
                out[k] = self._params[k].copy()
        return out


class Adam:
    def __init__(self, params, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = _zeros_like(params)
        self.v = _zeros_like(params)
        self.t = 0

    def deltas(self, grads):
        self.t += 1
        out = {}
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            mh = self.m[k] / (1 - self.b1 ** self.t)
            vh = self.v[k] / (1 - self.b2 ** self.t)
            out[k] = -self.lr * mh / (np.sqrt(vh) + self.eps)
        return out


LOG_COLUMNS = ["epoch", "episodes", "mean_reward", "acceptance_rate", "actor_loss", "critic_loss", "entropy"]


@dataclass
class _Tally:
    episodes: int = 0
    accepted: int = 0
    reward: float = 0.0
    actor: float = 0.0
    critic: float = 0.0
    entropy: float = 0.0
    updates: int = 0

    def row(self, epoch):
        u = max(self.updates, 1)
        e = max(self.episodes, 1)
        return {"epoch": epoch, "episodes": self.episodes, "mean_reward": self.reward / e,
                "acceptance_rate": self.accepted / e, "actor_loss": self.actor / u,
                "critic_loss": self.critic / u, "entropy": self.entropy / u}


def compute_update(params, cfg: AgentConfig, steps: list[Step], L, bootstrap: float = 0.0):
    returns = discounted_returns(steps, cfg, bootstrap)
    E, cache, probs, M, values = _batch(params, cfg, steps, L)
    adv = returns - values
    a_grads = _zeros_like(params)
    a_loss, ent, dE_a = _actor_terms(params, cfg, steps, adv, probs, M, E, a_grads)
    c_loss, dE_c = _critic_terms(params, cfg, returns, values, E, a_grads)
    _finish(params, cfg, cache, L, dE_a + dE_c, a_grads)
    if not (math.isfinite(a_loss) and math.isfinite(c_loss)):
        raise TrainingDiverged(f"non-finite loss (actor={a_loss}, critic={c_loss})")
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in a_grads.values()))
    if not math.isfinite(norm):
        raise TrainingDiverged("non-finite gradient")
    if cfg.grad_clip and norm > cfg.grad_clip:
        for g in a_grads.values():
            g *= cfg.grad_clip / norm
    return a_grads, a_loss, c_loss, ent


def _worker(idx, store: ParamStore, model_cfg: AgentConfig, env: PlacementEnv, budget, tally_cb, seed):
    rng = np.random.default_rng([seed, idx])
    local = PolicyModel(model_cfg, store.snapshot())
    opt = Adam(local.params, model_cfg.lr)
    while budget():
        steps: list[Step] = []
        stats = []
        L = env.L
        for _ in range(max(1, model_cfg.rollout_vnrs)):
            req = env.advance()
            s, emb = play_request(local, env, req, "sample", rng)
            r = reward(req.vn, emb)
            stats.append((r, emb is not None))
            if s:
                s[-1].reward = r * model_cfg.reward_scale
                s[-1].boundary = True
            steps.extend(s)
            if env.finished:
                if steps:
                    steps[-1].done = True
                env.reset()
                break
        bootstrap = 0.0
        if steps and not steps[-1].done and model_cfg.vnr_discount > 0:
            req = env.advance()
            order = placement_order(req.vn)
            st = encode_state(env.net, req.vn, {}, order[0])
            bootstrap = local.forward(st, env.L).value
        if steps:
            grads, a_loss, c_loss, ent = compute_update(local.params, model_cfg, steps, L, bootstrap)
            store.apply(opt.deltas(grads))
            local.params = store.snapshot()
        else:
            a_loss = c_loss = ent = 0.0
        tally_cb(stats, a_loss, c_loss, ent)


def train_a3c(env_factory: Callable[[int], PlacementEnv], model: PolicyModel, workers: int = 1,
              steps: int = 1000, seed: int = 0, track: bool = False):
    """Asynchronous advantage actor-critic.

    ``steps`` is the total number of parameter updates shared by all
    workers; one update consumes ``rollout_vnrs`` requests. With a single
    worker the run is deterministic for a fixed seed. Returns (model, log).
    """
    if workers < 1:
        raise ValueError("need at least one worker")
    cfg = model.cfg
    store = ParamStore(model.params, track=track)
    lock = threading.Lock()
    issued = [0]
    log: list[dict] = []
    tally = [_Tally()]

    def budget():
        with lock:
            if issued[0] >= steps:
                return False
            issued[0] += 1
            return True

    def tally_cb(stats, a_loss, c_loss, ent):
        with lock:
            t = tally[0]
            for r, acc in stats:
                t.episodes += 1
                t.accepted += int(acc)
                t.reward += r
            t.actor += float(a_loss)
            t.critic += float(c_loss)
            t.entropy += float(ent)
            t.updates += 1
            if t.updates >= cfg.epoch_updates:
                log.append(t.row(len(log)))
                tally[0] = _Tally()

    envs = [env_factory(i) for i in range(workers)]
    if workers == 1:
        _worker(0, store, cfg, envs[0], budget, tally_cb, seed)
    else:
        errors = []

        def run(i):
            try:
                _worker(i, store, cfg, envs[i], budget, tally_cb, seed)
            except Exception as exc:  # surfaced after join
                errors.append(exc)

        threads = [threading.Thread(target=run, args=(i,)) for i in range(workers)]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
        if errors:
            raise errors[0]
    if tally[0].updates:
        log.append(tally[0].row(len(log)))
    trained = PolicyModel(cfg, store.snapshot())
    trained.store = store
    return trained, log


class RLPlacer:
    """Greedy (or sampled) node mapping from a trained policy."""

    name = "rl"

    def __init__(self, model: PolicyModel, mode: str = "greedy", seed: int = 0):
        self.model = model
        self.mode = mode
        self.rng = np.random.default_rng(seed)

    def __call__(self, net: SubstrateNetwork, vn: VirtualNetwork) -> dict[int, int]:
        L = net_cache(net).laplacian
        placement: dict[int, int] = {}
        for v in placement_order(vn):
            state = encode_state(net, vn, placement, v)
            if not state.mask.any():
                raise NoNodeCandidate(f"no feasible host for virtual node {v}")
            f = self.model.forward(state, L)
            placement[v] = select_action(f, state.mask, self.mode, self.rng)
        return placement
