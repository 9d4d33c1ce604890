"""Discrete-event simulation of a VNR stream and the experiment harness."""
from __future__ import annotations

import dataclasses
import heapq
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .agent import AgentConfig
from .baselines import RandomPlacer, place_greedy, place_noderank, place_slack
from .embedding import Embedding, audit, embed, evict, re_embed_delta
from .fitness import ConsolidationReport, consolidate, objective
from .metrics import (ArrivalRecord, MutationRecord, RunLedger, SampleRecord, metric_rows, metrics_csv,
                      revenue, cost, rows_to_csv)
from .substrate import SubstrateNetwork
from .workload import (VirtualRequest, WorkloadConfig, config_from_mapping, generate_substrate,
                       generate_vnr_stream, parse_kv)

log = logging.getLogger(__name__)

# tie order at equal timestamps
DEPARTURE, MUTATION, ARRIVAL, SAMPLE = 0, 1, 2, 3

PLACERS = ("rl", "noderank", "greedy", "random", "fitness-consolidate")


class ConfigError(ValueError):
    pass


class InvariantViolation(AssertionError):
    pass


@dataclass
class ExperimentSpec:
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    placer: str = "greedy"
    consolidate: bool = False
    duration: int | None = None  # D, in sampling rounds; None runs to the last arrival
    sample_every: int = 100
    k_paths: int = 1
    seeds: list[int] = field(default_factory=lambda: [0])
    sweep_axis: str = "cpu_demand_max"
    sweep_values: list[int] = field(default_factory=lambda: [50, 40, 30, 20])
    placers: list[str] = field(default_factory=lambda: ["greedy", "random"])
    model_path: str | None = None
    check_invariants: bool = False
    train_seeds: list[int] = field(default_factory=lambda: list(range(100, 120)))
    agent: AgentConfig = field(default_factory=AgentConfig)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.placer not in PLACERS:
            raise ConfigError(f"unknown placer {self.placer!r}; choose from {', '.join(PLACERS)}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.sample_every < 1:
            raise ConfigError("sample_every must be >= 1")
        if self.duration is not None and self.duration < 0:
            raise ConfigError("duration must be >= 0")
        if not 1 <= self.k_paths <= 4:
            raise ConfigError("k_paths must lie in 1..4")
        if self.sweep_axis != "cpu_demand_max":
            raise ConfigError(f"unsupported sweep axis {self.sweep_axis!r}")
        lo = self.workload.cpu_demand_range[0]
        for v in self.sweep_values:
            if v < lo:
                raise ConfigError(f"sweep value {v} below cpu demand lower bound {lo}")
        for p in self.placers:
            if p not in PLACERS:
                raise ConfigError(f"unknown placer {p!r}")

    def replace(self, **changes) -> "ExperimentSpec":
        return dataclasses.replace(self, **changes)


def _ints(raw: str) -> list[int]:
    return [int(x) for x in raw.replace(",", " ").split()]


def spec_from_mapping(values: dict[str, str], base: ExperimentSpec | None = None) -> ExperimentSpec:
    base = base or ExperimentSpec()
    try:
        workload = config_from_mapping(values, base.workload)
        changes = {"workload": workload}
        agent_changes: dict[str, str] = {}
        for key, raw in values.items():
            if key == "placer":
                changes["placer"] = raw
            elif key == "consolidate":
                changes["consolidate"] = _onoff(raw)
            elif key in ("duration", "sample_every", "k_paths"):
                changes[key] = int(raw)
            elif key in ("seeds", "sweep_values", "train_seeds"):
                changes[key] = _ints(raw)
            elif key == "placers":
                changes["placers"] = [p for p in raw.replace(",", " ").split()]
            elif key == "model_path":
                changes["model_path"] = raw
            elif key == "sweep_axis":
                changes["sweep_axis"] = raw
            elif key == "check_invariants":
                changes["check_invariants"] = _onoff(raw)
            elif key.startswith("agent."):
                agent_changes[key[6:]] = raw
            elif key not in {f.name for f in dataclasses.fields(WorkloadConfig)}:
                raise ConfigError(f"unknown config key {key!r}")
        if agent_changes:
            changes["agent"] = _agent_config(agent_changes, base.agent)
        return dataclasses.replace(base, **changes)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def _agent_config(values: dict[str, str], base: AgentConfig) -> AgentConfig:
    types = {f.name: f.type for f in dataclasses.fields(AgentConfig)}
    out = {}
    for key, raw in values.items():
        if key not in types:
            raise ConfigError(f"unknown agent key {key!r}")
        out[key] = int(raw) if types[key] in (int, "int") else float(raw)
    return dataclasses.replace(base, **out)


def load_spec(path, base: ExperimentSpec | None = None) -> ExperimentSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        values = parse_kv(text)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return spec_from_mapping(values, base)


def _onoff(raw: str) -> bool:
    v = str(raw).strip().lower()
    if v in ("on", "true", "1", "yes"):
        return True
    if v in ("off", "false", "0", "no"):
        return False
    raise ConfigError(f"expected on/off, got {raw!r}")


def make_placer(name: str, seed: int = 0, model_path=None, model=None) -> Callable:
    if name == "greedy":
        return place_greedy
    if name == "noderank":
        return place_noderank
    if name == "random":
        return RandomPlacer(seed)
    if name == "fitness-consolidate":
        return place_slack
    if name == "rl":
        from .agent import PolicyModel, RLPlacer
        if model is None:
            if model_path is None:
                raise ConfigError("placer 'rl' needs a model (--model PATH)")
            try:
                model = PolicyModel.load(model_path)
            except (OSError, ValueError, KeyError) as exc:
                raise ConfigError(f"cannot load model {model_path}: {exc}") from None
        return RLPlacer(model)
    raise ConfigError(f"unknown placer {name!r}")


@dataclass
class RunResult:
    ledger: RunLedger
    csv: str
    net: SubstrateNetwork
    active: dict[int, Embedding]
    consolidations: list[ConsolidationReport] = field(default_factory=list)
    accepted: int = 0
    arrived: int = 0
    embeddings: dict[int, tuple] = field(default_factory=dict)  # vnr -> (revenue, cost) at admission


def horizon_rounds(spec: ExperimentSpec, stream: list[VirtualRequest]) -> int:
    if spec.duration is not None:
        return spec.duration
    if not stream:
        return 0
    return max(1, math.ceil(stream[-1].arrival / spec.sample_every))


def simulate(spec: ExperimentSpec, net: SubstrateNetwork, stream: list[VirtualRequest],
             placer: Callable, hooks: dict | None = None) -> RunResult:
    """Process arrivals, departures, mutations and samples in time order."""
    hooks = hooks or {}
    rounds = horizon_rounds(spec, stream)
    horizon = rounds * spec.sample_every
    use_consolidation = spec.consolidate or spec.placer == "fitness-consolidate"
    heap: list = []
    seq = 0

    def push(t, kind, payload):
        nonlocal seq
        heapq.heappush(heap, (t, kind, seq, payload))
        seq += 1

    for r in stream:
        push(r.arrival, ARRIVAL, r)
    for i in range(1, rounds + 1):
        push(i * spec.sample_every, SAMPLE, None)

    ledger = RunLedger()
    active: dict[int, Embedding] = {}
    result = RunResult(ledger, "", net, active)
    while heap:
        t, kind, _, payload = heapq.heappop(heap)
        if t > horizon:
            break
        if kind == ARRIVAL:
            req: VirtualRequest = payload
            result.arrived += 1
            out = embed(net, req.vn, placer, spec.k_paths, vnr_id=req.id)
            if out.accepted:
                emb = out.embedding
                active[req.id] = emb
                R, C = revenue(req.vn), cost(req.vn, emb)
                result.accepted += 1
                result.embeddings[req.id] = (R, C)
                ledger.arrivals.append(ArrivalRecord(t, req.id, True, R, C))
                push(req.departure, DEPARTURE, req.id)
                for e in req.events:
                    push(e.at, MUTATION, (req.id, e))
            else:
                ledger.arrivals.append(ArrivalRecord(t, req.id, False, 0, 0))
        elif kind == DEPARTURE:
            emb = active.pop(payload, None)
            if emb is not None:
                evict(net, emb)
        elif kind == MUTATION:
            vnr, e = payload
            emb = active.get(vnr)
            if emb is None:
                continue
            before_R, before_C = revenue(emb.vn), cost(emb.vn, emb)
            out = re_embed_delta(net, emb, e, spec.k_paths)
            if out.accepted:
                # footprint growth on both sides; shrinking just stops contributing
                dR = max(0, revenue(emb.vn) - before_R)
                dC = max(0, cost(emb.vn, emb) - before_C)
                ledger.mutations.append(MutationRecord(t, vnr, True, dR, dC))
            else:
                ledger.mutations.append(MutationRecord(t, vnr, False, 0, 0))
        else:
            embs = list(active.values())
            if use_consolidation and embs:
                rep = consolidate(net, embs, k=spec.k_paths)
                result.consolidations.append(rep)
            obj = objective(net, embs)
            ledger.samples.append(SampleRecord(t, obj.beta, obj.value, len(active)))
            if spec.check_invariants:
                problems = audit(net, embs)
                if problems:
                    raise InvariantViolation(f"t={t}: " + "; ".join(problems[:5]))
            if "sample" in hooks:
                hooks["sample"](t, net, active)
    result.csv = metrics_csv(ledger, spec.sample_every)
    return result


def build_workload(cfg: WorkloadConfig):
    return generate_substrate(cfg), generate_vnr_stream(cfg)


def run(spec: ExperimentSpec, seed: int | None = None, model=None) -> RunResult:
    seed = spec.seeds[0] if seed is None else seed
    cfg = spec.workload.replace(rng_seed=seed)
    net, stream = build_workload(cfg)
    placer = make_placer(spec.placer, seed, spec.model_path, model)
    return simulate(spec, net, stream, placer)


SWEEP_METRICS = ("avg_revenue", "acceptance_rate", "rc_ratio")


def aggregate(tables: dict, metrics=SWEEP_METRICS) -> list[dict]:
    """Long-format mean/std over seeds. ``tables`` maps a key to a list of per-run row lists."""
    out = []
    for key in tables:
        runs = tables[key]
        times = sorted({r["t"] for rows in runs for r in rows})
        for t in times:
            for m in metrics:
                vals = [r[m] for rows in runs for r in rows if r["t"] == t and r[m] is not None]
                if not vals:
                    out.append({"key": key, "t": t, "metric": m, "mean": None, "std": None, "n": 0})
                    continue
                out.append({"key": key, "t": t, "metric": m, "mean": float(np.mean(vals)),
                            "std": float(np.std(vals)), "n": len(vals)})
    return out


def sweep(spec: ExperimentSpec, out_dir=None, model=None) -> dict:
    """One run per (CPU demand upper bound, seed); returns per-value tables and the long CSV."""
    lo = spec.workload.cpu_demand_range[0]
    tables: dict[int, list[list[dict]]] = {}
    for value in spec.sweep_values:
        sub = spec.replace(workload=spec.workload.replace(cpu_demand_range=(lo, value)))
        tables[value] = []
        for seed in spec.seeds:
            res = run(sub, seed, model)
            tables[value].append(metric_rows(res.ledger, spec.sample_every))
            if out_dir is not None:
                Path(out_dir, f"run_cpu{value}_seed{seed}.csv").write_text(res.csv)
    rows = aggregate(tables)
    for r in rows:
        r["sweep_value"] = r.pop("key")
    csv = rows_to_csv(rows, ["sweep_value", "t", "metric", "mean", "std", "n"])
    if out_dir is not None:
        Path(out_dir, "sweep.csv").write_text(csv)
    return {"tables": tables, "rows": rows, "csv": csv}


def compare(spec: ExperimentSpec, placers: list[str], out_dir=None, models: dict | None = None) -> dict:
    """Run each placer on identical workload seeds; wide table with deltas to the first placer."""
    if not placers:
        raise ConfigError("compare needs at least one placer")
    models = models or {}
    tables: dict[str, list[list[dict]]] = {}
    for name in placers:
        sub = spec.replace(placer=name)
        tables[name] = []
        for seed in spec.seeds:
            res = run(sub, seed, models.get(name))
            tables[name].append(metric_rows(res.ledger, spec.sample_every))
            if out_dir is not None:
                Path(out_dir, f"run_{name}_seed{seed}.csv").write_text(res.csv)
    agg = aggregate(tables)
    index = {(r["key"], r["t"], r["metric"]): r["mean"] for r in agg}
    times = sorted({r["t"] for r in agg})
    columns = ["t"]
    for name in placers:
        columns += [f"{name}:{m}" for m in SWEEP_METRICS]
    for name in placers[1:]:
        columns += [f"delta:{name}:{m}" for m in SWEEP_METRICS]
    rows = []
    for t in times:
        row = {"t": t}
        for name in placers:
            for m in SWEEP_METRICS:
                row[f"{name}:{m}"] = index.get((name, t, m))
        for name in placers[1:]:
            for m in SWEEP_METRICS:
                a, b = index.get((name, t, m)), index.get((placers[0], t, m))
                row[f"delta:{name}:{m}"] = None if a is None or b is None else a - b
        rows.append(row)
    csv = rows_to_csv(rows, columns)
    if out_dir is not None:
        Path(out_dir, "compare.csv").write_text(csv)
    return {"tables": tables, "rows": rows, "csv": csv, "columns": columns}


def replay_csv(ledger_text: str, sample_every: int = 100) -> str:
    return metrics_csv(RunLedger.from_text(ledger_text), sample_every)


def train(spec: ExperimentSpec, seed: int = 0, workers: int = 1, steps: int = 20000):
    """Train a policy on ``spec.train_seeds`` workloads; returns (model, log CSV text)."""
    from .agent import LOG_COLUMNS, PlacementEnv, PolicyModel, train_a3c
    if workers < 1 or steps < 0:
        raise ConfigError("workers must be >= 1 and steps >= 0")
    cfg = dataclasses.replace(spec.agent, k_paths=spec.k_paths)
    seeds = spec.train_seeds
    if not seeds:
        raise ConfigError("train_seeds must be non-empty")

    def env_factory(i):
        j = i % len(seeds)
        return PlacementEnv(spec.workload, seeds[j:] + seeds[:j], k_paths=spec.k_paths)

    model, rows = train_a3c(env_factory, PolicyModel(cfg, seed=seed), workers=workers,
                            steps=steps, seed=seed)
    return model, rows_to_csv(rows, LOG_COLUMNS)
