"""Revenue, cost, acceptance and R/C over a simulation ledger."""
from __future__ import annotations

import bisect
import io
from dataclasses import dataclass, field

from .substrate import VirtualNetwork


class UnmappedLink(ValueError):
    pass


def revenue(vn: VirtualNetwork) -> int:
    return sum(vn.nodes.values()) + sum(l.bw for l in vn.links.values())


def cost(vn: VirtualNetwork, emb) -> int:
    total = sum(vn.nodes.values())
    for lid in vn.links:
        shares = emb.link_map.get(lid)
        if not shares:
            raise UnmappedLink(f"virtual link {lid} is not mapped")
        total += sum(s.bw * len(s.links) for s in shares)
    return total


@dataclass(frozen=True)
class ArrivalRecord:
    t: int
    vnr: int
    accepted: bool
    revenue: int
    cost: int


@dataclass(frozen=True)
class MutationRecord:
    t: int
    vnr: int
    accepted: bool
    revenue: int  # demand newly added by the mutation
    cost: int     # growth of the embedding's substrate footprint


@dataclass(frozen=True)
class SampleRecord:
    t: int
    beta: float
    objective: float
    active: int


@dataclass
class RunLedger:
    arrivals: list[ArrivalRecord] = field(default_factory=list)
    mutations: list[MutationRecord] = field(default_factory=list)
    samples: list[SampleRecord] = field(default_factory=list)

    def to_text(self) -> str:
        out = io.StringIO()
        for r in self.arrivals:
            out.write(f"ARRIVAL {r.t} {r.vnr} {int(r.accepted)} {r.revenue} {r.cost}\n")
        for r in self.mutations:
            out.write(f"MUTATION {r.t} {r.vnr} {int(r.accepted)} {r.revenue} {r.cost}\n")
        for r in self.samples:
            out.write(f"SAMPLE {r.t} {r.beta!r} {r.objective!r} {r.active}\n")
        return out.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "RunLedger":
        led = cls()
        for line in text.splitlines():
            p = line.split()
            if not p:
                continue
            if p[0] == "ARRIVAL":
                led.arrivals.append(ArrivalRecord(int(p[1]), int(p[2]), p[3] == "1", int(p[4]), int(p[5])))
            elif p[0] == "MUTATION":
                led.mutations.append(MutationRecord(int(p[1]), int(p[2]), p[3] == "1", int(p[4]), int(p[5])))
            elif p[0] == "SAMPLE":
                led.samples.append(SampleRecord(int(p[1]), float(p[2]), float(p[3]), int(p[4])))
            else:
                raise ValueError(f"unknown ledger record {p[0]}")
        return led


class _Prefix:
    """Cumulative sums of (revenue, cost, accepted, arrived) keyed by time."""

    def __init__(self, led: RunLedger):
        events = []
        for r in led.arrivals:
            events.append((r.t, r.revenue if r.accepted else 0, r.cost if r.accepted else 0,
                           int(r.accepted), 1))
        for r in led.mutations:
            if r.accepted:
                events.append((r.t, r.revenue, r.cost, 0, 0))
        events.sort(key=lambda e: e[0])
        self.times = [e[0] for e in events]
        self.cum = [(0, 0, 0, 0)]
        for _, rv, c, a, n in events:
            R, C, A, N = self.cum[-1]
            self.cum.append((R + rv, C + c, A + a, N + n))

    def at(self, t) -> tuple[int, int, int, int]:
        return self.cum[bisect.bisect_right(self.times, t)]


def _ratio(a, b):
    return None if b == 0 else a / b


def long_term_average_revenue(led: RunLedger, t) -> float | None:
    if t <= 0:
        return None
    return _Prefix(led).at(t)[0] / t


def revenue_cost_ratio(led: RunLedger, t) -> float | None:
    R, C, _, _ = _Prefix(led).at(t)
    return _ratio(R, C)


def acceptance_rate(led: RunLedger, t) -> float | None:
    _, _, A, N = _Prefix(led).at(t)
    return _ratio(A, N)


METRIC_COLUMNS = ["t", "avg_revenue", "avg_cost", "rc_ratio", "acceptance_rate", "beta",
                  "active_vnrs", "window_revenue", "window_acceptance", "objective"]


def metric_rows(led: RunLedger, window: int = 100) -> list[dict]:
    """One row per sample record: cumulative and trailing-window indexes."""
    pre = _Prefix(led)
    rows = []
    for s in led.samples:
        R, C, A, N = pre.at(s.t)
        R0, _, A0, N0 = pre.at(s.t - window)
        rows.append({
            "t": s.t,
            "avg_revenue": R / s.t if s.t > 0 else None,
            "avg_cost": C / s.t if s.t > 0 else None,
            "rc_ratio": _ratio(R, C),
            "acceptance_rate": _ratio(A, N),
            "beta": s.beta,
            "active_vnrs": s.active,
            "window_revenue": (R - R0) / window,
            "window_acceptance": _ratio(A - A0, N - N0),
            "objective": s.objective,
        })
    return rows


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def rows_to_csv(rows: list[dict], columns: list[str]) -> str:
    out = io.StringIO()
    out.write(",".join(columns) + "\n")
    for r in rows:
        out.write(",".join(_fmt(r.get(c)) for c in columns) + "\n")
    return out.getvalue()


def metrics_csv(led: RunLedger, window: int = 100) -> str:
    return rows_to_csv(metric_rows(led, window), METRIC_COLUMNS)
