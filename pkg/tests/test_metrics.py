import math

import pytest
from hypothesis import given, strategies as st

from dvne.embedding import Embedding, PathShare
from dvne.metrics import (METRIC_COLUMNS, ArrivalRecord, MutationRecord, RunLedger, SampleRecord, UnmappedLink,
                          acceptance_rate, cost, long_term_average_revenue, metric_rows, metrics_csv,
                          revenue, revenue_cost_ratio)
from dvne.substrate import VirtualNetwork


def vn2():
    return VirtualNetwork.from_lists([3, 4], [(0, 1, 5)])


def test_revenue_and_cost():
    vn = vn2()
    assert revenue(vn) == 12
    one = Embedding(0, vn, {0: 0, 1: 1}, {0: [PathShare((0, 1), (0,), 5)]})
    assert cost(vn, one) == 12
    split = Embedding(0, vn, {0: 0, 1: 3}, {0: [PathShare((0, 1, 3), (0, 1), 3), PathShare((0, 2, 3), (2, 3), 2)]})
    assert cost(vn, split) == 7 + 2 * 5
    with pytest.raises(UnmappedLink):
        cost(vn, Embedding(0, vn, {0: 0, 1: 1}, {}))


def test_empty_ledger_metrics_absent():
    led = RunLedger()
    assert acceptance_rate(led, 100) is None
    assert revenue_cost_ratio(led, 100) is None
    assert long_term_average_revenue(led, 0) is None
    assert long_term_average_revenue(led, 100) == 0


def mixed_ledger():
    led = RunLedger()
    led.arrivals += [ArrivalRecord(10, 0, True, 20, 30), ArrivalRecord(50, 1, False, 0, 0),
                     ArrivalRecord(120, 2, True, 10, 10), ArrivalRecord(250, 3, True, 5, 8)]
    led.mutations += [MutationRecord(130, 0, True, 4, 6), MutationRecord(140, 2, False, 0, 0)]
    led.samples += [SampleRecord(100, 1.5, 0.5, 1), SampleRecord(200, 2.0, 0.75, 2), SampleRecord(300, 0.25, 0.1, 1)]
    return led


def test_mixed_trace_against_recomputation():
    led = mixed_ledger()
    rows = {r["t"]: r for r in metric_rows(led)}
    assert rows[100]["avg_revenue"] == 20 / 100
    assert rows[100]["acceptance_rate"] == 1 / 2
    assert rows[200]["rc_ratio"] == (20 + 10 + 4) / (30 + 10 + 6)
    assert rows[200]["window_revenue"] == (10 + 4) / 100
    assert rows[200]["window_acceptance"] == 1.0
    assert rows[300]["acceptance_rate"] == 3 / 4
    assert rows[300]["avg_cost"] == 54 / 300
    assert revenue_cost_ratio(led, 300) == 39 / 54
    assert long_term_average_revenue(led, 300) == 39 / 300


def test_ledger_text_round_trip():
    led = mixed_ledger()
    led.samples.append(SampleRecord(400, 1 / 3, math.pi, 0))
    back = RunLedger.from_text(led.to_text())
    assert back == led
    assert metrics_csv(back) == metrics_csv(led)
    with pytest.raises(ValueError):
        RunLedger.from_text("BOGUS 1 2\n")


def test_csv_shape():
    text = metrics_csv(mixed_ledger())
    lines = text.splitlines()
    assert lines[0] == ",".join(METRIC_COLUMNS)
    assert len(lines) == 4
    assert lines[1].split(",")[0] == "100"


def test_one_hop_runs_have_unit_ratio():
    led = RunLedger()
    led.arrivals += [ArrivalRecord(t, t, True, 7 * t, 7 * t) for t in range(1, 20)]
    assert revenue_cost_ratio(led, 20) == 1.0


@given(st.lists(st.tuples(st.integers(0, 500), st.booleans(), st.integers(1, 50), st.integers(0, 60)), max_size=30))
def test_prefix_sums_match_direct_sums(records):
    led = RunLedger()
    for i, (t, acc, rv, extra) in enumerate(sorted(records)):
        led.arrivals.append(ArrivalRecord(t, i, acc, rv if acc else 0, rv + extra if acc else 0))
    for t in (0, 100, 250, 500):
        acc = [r for r in led.arrivals if r.t <= t and r.accepted]
        seen = [r for r in led.arrivals if r.t <= t]
        R, C = sum(r.revenue for r in acc), sum(r.cost for r in acc)
        assert acceptance_rate(led, t) == (len(acc) / len(seen) if seen else None)
        assert revenue_cost_ratio(led, t) == (R / C if C else None)
        assert R <= C
