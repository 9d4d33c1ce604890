import numpy as np
import pytest

from dvne import cli
from dvne.metrics import RunLedger, metric_rows
from dvne.sim import (ConfigError, ExperimentSpec, aggregate, compare, load_spec, replay_csv, run, simulate,
                      spec_from_mapping, sweep, train)
from dvne.substrate import SubstrateNetwork, VirtualNetwork
from dvne.workload import MutationEvent, ResizeNodeCpu, VirtualRequest, WorkloadConfig

TINY = WorkloadConfig(n_substrate_nodes=10, n_substrate_links=20, n_vnrs=25, vnodes_range=(2, 4),
                      mean_lifetime=300)


def tiny_spec(**kw):
    kw.setdefault("workload", TINY)
    return ExperimentSpec(**kw)


def pair(a, b, bw=1):
    return VirtualNetwork.from_lists([a, b], [(0, 1, bw)])


def test_departure_precedes_arrival_and_sample_sees_both():
    net = SubstrateNetwork([10, 10], [(0, 1, 10)])
    stream = [VirtualRequest(0, pair(10, 10), 0, 100), VirtualRequest(1, pair(10, 10), 100, 100)]
    res = simulate(tiny_spec(duration=1), net, stream, lambda n, v: {0: 0, 1: 1})
    assert [a.accepted for a in res.ledger.arrivals] == [True, True]
    assert res.ledger.samples[0].t == 100 and res.ledger.samples[0].active == 1


def test_mutation_runs_before_same_time_arrival():
    net = SubstrateNetwork([20, 20, 20], [(0, 1, 10), (1, 2, 10), (0, 2, 10)])
    grow = MutationEvent(50, ResizeNodeCpu(0, 15))
    stream = [VirtualRequest(0, pair(5, 5), 0, 500, [grow]), VirtualRequest(1, pair(10, 10), 50, 500)]
    hosts = iter([{0: 0, 1: 1}, {0: 0, 1: 2}])
    res = simulate(tiny_spec(duration=1), net, stream, lambda n, v: next(hosts))
    # growth takes host 0 to 15 of 20 first, so the new request no longer fits there
    assert [m.accepted for m in res.ledger.mutations] == [True]
    assert not res.ledger.arrivals[1].accepted


def test_zero_vnrs():
    res = run(tiny_spec(workload=TINY.replace(n_vnrs=0)))
    assert res.ledger == RunLedger()
    assert res.csv.splitlines()[1:] == []


def test_single_vnr_abundant_capacity():
    net = SubstrateNetwork([1000, 1000], [(0, 1, 1000)])
    res = simulate(tiny_spec(duration=1), net, [VirtualRequest(0, pair(3, 4, 2), 10, 50)],
                   lambda n, v: {0: 0, 1: 1})
    row = metric_rows(res.ledger)[0]
    assert row["acceptance_rate"] == 1.0 and row["rc_ratio"] == 1.0


@pytest.mark.parametrize("placer", ["greedy", "random", "noderank", "fitness-consolidate"])
def test_replay_and_rerun_are_byte_identical(placer):
    spec = tiny_spec(placer=placer, check_invariants=True)
    a, b = run(spec, 4), run(spec, 4)
    assert a.csv == b.csv
    assert replay_csv(a.ledger.to_text()) == a.csv


def test_consolidation_records_reports():
    res = run(tiny_spec(placer="greedy", consolidate=True, check_invariants=True), 2)
    assert res.consolidations
    for rep in res.consolidations:
        assert all(y <= x + 1e-9 for x, y in zip(rep.betas, rep.betas[1:]))


def test_aggregate_against_direct_means():
    tables = {"a": [[{"t": 100, "m": 1.0}, {"t": 200, "m": None}], [{"t": 100, "m": 3.0}, {"t": 200, "m": 5.0}]]}
    rows = aggregate(tables, metrics=("m",))
    assert rows[0] == {"key": "a", "t": 100, "metric": "m", "mean": 2.0, "std": 1.0, "n": 2}
    assert rows[1]["mean"] == 5.0 and rows[1]["n"] == 1


def test_sweep_structure_and_oracle(tmp_path):
    spec = tiny_spec(seeds=[1, 2], sweep_values=[50, 40, 30, 20])
    out = sweep(spec, tmp_path)
    assert list(out["tables"]) == [50, 40, 30, 20]
    keys = {(r["sweep_value"], r["metric"]) for r in out["rows"]}
    assert len(keys) == 4 * 3
    for value in (50, 20):
        direct = [metric_rows(run(spec.replace(workload=TINY.replace(cpu_demand_range=(1, value))), s).ledger)
                  for s in (1, 2)]
        for r in out["rows"]:
            if r["sweep_value"] != value:
                continue
            vals = [row[r["metric"]] for rows in direct for row in rows if row["t"] == r["t"]]
            vals = [v for v in vals if v is not None]
            assert r["mean"] == pytest.approx(np.mean(vals)) and r["n"] == len(vals)
    assert (tmp_path / "sweep.csv").read_text() == out["csv"]
    assert (tmp_path / "run_cpu30_seed2.csv").exists()


def test_single_value_sweep_equals_run(tmp_path):
    spec = tiny_spec(seeds=[3], sweep_values=[50])
    out = sweep(spec, tmp_path)
    assert (tmp_path / "run_cpu50_seed3.csv").read_text() == run(spec, 3).csv
    assert all(r["std"] in (0.0, None) for r in out["rows"])


def test_compare_same_placer_twice():
    out = compare(tiny_spec(seeds=[1]), ["greedy", "greedy"])
    for row in out["rows"]:
        for m in ("avg_revenue", "acceptance_rate", "rc_ratio"):
            assert row[f"delta:greedy:{m}"] in (0.0, None)


def test_compare_deltas_match_runs():
    spec = tiny_spec(seeds=[2])
    out = compare(spec, ["greedy", "random"])
    g = {r["t"]: r for r in metric_rows(run(spec.replace(placer="greedy"), 2).ledger)}
    r = {r["t"]: r for r in metric_rows(run(spec.replace(placer="random"), 2).ledger)}
    for row in out["rows"]:
        t = row["t"]
        assert row["delta:random:acceptance_rate"] == pytest.approx(r[t]["acceptance_rate"] - g[t]["acceptance_rate"])


def test_compare_requires_placers():
    with pytest.raises(ConfigError):
        compare(tiny_spec(), [])


def test_spec_validation():
    for bad in (dict(placer="nope"), dict(seeds=[]), dict(k_paths=9), dict(sweep_values=[0]),
                dict(duration=-1), dict(placers=["x"])):
        with pytest.raises(ConfigError):
            tiny_spec(**bad)
    with pytest.raises(ConfigError):
        spec_from_mapping({"bogus": "1"})
    with pytest.raises(ConfigError):
        spec_from_mapping({"agent.nope": "1"})
    with pytest.raises(ConfigError):
        run(tiny_spec(placer="rl"))


def test_spec_from_file(tmp_path):
    p = tmp_path / "exp.cfg"
    p.write_text("n_vnrs = 7\ncpu_demand_range = 1,20\nplacer = random\nconsolidate = on\n"
                 "seeds = 4 5\nagent.lr = 0.01\nagent.hidden = 8\n")
    spec = load_spec(p)
    assert spec.workload.n_vnrs == 7 and spec.workload.cpu_demand_range == (1, 20)
    assert spec.placer == "random" and spec.consolidate and spec.seeds == [4, 5]
    assert spec.agent.lr == 0.01 and spec.agent.hidden == 8
    with pytest.raises(ConfigError):
        load_spec(tmp_path / "missing.cfg")


def test_train_log_deterministic():
    spec = tiny_spec(train_seeds=[7, 8])
    spec.agent.epoch_updates = 5
    m1, log1 = train(spec, seed=1, steps=15)
    m2, log2 = train(spec, seed=1, steps=15)
    assert log1 == log2 and len(log1.splitlines()) == 4
    with pytest.raises(ConfigError):
        train(spec, workers=0)


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "tiny.cfg"
    p.write_text("n_substrate_nodes = 10\nn_substrate_links = 20\nn_vnrs = 20\nvnodes_range = 2,4\n"
                 "seeds = 1\nsweep_values = 50 30\nagent.epoch_updates = 5\nagent.hidden = 4\n")
    return p


def test_cli_commands(tmp_path, cfg_file):
    c = str(cfg_file)
    out = tmp_path / "o"
    assert cli.main(["gen-workload", "--config", c, "--out", str(out)]) == 0
    assert (out / "substrate_seed1.txt").exists() and (out / "vnrs_seed1.txt").exists()
    assert cli.main(["run", "--config", c, "--out", str(out), "--placer", "noderank", "--consolidate", "on"]) == 0
    ledger = out / "ledger_seed1.txt"
    assert cli.main(["replay", "--config", c, str(ledger), "--out", str(out / "replayed.csv")]) == 0
    assert (out / "replayed.csv").read_text() == (out / "metrics_seed1.csv").read_text()
    assert cli.main(["sweep", "--config", c, "--out", str(out)]) == 0
    assert (out / "sweep.csv").exists()
    assert cli.main(["compare", "--config", c, "--out", str(out), "--placers", "greedy,random"]) == 0
    assert (out / "compare.csv").read_text().startswith("t,greedy:avg_revenue")
    model = out / "m.bin"
    assert cli.main(["train", "--config", c, "--out", str(model), "--steps", "10"]) == 0
    assert model.exists() and (out / "m.log.csv").exists()
    assert cli.main(["run", "--config", c, "--out", str(out / "rl"), "--placer", "rl", "--model", str(model)]) == 0


def test_cli_config_errors(tmp_path, cfg_file, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("wat = 1\n")
    assert cli.main(["run", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert cli.main(["run", "--config", str(cfg_file), "--placer", "rl", "--out", str(tmp_path)]) == 2
    assert cli.main(["compare", "--config", str(cfg_file), "--placers", ",", "--out", str(tmp_path)]) == 2
    assert "config error" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        cli.main(["run", "--placer", "bogus"])
    assert exc.value.code == 2
