"""Train the policy on the desk-scale workload and report held-out results."""
import argparse
import time
from pathlib import Path

from dvne.presets import DESK_TRAIN_STEPS, desk_spec
from dvne.sim import run, train


def totals(spec, placer, model=None):
    rev = acc = arr = 0
    for seed in spec.seeds:
        res = run(spec.replace(placer=placer), seed, model)
        rev += sum(a.revenue for a in res.ledger.arrivals) + sum(m.revenue for m in res.ledger.mutations)
        acc, arr = acc + res.accepted, arr + res.arrived
    return rev, acc / arr


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=DESK_TRAIN_STEPS)
    p.add_argument("--out", default="results/desk_model.bin")
    p.add_argument("--eval-seeds", default=None, help="comma separated; default held-out seeds")
    args = p.parse_args()

    spec = desk_spec()
    if args.eval_seeds:
        spec = spec.replace(seeds=[int(s) for s in args.eval_seeds.split(",")])
    t0 = time.perf_counter()
    model, log_csv = train(spec, seed=args.seed, steps=args.steps)
    print(f"trained {args.steps} updates in {time.perf_counter() - t0:.0f}s")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    out.with_suffix(".log.csv").write_text(log_csv)

    base_rev, base_acc = totals(spec, "random")
    rl_rev, rl_acc = totals(spec, "rl", model)
    print(f"random  revenue {base_rev:7d}  acceptance {base_acc:.3f}")
    print(f"rl      revenue {rl_rev:7d}  acceptance {rl_acc:.3f}")
    print(f"gain    revenue {rl_rev / base_rev - 1:+.1%}  acceptance {rl_acc / base_acc - 1:+.1%}")


if __name__ == "__main__":
    main()
