"""Side-by-side placer comparison on the desk-scale workload.

Writes compare.csv plus one metrics CSV per (placer, seed) and prints the
final cumulative numbers. Pass --model to include a trained policy.
"""
import argparse
from pathlib import Path

from dvne.agent import PolicyModel
from dvne.presets import desk_spec
from dvne.sim import compare

METRICS = ("avg_revenue", "acceptance_rate", "rc_ratio")


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--placers", default="random,greedy,noderank,fitness-consolidate")
    p.add_argument("--model", help="checkpoint for the rl placer")
    p.add_argument("--seeds", default=None)
    p.add_argument("--out", default="results/compare")
    args = p.parse_args()

    placers = args.placers.split(",")
    models = {}
    if args.model:
        placers.append("rl")
        models["rl"] = PolicyModel.load(args.model)
    spec = desk_spec()
    if args.seeds:
        spec = spec.replace(seeds=[int(s) for s in args.seeds.split(",")])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res = compare(spec, placers, out, models)
    last = res["rows"][-1]
    print(f"t = {last['t']}")
    for name in placers:
        print(f"{name:>20s}  " + "  ".join(f"{m} {last[f'{name}:{m}']:.3f}" for m in METRICS))


if __name__ == "__main__":
    main()
