"""CPU demand sweep: U[1,50], U[1,40], U[1,30], U[1,20] on the desk-scale workload."""
import argparse
from pathlib import Path

from dvne.agent import PolicyModel
from dvne.presets import desk_spec
from dvne.sim import sweep


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--placer", default="greedy")
    p.add_argument("--model")
    p.add_argument("--consolidate", action="store_true")
    p.add_argument("--out", default="results/sweep")
    args = p.parse_args()

    spec = desk_spec(placer=args.placer, consolidate=args.consolidate)
    model = PolicyModel.load(args.model) if args.model else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res = sweep(spec, out, model)
    for value in spec.sweep_values:
        final = [r for r in res["rows"] if r["sweep_value"] == value and r["metric"] == "avg_revenue"][-1]
        print(f"U[1,{value}]  final long-term average revenue {final['mean']:.2f} +- {final['std']:.2f}")


if __name__ == "__main__":
    main()
