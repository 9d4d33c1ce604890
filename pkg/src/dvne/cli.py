"""Command line entry point: ``dvne <command> [options]``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import sim
from .sim import ConfigError, ExperimentSpec
from .workload import format_stream, generate_substrate, generate_vnr_stream

log = logging.getLogger("dvne")


def _spec(args) -> ExperimentSpec:
    spec = sim.load_spec(args.config) if args.config else ExperimentSpec()
    changes = {}
    if getattr(args, "placer", None):
        changes["placer"] = args.placer
    if getattr(args, "consolidate", None) is not None:
        changes["consolidate"] = sim._onoff(args.consolidate)
    if getattr(args, "model", None):
        changes["model_path"] = args.model
    if args.seed is not None:
        changes["seeds"] = [args.seed]
    return spec.replace(**changes) if changes else spec


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_workload(args):
    spec = _spec(args)
    out = _out_dir(args)
    for seed in spec.seeds:
        cfg = spec.workload.replace(rng_seed=seed)
        (out / f"substrate_seed{seed}.txt").write_text(generate_substrate(cfg).to_text())
        (out / f"vnrs_seed{seed}.txt").write_text(format_stream(generate_vnr_stream(cfg)))
    log.info("wrote workload for seeds %s to %s", spec.seeds, out)


def cmd_run(args):
    spec = _spec(args)
    out = _out_dir(args)
    for seed in spec.seeds:
        res = sim.run(spec, seed)
        (out / f"metrics_seed{seed}.csv").write_text(res.csv)
        (out / f"ledger_seed{seed}.txt").write_text(res.ledger.to_text())
        log.info("seed %d: accepted %d of %d", seed, res.accepted, res.arrived)


def cmd_sweep(args):
    spec = _spec(args)
    sim.sweep(spec, _out_dir(args))


def cmd_compare(args):
    spec = _spec(args)
    placers = args.placers.replace(",", " ").split() if args.placers else spec.placers
    sim.compare(spec, placers, _out_dir(args))


def cmd_train(args):
    spec = _spec(args)
    model, log_csv = sim.train(spec, seed=args.seed or 0, workers=args.workers, steps=args.steps)
    path = Path(args.out or "model.bin")
    path.parent.mkdir(parents=True, exist_ok=True)
    model.save(path)
    path.with_suffix(".log.csv").write_text(log_csv)
    log.info("saved model to %s", path)


def cmd_replay(args):
    text = Path(args.ledger).read_text()
    csv = sim.replay_csv(text, _spec(args).sample_every)
    if args.out:
        Path(args.out).write_text(csv)
    else:
        sys.stdout.write(csv)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dvne", description="Dynamic virtual network embedding lab.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value experiment file")
    common.add_argument("--seed", type=int, help="single workload seed (overrides config seeds)")
    common.add_argument("--out", help="output directory (train: model file)")
    sub = p.add_subparsers(dest="command", required=True)

    def placement_flags(sp):
        sp.add_argument("--placer", choices=sim.PLACERS)
        sp.add_argument("--consolidate", choices=("on", "off"))
        sp.add_argument("--model", help="trained policy checkpoint for --placer rl")

    sp = sub.add_parser("gen-workload", parents=[common], help="write substrate and VNR stream files")
    sp.set_defaults(func=cmd_gen_workload)
    sp = sub.add_parser("run", parents=[common], help="simulate one placer")
    placement_flags(sp)
    sp.set_defaults(func=cmd_run)
    sp = sub.add_parser("sweep", parents=[common], help="CPU demand sweep")
    placement_flags(sp)
    sp.set_defaults(func=cmd_sweep)
    sp = sub.add_parser("compare", parents=[common], help="several placers on identical seeds")
    placement_flags(sp)
    sp.add_argument("--placers", help="comma separated placer names (default: from config)")
    sp.set_defaults(func=cmd_compare)
    sp = sub.add_parser("train", parents=[common], help="train the actor-critic policy")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--steps", type=int, default=20000, help="total parameter updates")
    sp.set_defaults(func=cmd_train)
    sp = sub.add_parser("replay", parents=[common], help="recompute metrics CSV from a ledger file")
    sp.add_argument("ledger")
    sp.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    level = getattr(logging, os.environ.get("DVNE_LOG_LEVEL", "WARNING").upper(), logging.WARNING)
    logging.basicConfig(level=level if isinstance(level, int) else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
