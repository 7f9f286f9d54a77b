"""Command line entry point: ``mcrn {run,sweep,ablate,eval}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .checkpoint import load_checkpoint, read_header, save_checkpoint
from .config import ExperimentConfig, load_config
from .harness import ABLATIONS, ablate, build_data, evaluate, metrics_jsonl, rows_to_csv, run_experiment, sweep


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_(seed=args.seed)
    if getattr(args, "epochs", None) is not None:
        cfg = cfg.with_(epochs=args.epochs)
    return cfg


def _emit(text: str, out: str | None, name: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    Path(out).mkdir(parents=True, exist_ok=True)
    (Path(out) / name).write_text(text)


def cmd_run(args) -> int:
    if args.resume:
        state = load_checkpoint(args.resume)
        cfg = state.config
    else:
        cfg, state = _config(args), None
    on_epoch = None
    if args.out and args.checkpoint_every:
        ckpt = Path(args.out) / "checkpoint.mcrn"
        Path(args.out).mkdir(parents=True, exist_ok=True)

        def on_epoch(s):
            if s.epoch % args.checkpoint_every == 0 or s.epoch == cfg.epochs:
                save_checkpoint(ckpt, s)

    state = run_experiment(cfg, state=state, on_epoch=on_epoch)
    _emit(metrics_jsonl(state.records), args.out, "metrics.jsonl")
    if args.out:
        (Path(args.out) / "config.ini").write_text(cfg.to_text())
        timing = "".join(json.dumps({"record": i, "seconds": t}) + "\n" for i, t in enumerate(state.timings))
        (Path(args.out) / "timing.jsonl").write_text(timing)
        save_checkpoint(Path(args.out) / "checkpoint.mcrn", state)
    return 0


def cmd_sweep(args) -> int:
    rows = sweep(_config(args), args.param, args.values)
    _emit(rows_to_csv(rows), args.out, f"sweep_{args.param}.csv")
    return 0


def cmd_ablate(args) -> int:
    rows = ablate(_config(args), args.preset, args.seeds)
    _emit(rows_to_csv(rows), args.out, f"ablate_{args.preset}.csv")
    return 0


def cmd_eval(args) -> int:
    state = load_checkpoint(args.checkpoint)
    header = read_header(args.checkpoint)
    metrics = evaluate(state.encoder, build_data(state.config))
    out = {
        "config_hash": header["config_hash"],
        "epoch": state.epoch,
        **{k: metrics[k] for k in ("mAP", "cmc1", "cmc5", "cmc10", "domain_distance")},
    }
    sys.stdout.write(json.dumps(out) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcrn", description="Multi-centroid memory training on synthetic two-domain data.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", help="INI config file (defaults if omitted)")
        if seed:
            p.add_argument("--seed", type=int)
        p.add_argument("--epochs", type=int, help="override the configured epoch count")
        p.add_argument("--out", help="output directory (stdout if omitted)")

    p = sub.add_parser("run", help="train once and write per-epoch metrics")
    common(p)
    p.add_argument("--resume", help="continue from a checkpoint instead of starting fresh")
    p.add_argument("--checkpoint-every", type=int, default=0, metavar="N", help="also checkpoint every N epochs")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="final metrics over values of k or alpha")
    common(p)
    p.add_argument("--param", required=True, choices=["k", "alpha"])
    p.add_argument("--values", required=True, nargs="+", type=float)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablate", help="run a preset comparison over several seeds")
    common(p, seed=False)
    p.add_argument("--preset", required=True, choices=sorted(ABLATIONS))
    p.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2, 3, 4])
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("eval", help="evaluate a saved checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
