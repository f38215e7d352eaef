"""segtrain / seginfer command-line entry points."""

from __future__ import annotations

import argparse

from .infer import infer
from .model import ModelSpec
from .train import train


def _size(arg):
    if arg is None:
        return None
    h, w = (int(v) for v in arg.split("x"))
    return (h, w)


def main_train(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="segtrain")
    ap.add_argument("--data", required=True, help="simulator output directory")
    ap.add_argument("--out", required=True, help="checkpoint path")
    ap.add_argument("--size", default=None, help="training resolution HxW")
    ap.add_argument("--batch-size", type=int, default=32)
    ap.add_argument("--lr", type=float, default=1e-4)
    ap.add_argument("--max-steps", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--target-dice", type=float, default=None)
    ap.add_argument("--time-budget-s", type=float, default=None)
    ap.add_argument("--log", default=None)
    ap.add_argument("--no-lclm", action="store_true")
    ap.add_argument("--no-mvit", action="store_true")
    args = ap.parse_args(argv)
    spec = ModelSpec(use_lclm=not args.no_lclm, use_mvit=not args.no_mvit)
    train(
        args.data,
        args.out,
        spec=spec,
        size=_size(args.size),
        batch_size=args.batch_size,
        lr=args.lr,
        max_steps=args.max_steps,
        seed=args.seed,
        target_dice=args.target_dice,
        time_budget_s=args.time_budget_s,
        log_path=args.log,
    )
    return 0


def main_infer(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="seginfer")
    ap.add_argument("--ckpt", required=True)
    ap.add_argument("--images", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--size", default=None, help="inference resolution HxW")
    ap.add_argument("--threshold", type=float, default=0.5)
    ap.add_argument("--log", default=None)
    args = ap.parse_args(argv)
    infer(args.ckpt, args.images, args.out, size=_size(args.size),
          threshold=args.threshold, log_path=args.log)
    return 0
