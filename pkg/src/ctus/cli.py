"""Command-line entry point: simulate, press-preview, register, evaluate, screw-eval."""

from __future__ import annotations

import argparse
import json
import os
import re
import sys

import numpy as np
from PIL import Image

from . import metrics as metrics_mod
from .config import load_config
from .errors import ConfigError, CtusError
from .kinematics import ProbePose
from .pipeline import press_preview, run_simulate
from .registration import (
    PointCloud,
    ScrewPlan,
    coarse_align,
    frames_to_pointcloud,
    load_ply,
    save_ply,
    screw_error,
    trimmed_icp,
)
from .rigid import RigidTransform

EXIT_CONFIG = 2
EXIT_IO = 3


def _workers(args) -> int:
    env = os.environ.get("CTUS_THREADS")
    if env:
        return max(1, int(env))
    return max(1, args.workers)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    run_simulate(cfg, workers=_workers(args))
    return 0


def cmd_press_preview(args) -> int:
    cfg = load_config(args.config)
    out = args.out or os.path.join(cfg.output_dir, f"press_preview_{args.pose_index:06d}.png")
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    press_preview(cfg, args.pose_index, out)
    return 0


def _load_mask(path: str) -> np.ndarray:
    return np.asarray(Image.open(path).convert("L")) > 127


def cmd_register(args) -> int:
    with open(args.calib) as fh:
        calib = RigidTransform.from_matrix(np.asarray(json.load(fh)).reshape(4, 4))
    mask_files = sorted(
        f for f in os.listdir(args.masks) if re.match(r".*_(\d{6})\.png$", f)
    )
    if not mask_files:
        raise ConfigError(f"no mask PNGs in {args.masks}")
    frames = []
    for f in mask_files:
        idx = re.match(r".*_(\d{6})\.png$", f).group(1)
        meta_path = os.path.join(args.meta, f"frame_{idx}.json")
        with open(meta_path) as fh:
            meta = json.load(fh)
        frames.append((_load_mask(os.path.join(args.masks, f)), ProbePose.from_json_dict(meta["pose"])))
    if args.ct_cloud.endswith(".ply"):
        ct = load_ply(args.ct_cloud)
    else:
        with open(args.ct_cloud) as fh:
            ct = PointCloud(np.asarray(json.load(fh)["points"]))
    spacing = [float(v) for v in str(args.pixel_spacing_mm).split(",")]
    if len(spacing) == 1:
        spacing = spacing * 2
    us = frames_to_pointcloud(frames, calib, tuple(spacing))
    init = coarse_align(ct, us, trim_fraction=args.trim)
    result = trimmed_icp(
        ct, us, max_iter=args.max_iter, trim_fraction=args.trim, init=init
    )
    out = result.transform.to_json_dict()
    out["rms_mm"] = result.rms_mm
    out["mse_xyz"] = [float(v) for v in result.mse_xyz]
    out["iterations"] = result.iterations
    with open(args.out, "w") as fh:
        json.dump(out, fh, indent=1)
    if args.out_cloud:
        save_ply(ct.transformed(result.transform), args.out_cloud)
    return 0


def cmd_evaluate(args) -> int:
    pred_files = sorted(f for f in os.listdir(args.pred) if f.endswith(".png"))
    per_frame = {}
    for f in pred_files:
        m = re.search(r"(\d{6})\.png$", f)
        if not m:
            continue
        idx = m.group(1)
        gt_path = os.path.join(args.gt, f"label_{idx}.png")
        if not os.path.isfile(gt_path):
            raise ConfigError(f"missing ground truth for frame {idx}")
        per_frame[int(idx)] = metrics_mod.evaluate_pair(
            _load_mask(os.path.join(args.pred, f)),
            _load_mask(gt_path),
            args.spacing_mm,
        )
    if not per_frame:
        raise ConfigError(f"no prediction masks found in {args.pred}")
    csv_path = os.path.splitext(args.out)[0] + ".csv"
    summary = metrics_mod.report(per_frame, csv_path=csv_path, json_path=args.out)
    print(json.dumps(summary, indent=1))
    return 0


def cmd_screw_eval(args) -> int:
    with open(args.plan) as fh:
        p = json.load(fh)
    plan = ScrewPlan(p["entry_mm"], p["tip_mm"], p["axis"], p["length_mm"], p["diameter_mm"])
    with open(args.est) as fh:
        t_est = RigidTransform.from_json_dict(json.load(fh))
    with open(args.gt) as fh:
        t_gt = RigidTransform.from_json_dict(json.load(fh))
    err = screw_error(plan, t_est, t_gt)
    out = {
        "tip_err_mm": [float(v) for v in err["tip_err_mm"]],
        "tip_err_norm_mm": err["tip_err_norm_mm"],
        "angle_deg": err["angle_deg"],
    }
    text = json.dumps(out, indent=1)
    print(text)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ctus")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic US dataset")
    p.add_argument("config")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("press-preview", help="debug image of the pressure warp")
    p.add_argument("config")
    p.add_argument("pose_index", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_press_preview)

    p = sub.add_parser("register", help="CT-US rigid registration from mask frames")
    p.add_argument("--masks", required=True)
    p.add_argument("--meta", required=True)
    p.add_argument("--calib", required=True, help="JSON 4x4 row-major matrix")
    p.add_argument("--ct-cloud", required=True, help="PLY or JSON point cloud")
    p.add_argument(
        "--pixel-spacing-mm",
        default="0.3",
        help="mask pixel size in mm, one value or 'sx,sy'",
    )
    p.add_argument("--trim", type=float, default=0.2)
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--out", required=True)
    p.add_argument("--out-cloud")
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("evaluate", help="segmentation metrics over a dataset")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--spacing-mm", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("screw-eval", help="pedicle screw plan transfer error")
    p.add_argument("--plan", required=True)
    p.add_argument("--est", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_screw_eval)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, CtusError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
