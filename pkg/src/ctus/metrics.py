"""Segmentation and registration metrics plus dataset-level reporting."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyDataset, ShapeMismatch

#: reported when one side of a Chamfer comparison is empty
CHAMFER_SENTINEL = math.inf


@dataclass
class SegMetrics:
    dice: float
    cd_tp_mm: float
    cd_fn_mm: float
    n_pred: int
    n_gt: int


def dice(pred, gt) -> float:
    """2|P n G| / (|P| + |G|); 1.0 when both masks are empty."""
    p = np.asarray(pred, dtype=bool)
    g = np.asarray(gt, dtype=bool)
    if p.shape != g.shape:
        raise ShapeMismatch(f"{p.shape} vs {g.shape}")
    np_, ng = int(p.sum()), int(g.sum())
    if np_ + ng == 0:
        return 1.0
    return 2.0 * int((p & g).sum()) / (np_ + ng)


def chamfer(pred, gt, spacing_mm=1.0):
    """Directed mean surface distances in mm: (pred->gt, gt->pred)."""
    p = np.asarray(pred, dtype=bool)
    g = np.asarray(gt, dtype=bool)
    if p.shape != g.shape:
        raise ShapeMismatch(f"{p.shape} vs {g.shape}")
    if np.isscalar(spacing_mm):
        spacing = np.array([spacing_mm, spacing_mm], dtype=float)
    else:
        spacing = np.asarray(spacing_mm, dtype=float)
    if np.any(spacing <= 0):
        raise ValueError("spacing must be positive")
    pp = np.argwhere(p) * spacing
    gp = np.argwhere(g) * spacing
    if len(pp) == 0 or len(gp) == 0:
        if len(pp) == 0 and len(gp) == 0:
            return 0.0, 0.0
        return CHAMFER_SENTINEL, CHAMFER_SENTINEL
    cd_tp = float(np.mean(cKDTree(gp).query(pp)[0]))
    cd_fn = float(np.mean(cKDTree(pp).query(gp)[0]))
    return cd_tp, cd_fn


def evaluate_pair(pred, gt, spacing_mm=1.0) -> SegMetrics:
    cd_tp, cd_fn = chamfer(pred, gt, spacing_mm)
    return SegMetrics(
        dice=dice(pred, gt),
        cd_tp_mm=cd_tp,
        cd_fn_mm=cd_fn,
        n_pred=int(np.asarray(pred, dtype=bool).sum()),
        n_gt=int(np.asarray(gt, dtype=bool).sum()),
    )


def report(per_frame: dict, csv_path=None, json_path=None) -> dict:
    """Summarize {frame_id: SegMetrics}: per-frame CSV + mean/median/max JSON."""
    if not per_frame:
        raise EmptyDataset("no frames to report")
    ids = sorted(per_frame)
    rows = [{"frame": i, **asdict(per_frame[i])} for i in ids]
    summary = {"n_frames": len(ids)}
    for key in ("dice", "cd_tp_mm", "cd_fn_mm"):
        vals = np.array([r[key] for r in rows], dtype=float)
        finite = vals[np.isfinite(vals)]
        stats = finite if len(finite) else vals
        summary[key] = {
            "mean": float(np.mean(stats)),
            "median": float(np.median(stats)),
            "max": float(np.max(stats)),
            "n_infinite": int(np.sum(~np.isfinite(vals))),
        }
    if csv_path:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
    if json_path:
        with open(json_path, "w") as fh:
            json.dump(summary, fh, indent=1)
    return summary
