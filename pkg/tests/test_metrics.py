import json
import math

import numpy as np
import pytest

from ctus.errors import EmptyDataset, ShapeMismatch
from ctus.metrics import CHAMFER_SENTINEL, SegMetrics, chamfer, dice, evaluate_pair, report


def dice_oracle(pred, gt):
    """Set-based reimplementation."""
    p = {tuple(i) for i in np.argwhere(np.asarray(pred, bool))}
    g = {tuple(i) for i in np.argwhere(np.asarray(gt, bool))}
    if not p and not g:
        return 1.0
    return 2.0 * len(p & g) / (len(p) + len(g))


def chamfer_oracle(pred, gt, spacing):
    """Brute-force O(N*M) directed mean distances."""
    sp = np.asarray(spacing, float)
    p = np.argwhere(np.asarray(pred, bool)) * sp
    g = np.argwhere(np.asarray(gt, bool)) * sp
    d_pg = np.mean([min(np.linalg.norm(a - b) for b in g) for a in p])
    d_gp = np.mean([min(np.linalg.norm(a - b) for b in p) for a in g])
    return d_pg, d_gp


def test_dice_identical():
    m = np.random.default_rng(0).random((20, 20)) > 0.5
    assert dice(m, m) == 1.0


def test_dice_disjoint():
    a = np.zeros((10, 10), bool)
    b = np.zeros((10, 10), bool)
    a[0, 0] = True
    b[5, 5] = True
    assert dice(a, b) == 0.0


def test_dice_both_empty():
    e = np.zeros((4, 4), bool)
    assert dice(e, e) == 1.0


def test_dice_half_overlap():
    a = np.zeros((10, 10), bool)
    b = np.zeros((10, 10), bool)
    a[:, :4] = True  # 40 px
    b[:, 2:6] = True  # 40 px, 20 shared
    assert dice(a, b) == pytest.approx(2 * 20 / 80)


def test_dice_random_against_oracle():
    rng = np.random.default_rng(1)
    for _ in range(25):
        a = rng.random((16, 16)) > 0.6
        b = rng.random((16, 16)) > 0.6
        assert dice(a, b) == pytest.approx(dice_oracle(a, b), rel=1e-12)


def test_dice_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        dice(np.zeros((3, 3), bool), np.zeros((4, 4), bool))


def test_chamfer_identical_zero():
    m = np.random.default_rng(2).random((12, 12)) > 0.5
    assert chamfer(m, m) == (0.0, 0.0)


def test_chamfer_shifted_rows():
    a = np.zeros((20, 20), bool)
    b = np.zeros((20, 20), bool)
    a[5, :] = True
    b[8, :] = True
    tp, fn = chamfer(a, b, spacing_mm=1.0)
    assert tp == pytest.approx(3.0)
    assert fn == pytest.approx(3.0)


def test_chamfer_spacing_linearity():
    rng = np.random.default_rng(3)
    a = rng.random((15, 15)) > 0.7
    b = rng.random((15, 15)) > 0.7
    tp1, fn1 = chamfer(a, b, spacing_mm=1.0)
    tp2, fn2 = chamfer(a, b, spacing_mm=2.5)
    assert tp2 == pytest.approx(2.5 * tp1, rel=1e-9)
    assert fn2 == pytest.approx(2.5 * fn1, rel=1e-9)


def test_chamfer_anisotropic_spacing():
    a = np.zeros((10, 10), bool)
    b = np.zeros((10, 10), bool)
    a[2, 5] = True
    b[6, 5] = True
    tp, _ = chamfer(a, b, spacing_mm=(0.5, 2.0))
    assert tp == pytest.approx(4 * 0.5)


def test_chamfer_random_against_oracle():
    rng = np.random.default_rng(4)
    for _ in range(10):
        a = rng.random((12, 12)) > 0.8
        b = rng.random((12, 12)) > 0.8
        if not a.any() or not b.any():
            continue
        tp, fn = chamfer(a, b, spacing_mm=(1.0, 1.5))
        tp_o, fn_o = chamfer_oracle(a, b, (1.0, 1.5))
        assert tp == pytest.approx(tp_o, rel=1e-9)
        assert fn == pytest.approx(fn_o, rel=1e-9)


def test_chamfer_one_empty_sentinel():
    a = np.zeros((8, 8), bool)
    b = np.zeros((8, 8), bool)
    b[3, 3] = True
    assert chamfer(a, b) == (CHAMFER_SENTINEL, CHAMFER_SENTINEL)
    assert chamfer(b, a) == (CHAMFER_SENTINEL, CHAMFER_SENTINEL)


def test_chamfer_both_empty_zero():
    e = np.zeros((5, 5), bool)
    assert chamfer(e, e) == (0.0, 0.0)


def test_chamfer_bad_spacing():
    m = np.ones((3, 3), bool)
    with pytest.raises(ValueError):
        chamfer(m, m, spacing_mm=0.0)


def test_evaluate_pair_counts():
    a = np.zeros((6, 6), bool)
    b = np.zeros((6, 6), bool)
    a[1, 1] = True
    b[1, 1] = b[2, 2] = True
    m = evaluate_pair(a, b)
    assert (m.n_pred, m.n_gt) == (1, 2)
    assert m.dice == pytest.approx(2 / 3)


def test_report_summary_and_files(tmp_path):
    per_frame = {
        0: SegMetrics(0.9, 0.5, 0.7, 10, 11),
        1: SegMetrics(0.7, 1.5, 1.1, 8, 12),
        2: SegMetrics(0.5, math.inf, math.inf, 0, 9),
    }
    csv_path = tmp_path / "frames.csv"
    json_path = tmp_path / "summary.json"
    summary = report(per_frame, str(csv_path), str(json_path))
    assert summary["n_frames"] == 3
    assert summary["dice"]["mean"] == pytest.approx((0.9 + 0.7 + 0.5) / 3)
    assert summary["cd_tp_mm"]["mean"] == pytest.approx(1.0)  # finite only
    assert summary["cd_tp_mm"]["n_infinite"] == 1
    lines = csv_path.read_text().strip().splitlines()
    assert len(lines) == 4  # header + 3 frames
    assert json.loads(json_path.read_text())["n_frames"] == 3


def test_report_empty_raises():
    with pytest.raises(EmptyDataset):
        report({})
