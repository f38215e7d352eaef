import json
import os

import numpy as np
import pytest

from ctus.cli import EXIT_CONFIG, EXIT_IO, main
from ctus.config import frame_seed, load_config, parse_config
from ctus.errors import ConfigError
from ctus.pipeline import run_simulate
from ctus.volume import CtVolume, save_volume


def make_phantom(path, n=96):
    """Flat bone slab under soft tissue; big enough for a small fan."""
    vox = np.full((n, n, n), 40.0, dtype=np.float32)
    vox[: n // 3, :, :] = 900.0  # bone low-z; probe looks down -z
    vol = CtVolume((n, n, n), (1, 1, 1), (0, 0, 0), np.eye(3), vox)
    save_volume(vol, str(path))


def base_config(tmp_path, count=2, seed=7, workers_note=None):
    vol_path = tmp_path / "phantom.ctvol.json"
    if not vol_path.exists():
        make_phantom(vol_path)
    poses = [
        {
            "position_mm": [48.0, 48.0, 50.0 - 2.0 * i],
            "quaternion_xyzw": [1.0, 0.0, 0.0, 0.0],  # z-axis flipped to -z
        }
        for i in range(count)
    ]
    return {
        "config_version": 1,
        "volume": "phantom.ctvol.json",
        "scan_path": {"mode": "poses", "poses": poses},
        "probe": {
            "radius_mm": 40.0,
            "fov_angle_deg": 40.0,
            "num_scanlines": 32,
            "samples_per_line": 48,
            "radial_step_mm": 0.5,
            "frequency_mhz": 5.0,
        },
        "synthesis": {"out_size": [64, 64], "n_planes": 3},
        "output_dir": "out",
        "global_seed": seed,
    }


def write_config(tmp_path, doc, name="sim.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


# --------------------------------------------------------------- parsing


def test_load_valid_config(tmp_path):
    cfg = load_config(write_config(tmp_path, base_config(tmp_path)))
    assert cfg.fan.num_scanlines == 32
    assert cfg.global_seed == 7
    assert cfg.output_dir == str(tmp_path / "out")
    assert len(cfg.config_hash()) == 16


def test_unknown_top_level_key(tmp_path):
    doc = base_config(tmp_path)
    doc["wobble"] = 1
    with pytest.raises(ConfigError, match="wobble"):
        load_config(write_config(tmp_path, doc))


def test_unknown_nested_key(tmp_path):
    doc = base_config(tmp_path)
    doc["probe"]["colour"] = "red"
    with pytest.raises(ConfigError, match="colour"):
        load_config(write_config(tmp_path, doc))


def test_wrong_config_version(tmp_path):
    doc = base_config(tmp_path)
    doc["config_version"] = 99
    with pytest.raises(ConfigError, match="config_version"):
        load_config(write_config(tmp_path, doc))


def test_missing_volume_file(tmp_path):
    doc = base_config(tmp_path)
    doc["volume"] = "nope.ctvol.json"
    with pytest.raises(ConfigError, match="not found"):
        load_config(write_config(tmp_path, doc))


def test_invalid_scan_mode(tmp_path):
    doc = base_config(tmp_path)
    doc["scan_path"] = {"mode": "teleport"}
    with pytest.raises(ConfigError, match="mode"):
        load_config(write_config(tmp_path, doc))


def test_config_hash_key_order_invariant(tmp_path):
    doc = base_config(tmp_path)
    cfg1 = parse_config(doc, str(tmp_path))
    flipped = dict(reversed(list(doc.items())))
    cfg2 = parse_config(flipped, str(tmp_path))
    assert cfg1.config_hash() == cfg2.config_hash()


def test_frame_seed_stable_and_distinct():
    assert frame_seed(5, 0) == frame_seed(5, 0)
    seeds = {frame_seed(5, i) for i in range(100)}
    assert len(seeds) == 100
    assert frame_seed(5, 0) != frame_seed(6, 0)


# ------------------------------------------------------------ simulation


def test_run_simulate_writes_dataset(tmp_path):
    cfg = load_config(write_config(tmp_path, base_config(tmp_path, count=3)))
    manifest = run_simulate(cfg, workers=1)
    assert manifest["n_frames"] == 3
    for i in range(3):
        for name in (f"frame_{i:06d}.png", f"label_{i:06d}.png", f"frame_{i:06d}.json"):
            assert os.path.isfile(tmp_path / "out" / name)
            assert name in manifest["files"]
    on_disk = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert on_disk == manifest
    meta = json.loads((tmp_path / "out" / "frame_000001.json").read_text())
    assert meta["config_hash"] == cfg.config_hash()
    assert meta["seed"] == frame_seed(cfg.global_seed, 1)


def test_run_simulate_repeatable(tmp_path):
    doc = base_config(tmp_path, count=2)
    doc["output_dir"] = "out_a"
    m1 = run_simulate(load_config(write_config(tmp_path, doc, "a.json")), workers=1)
    doc["output_dir"] = "out_b"
    m2 = run_simulate(load_config(write_config(tmp_path, doc, "b.json")), workers=1)
    for name, digest in m1["files"].items():
        assert m2["files"][name] == digest


# ------------------------------------------------------------------- CLI


def test_cli_simulate_and_exit_codes(tmp_path):
    cfg_path = write_config(tmp_path, base_config(tmp_path, count=1))
    assert main(["simulate", cfg_path]) == 0
    assert os.path.isfile(tmp_path / "out" / "manifest.json")
    assert main(["simulate", str(tmp_path / "missing.json")]) == EXIT_CONFIG


def test_cli_rejects_bad_config(tmp_path):
    doc = base_config(tmp_path)
    doc["probe"]["fov_angle_deg"] = -10.0
    assert main(["simulate", write_config(tmp_path, doc)]) == EXIT_CONFIG


def test_cli_env_worker_override(tmp_path, monkeypatch):
    monkeypatch.setenv("CTUS_THREADS", "1")
    cfg_path = write_config(tmp_path, base_config(tmp_path, count=1))
    assert main(["simulate", cfg_path, "--workers", "4"]) == 0


def test_cli_press_preview(tmp_path):
    cfg_path = write_config(tmp_path, base_config(tmp_path, count=1))
    out = tmp_path / "preview.png"
    assert main(["press-preview", cfg_path, "0", "--out", str(out)]) == 0
    assert out.is_file()
    assert main(["press-preview", cfg_path, "9", "--out", str(out)]) == EXIT_CONFIG


def test_cli_evaluate(tmp_path):
    cfg_path = write_config(tmp_path, base_config(tmp_path, count=2))
    assert main(["simulate", cfg_path]) == 0
    out_dir = str(tmp_path / "out")
    report_path = str(tmp_path / "report.json")
    # self-evaluation: labels vs themselves must be perfect
    assert (
        main(
            [
                "evaluate",
                "--pred",
                out_dir,
                "--gt",
                out_dir,
                "--spacing-mm",
                "0.5",
                "--out",
                report_path,
            ]
        )
        == 0
    )
    summary = json.loads(open(report_path).read())
    assert summary["dice"]["mean"] == 1.0
    assert summary["cd_tp_mm"]["mean"] == 0.0


def test_cli_screw_eval(tmp_path):
    plan = {
        "entry_mm": [0, 0, 0],
        "tip_mm": [0, 0, 40.0],
        "axis": [0, 0, 1.0],
        "length_mm": 40.0,
        "diameter_mm": 6.5,
    }
    ident = {"R": np.eye(3).reshape(-1).tolist(), "t": [0.0, 0.0, 0.0]}
    shifted = {"R": np.eye(3).reshape(-1).tolist(), "t": [3.0, 0.0, 0.0]}
    paths = {}
    for name, doc in (("plan", plan), ("est", shifted), ("gt", ident)):
        p = tmp_path / f"{name}.json"
        p.write_text(json.dumps(doc))
        paths[name] = str(p)
    out = tmp_path / "screw.json"
    assert (
        main(
            [
                "screw-eval",
                "--plan",
                paths["plan"],
                "--est",
                paths["est"],
                "--gt",
                paths["gt"],
                "--out",
                str(out),
            ]
        )
        == 0
    )
    result = json.loads(out.read_text())
    assert result["tip_err_norm_mm"] == pytest.approx(3.0)
    assert result["angle_deg"] == pytest.approx(0.0, abs=1e-9)
