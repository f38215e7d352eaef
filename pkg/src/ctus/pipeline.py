"""Per-frame synthesis pipeline and dataset generation orchestration."""

from __future__ import annotations

import hashlib
import json
import multiprocessing as mp
import os

import numpy as np
from PIL import Image

from .acoustics import build_acoustic_slice
from .config import PressConfig, SimConfig, SynthesisConfig, frame_seed
from .errors import ConfigError
from .kinematics import (
    ProbePose,
    move_free,
    move_on_curve,
    pose_to_slice_geometry,
    slice_curves,
    surface_state_at,
)
from .mesh import clip_region, load_obj
from .press import ProbeContact, apply_press, squeeze_band_mask
from .propagation import FanGeometry, PhysicsParams, propagate
from .synthesis import (
    UsFrame,
    blend,
    default_tgc,
    elevational_enhancement,
    make_label,
    quantize,
    radial_noise,
    resample_rect_to_fan,
    scan_convert,
)
from .volume import AIR_HU, CtVolume, load_volume, sample_slice


def _rect_slice_shape(fan: FanGeometry):
    """Rectangular working grid covering the fan, spacing = radial step."""
    half = np.deg2rad(fan.fov_angle_deg) / 2.0
    rho_max = fan.probe_radius_mm + fan.samples_per_line * fan.radial_step_mm
    depth = rho_max - fan.probe_radius_mm
    width = 2.0 * rho_max * np.sin(half)
    sp = fan.radial_step_mm
    rows = int(np.ceil(depth / sp)) + 2
    cols = int(np.ceil(width / sp)) + 2
    return rows, cols, sp


def synthesize_frame(
    vol: CtVolume,
    pose: ProbePose,
    fan: FanGeometry,
    physics: PhysicsParams,
    press: PressConfig,
    synth: SynthesisConfig,
    lut,
    seed: int,
) -> UsFrame:
    """Run the full slice -> press -> propagate -> blend -> convert chain."""
    rows, cols, sp = _rect_slice_shape(fan)
    center_col = (cols - 1) / 2.0
    geom = pose_to_slice_geometry(pose, rows, cols, (sp, sp), lateral_offset_px=-center_col)
    hu_rect = sample_slice(vol, geom)

    if press.enabled and press.push_depth_px > 0:
        contact = ProbeContact(
            probe_radius_mm=fan.probe_radius_mm,
            contact_center_px=(0.0, center_col),
            push_target_px=(press.push_depth_px, center_col),
            r_max_px=press.r_max_px,
            strength_f=press.strength_f,
            hu_weight_enabled=press.hu_weight_enabled,
        )
        hu_rect, _ = apply_press(hu_rect, contact)
        mask_rect = squeeze_band_mask(hu_rect.shape, (sp, sp), contact)
    else:
        mask_rect = np.zeros(hu_rect.shape, dtype=bool)

    hu_fan = resample_rect_to_fan(hu_rect, fan, (sp, sp), center_col, order=1, cval=AIR_HU)
    mask_fan = (
        resample_rect_to_fan(
            mask_rect.astype(float), fan, (sp, sp), center_col, order=0, cval=0.0
        )
        > 0.5
    )

    slc = build_acoustic_slice(hu_fan, lut, mask_fan, geometry=fan)
    prop = propagate(slc, fan, physics)
    enh = elevational_enhancement(
        vol, pose, fan, synth.thickness_mm, synth.n_planes, lut
    )
    noise = radial_noise(fan, seed)
    tgc = default_tgc(fan, synth.tgc_db_per_cm)
    fan_img = blend(
        prop,
        enh * prop.transmission,
        noise,
        gains=(synth.gain_echo, synth.gain_enhancement),
        tgc=tgc,
    )
    label_fan = make_label(hu_fan, synth.bone_threshold_hu, synth.label_thickness)
    image = quantize(scan_convert(fan_img, fan, synth.out_size, order=1))
    label = scan_convert(label_fan.astype(float), fan, synth.out_size, order=0) > 0.5
    return UsFrame(image=image, label=label, pose=pose, geometry=fan, maps=prop, seed=seed)


def poses_from_scan_path(cfg: SimConfig):
    """Materialize the probe pose sequence declared in the config."""
    scan = cfg.scan_path
    mode = scan["mode"]
    if mode == "poses":
        return [ProbePose.from_json_dict(p) for p in scan["poses"]]

    mesh = load_obj(os.path.join(cfg.base_dir, scan["mesh"]))
    if "clip_aabb" in scan:
        lo, hi = scan["clip_aabb"]
        mesh = clip_region(mesh, (np.asarray(lo), np.asarray(hi)))
    count = int(scan["count"])
    poses = []
    if mode == "free":
        state = surface_state_at(mesh, int(scan.get("start_triangle", 0)))
        du = float(scan.get("du_mm", 1.0))
        dv = float(scan.get("dv_mm", 0.0))
        state, pose = move_free(mesh, state, 0.0, 0.0)
        poses.append(pose)
        for _ in range(count - 1):
            state, pose = move_free(mesh, state, du, dv)
            poses.append(pose)
    else:  # curves
        curves = slice_curves(
            mesh,
            np.asarray(scan.get("forward_dir", [0.0, 1.0, 0.0]), dtype=float),
            float(scan.get("spacing_mm", 5.0)),
        )
        curve = curves[int(scan.get("curve_index", 0))]
        t = float(scan.get("start_t_mm", 0.0))
        step = float(scan.get("step_mm", 1.0))
        for i in range(count):
            t, pose = move_on_curve(curve, t, step if i else 0.0)
            poses.append(pose)
    return poses


def _frame_paths(out_dir: str, i: int):
    return (
        os.path.join(out_dir, f"frame_{i:06d}.png"),
        os.path.join(out_dir, f"label_{i:06d}.png"),
        os.path.join(out_dir, f"frame_{i:06d}.json"),
    )


def _write_frame(frame: UsFrame, cfg_hash: str, paths) -> list:
    img_path, label_path, meta_path = paths
    Image.fromarray(frame.image, mode="L").save(img_path)
    Image.fromarray((frame.label * 255).astype(np.uint8), mode="L").save(label_path)
    meta = {
        "pose": frame.pose.to_json_dict(),
        "seed": frame.seed,
        "geom": {
            "num_scanlines": frame.geometry.num_scanlines,
            "samples_per_line": frame.geometry.samples_per_line,
            "radial_step_mm": frame.geometry.radial_step_mm,
            "fov_angle_deg": frame.geometry.fov_angle_deg,
            "probe_radius_mm": frame.geometry.probe_radius_mm,
            "frequency_mhz": frame.geometry.frequency_mhz,
        },
        "config_hash": cfg_hash,
    }
    with open(meta_path, "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
    return [img_path, label_path, meta_path]


_WORKER_STATE = {}


def _worker_init(cfg: SimConfig, poses):
    _WORKER_STATE["cfg"] = cfg
    _WORKER_STATE["vol"] = load_volume(cfg.volume_path)
    _WORKER_STATE["poses"] = poses


def _worker_frame(i: int):
    cfg = _WORKER_STATE["cfg"]
    frame = synthesize_frame(
        _WORKER_STATE["vol"],
        _WORKER_STATE["poses"][i],
        cfg.fan,
        cfg.physics,
        cfg.press,
        cfg.synthesis,
        cfg.lut,
        frame_seed(cfg.global_seed, i),
    )
    return i, _write_frame(frame, cfg.config_hash(), _frame_paths(cfg.output_dir, i))


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def run_simulate(cfg: SimConfig, workers: int = 1) -> dict:
    """Generate the full dataset; manifest.json is written last."""
    poses = poses_from_scan_path(cfg)
    os.makedirs(cfg.output_dir, exist_ok=True)
    indices = list(range(len(poses)))
    written = {}
    if workers <= 1:
        _worker_init(cfg, poses)
        for i in indices:
            _, files = _worker_frame(i)
            written[i] = files
        _WORKER_STATE.clear()
    else:
        ctx = mp.get_context("spawn")
        with ctx.Pool(workers, initializer=_worker_init, initargs=(cfg, poses)) as pool:
            for i, files in pool.map(_worker_frame, indices):
                written[i] = files
    manifest = {
        "n_frames": len(poses),
        "config_hash": cfg.config_hash(),
        "global_seed": cfg.global_seed,
        "files": {
            os.path.basename(p): _sha256(p)
            for i in sorted(written)
            for p in written[i]
        },
    }
    with open(os.path.join(cfg.output_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return manifest


def press_preview(cfg: SimConfig, pose_index: int, out_path: str) -> str:
    """Side-by-side PNG of the unwarped and pressed HU slice."""
    poses = poses_from_scan_path(cfg)
    if not (0 <= pose_index < len(poses)):
        raise ConfigError(f"pose_index {pose_index} out of range (0..{len(poses)-1})")
    vol = load_volume(cfg.volume_path)
    fan = cfg.fan
    rows, cols, sp = _rect_slice_shape(fan)
    center_col = (cols - 1) / 2.0
    geom = pose_to_slice_geometry(
        poses[pose_index], rows, cols, (sp, sp), lateral_offset_px=-center_col
    )
    hu = sample_slice(vol, geom)
    press = cfg.press
    if press.push_depth_px > 0:
        contact = ProbeContact(
            probe_radius_mm=fan.probe_radius_mm,
            contact_center_px=(0.0, center_col),
            push_target_px=(press.push_depth_px, center_col),
            r_max_px=press.r_max_px,
            strength_f=press.strength_f,
            hu_weight_enabled=press.hu_weight_enabled,
        )
        warped, _ = apply_press(hu, contact)
    else:
        warped = hu.copy()

    def to8(f):
        return np.clip((f + 1024.0) / (1024.0 + 1200.0) * 255.0, 0, 255).astype(np.uint8)

    panel = np.concatenate([to8(hu), to8(warped)], axis=1)
    Image.fromarray(panel, mode="L").save(out_path)
    return out_path
