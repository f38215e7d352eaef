"""Declarative simulation config: JSON with fail-fast validation.

All paths are resolved relative to the config file location. Unknown keys
anywhere in the document are errors.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .acoustics import AcousticLut
from .errors import ConfigError
from .propagation import FanGeometry, PhysicsParams

CONFIG_VERSION = 1

_TOP_KEYS = {
    "config_version",
    "volume",
    "scan_path",
    "probe",
    "physics",
    "press",
    "synthesis",
    "acoustic_lut",
    "output_dir",
    "global_seed",
}
_PROBE_KEYS = {
    "radius_mm",
    "fov_angle_deg",
    "num_scanlines",
    "samples_per_line",
    "radial_step_mm",
    "frequency_mhz",
}
_PHYSICS_KEYS = {"frequency_mhz", "scatter_gain", "squeeze_relief", "beer_alpha"}
_PRESS_KEYS = {"enabled", "strength_f", "r_max_px", "hu_weight_enabled", "push_depth_px"}
_SYNTH_KEYS = {
    "thickness_mm",
    "n_planes",
    "gain_echo",
    "gain_enhancement",
    "bone_threshold_hu",
    "label_thickness",
    "out_size",
    "tgc_db_per_cm",
}
_SCAN_KEYS = {
    "mode",
    "poses",
    "mesh",
    "count",
    "du_mm",
    "dv_mm",
    "start_triangle",
    "forward_dir",
    "spacing_mm",
    "curve_index",
    "step_mm",
    "start_t_mm",
    "clip_aabb",
}


def _check_keys(section: dict, allowed: set, where: str):
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


@dataclass
class PressConfig:
    enabled: bool = True
    strength_f: float = 1.0
    r_max_px: float = 120.0
    hu_weight_enabled: bool = False
    push_depth_px: float = 6.0


@dataclass
class SynthesisConfig:
    thickness_mm: float = 3.0
    n_planes: int = 5
    gain_echo: float = 1.0
    gain_enhancement: float = 1.0
    bone_threshold_hu: float = 250.0
    label_thickness: int = 2
    out_size: tuple = (256, 256)
    tgc_db_per_cm: float = 0.0


@dataclass
class SimConfig:
    volume_path: str
    scan_path: dict
    fan: FanGeometry
    physics: PhysicsParams
    press: PressConfig
    synthesis: SynthesisConfig
    lut: AcousticLut
    output_dir: str
    global_seed: int
    base_dir: str = "."

    def config_hash(self) -> str:
        # output_dir does not affect frame content, so it is not part of
        # the identity hash
        doc = {k: v for k, v in self.raw.items() if k != "output_dir"}
        blob = json.dumps(doc, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    raw: dict = field(default_factory=dict)


def load_config(path: str) -> SimConfig:
    """Parse and validate a simulation config file."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    base = os.path.dirname(os.path.abspath(path))
    return parse_config(doc, base)


def parse_config(doc: dict, base_dir: str = ".") -> SimConfig:
    _check_keys(doc, _TOP_KEYS, "config")
    if doc.get("config_version") != CONFIG_VERSION:
        raise ConfigError(f"config_version must be {CONFIG_VERSION}")
    for req in ("volume", "scan_path", "output_dir"):
        if req not in doc:
            raise ConfigError(f"missing required key: {req}")

    vol_path = os.path.join(base_dir, doc["volume"])
    if not os.path.isfile(vol_path):
        raise ConfigError(f"volume file not found: {vol_path}")

    scan = dict(doc["scan_path"])
    _check_keys(scan, _SCAN_KEYS, "scan_path")
    mode = scan.get("mode")
    if mode not in ("poses", "free", "curves"):
        raise ConfigError("scan_path.mode must be 'poses', 'free', or 'curves'")
    if mode == "poses":
        if not scan.get("poses"):
            raise ConfigError("scan_path.poses must be a non-empty list")
    else:
        if "mesh" not in scan:
            raise ConfigError(f"scan_path mode '{mode}' requires a mesh")
        mesh_path = os.path.join(base_dir, scan["mesh"])
        if not os.path.isfile(mesh_path):
            raise ConfigError(f"mesh file not found: {mesh_path}")
        if int(scan.get("count", 0)) <= 0:
            raise ConfigError("scan_path.count must be positive")

    probe = dict(doc.get("probe", {}))
    _check_keys(probe, _PROBE_KEYS, "probe")
    try:
        fan = FanGeometry(
            num_scanlines=int(probe.get("num_scanlines", 128)),
            samples_per_line=int(probe.get("samples_per_line", 256)),
            radial_step_mm=float(probe.get("radial_step_mm", 0.3)),
            fov_angle_deg=float(probe.get("fov_angle_deg", 60.0)),
            probe_radius_mm=float(probe.get("radius_mm", 60.0)),
            frequency_mhz=float(probe.get("frequency_mhz", 5.0)),
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e

    phys = dict(doc.get("physics", {}))
    _check_keys(phys, _PHYSICS_KEYS, "physics")
    try:
        physics = PhysicsParams(
            frequency_mhz=float(phys.get("frequency_mhz", fan.frequency_mhz)),
            scatter_gain=float(phys.get("scatter_gain", 0.1)),
            squeeze_relief=float(phys.get("squeeze_relief", 0.2)),
            beer_alpha=float(phys.get("beer_alpha", 1.0)),
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e

    press_doc = dict(doc.get("press", {}))
    _check_keys(press_doc, _PRESS_KEYS, "press")
    press = PressConfig(
        enabled=bool(press_doc.get("enabled", True)),
        strength_f=float(press_doc.get("strength_f", 1.0)),
        r_max_px=float(press_doc.get("r_max_px", 120.0)),
        hu_weight_enabled=bool(press_doc.get("hu_weight_enabled", False)),
        push_depth_px=float(press_doc.get("push_depth_px", 6.0)),
    )
    if press.strength_f <= 0 or press.r_max_px <= press.push_depth_px:
        raise ConfigError("press: need strength_f > 0 and r_max_px > push_depth_px")

    synth_doc = dict(doc.get("synthesis", {}))
    _check_keys(synth_doc, _SYNTH_KEYS, "synthesis")
    out_size = tuple(synth_doc.get("out_size", (256, 256)))
    if len(out_size) != 2 or min(out_size) <= 0:
        raise ConfigError("synthesis.out_size must be two positive integers")
    synthesis = SynthesisConfig(
        thickness_mm=float(synth_doc.get("thickness_mm", 3.0)),
        n_planes=int(synth_doc.get("n_planes", 5)),
        gain_echo=float(synth_doc.get("gain_echo", 1.0)),
        gain_enhancement=float(synth_doc.get("gain_enhancement", 1.0)),
        bone_threshold_hu=float(synth_doc.get("bone_threshold_hu", 250.0)),
        label_thickness=int(synth_doc.get("label_thickness", 2)),
        out_size=(int(out_size[0]), int(out_size[1])),
        tgc_db_per_cm=float(synth_doc.get("tgc_db_per_cm", 0.0)),
    )
    if synthesis.n_planes < 1 or synthesis.thickness_mm <= 0:
        raise ConfigError("synthesis: n_planes >= 1 and thickness_mm > 0 required")

    lut_doc = dict(doc.get("acoustic_lut", {}))
    _check_keys(lut_doc, {"impedance", "attenuation"}, "acoustic_lut")
    try:
        lut = AcousticLut.from_config(lut_doc)
    except ValueError as e:
        raise ConfigError(str(e)) from e

    return SimConfig(
        volume_path=vol_path,
        scan_path=scan,
        fan=fan,
        physics=physics,
        press=press,
        synthesis=synthesis,
        lut=lut,
        output_dir=os.path.join(base_dir, doc["output_dir"]),
        global_seed=int(doc.get("global_seed", 0)),
        base_dir=base_dir,
        raw=doc,
    )


def frame_seed(global_seed: int, frame_index: int) -> int:
    """Stable 64-bit per-frame seed, independent of worker scheduling."""
    state = np.random.SeedSequence([global_seed, frame_index]).generate_state(2)
    return int(state[0]) << 32 | int(state[1])
