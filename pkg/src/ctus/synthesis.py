"""B-mode frame assembly: elevational thick-stripe enhancement, radial
speckle, three-map blending, scan conversion, and ground-truth labels."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import convolve1d, map_coordinates

from .acoustics import AcousticLut, hu_to_impedance
from .errors import ShapeMismatch
from .kinematics import ProbePose
from .propagation import FanGeometry, PropagationResult
from .volume import AIR_HU, CtVolume, hu_at


@dataclass
class UsFrame:
    image: np.ndarray  # uint8 Cartesian B-mode
    label: np.ndarray  # bool, same shape
    pose: ProbePose
    geometry: FanGeometry
    maps: PropagationResult
    seed: int

    def __post_init__(self):
        if self.image.shape != self.label.shape:
            raise ShapeMismatch("image and label shapes differ")


def fan_world_points(
    vol_pose: ProbePose, geom: FanGeometry, elev_offset_mm: float = 0.0
) -> np.ndarray:
    """World positions of every fan-grid sample, shape (R, S, 3).

    The fan pivot sits one probe radius behind the apex along -z; scanlines
    spread laterally along the pose x-axis.
    """
    ex, ey, ez = vol_pose.x_axis, vol_pose.y_axis, vol_pose.z_axis
    apex = vol_pose.position_mm
    theta = geom.scanline_angles_rad  # (S,)
    rho = geom.radii_mm  # (R,)
    lat = rho[:, None] * np.sin(theta)[None, :]
    dep = rho[:, None] * np.cos(theta)[None, :] - geom.probe_radius_mm
    return (
        apex
        + elev_offset_mm * ey
        + lat[..., None] * ex
        + dep[..., None] * ez
    )


def sample_fan_hu(vol: CtVolume, pose: ProbePose, geom: FanGeometry, elev_offset_mm=0.0) -> np.ndarray:
    """HU sampled directly from the volume on the fan grid."""
    pts = fan_world_points(pose, geom, elev_offset_mm)
    return np.asarray(hu_at(vol, pts.reshape(-1, 3)), dtype=np.float32).reshape(geom.shape)


def resample_rect_to_fan(rect_field, geom: FanGeometry, pixel_spacing_mm, center_col: float, order: int = 1, cval: float = AIR_HU) -> np.ndarray:
    """Resample a rectangular slice image (rows = depth from apex) onto the fan.

    The rectangular image shares the fan's in-plane frame: row 0 is the probe
    apex depth, `center_col` is the centerline column.
    """
    du, dv = pixel_spacing_mm
    theta = geom.scanline_angles_rad
    rho = geom.radii_mm
    lat = rho[:, None] * np.sin(theta)[None, :]
    dep = rho[:, None] * np.cos(theta)[None, :] - geom.probe_radius_mm
    rows = dep / dv
    cols = lat / du + center_col
    return map_coordinates(
        np.asarray(rect_field, dtype=float),
        [rows, cols],
        order=order,
        mode="constant",
        cval=cval,
        prefilter=False,
    )


def elevational_enhancement(
    vol: CtVolume,
    pose: ProbePose,
    geom: FanGeometry,
    thickness_mm: float = 3.0,
    n_planes: int = 5,
    lut: AcousticLut = None,
) -> np.ndarray:
    """Accumulated impedance-gradient response over parallel elevational planes.

    Planes are offset symmetrically across the beam thickness and weighted
    inversely to their distance from the imaging plane.
    """
    if n_planes < 1 or thickness_mm <= 0:
        raise ValueError("n_planes >= 1 and thickness_mm > 0 required")
    if lut is None:
        lut = AcousticLut()
    offsets = (
        np.array([0.0])
        if n_planes == 1
        else np.linspace(-thickness_mm / 2.0, thickness_mm / 2.0, n_planes)
    )
    step = thickness_mm / n_planes
    weights = 1.0 / (1.0 + np.abs(offsets) / step)
    weights = weights / weights.sum()
    out = np.zeros(geom.shape)
    for off, w in zip(offsets, weights):
        hu = sample_fan_hu(vol, pose, geom, elev_offset_mm=float(off))
        z = np.asarray(hu_to_impedance(lut, hu))
        g_r, g_s = np.gradient(z)
        out += w * np.hypot(g_r, g_s)
    return out


def radial_noise(geom: FanGeometry, seed: int) -> np.ndarray:
    """Multiplicative speckle field, mean 1, low-pass filtered radially."""
    rng = np.random.default_rng(seed)
    ray = rng.rayleigh(scale=1.0, size=geom.shape)
    ray /= np.sqrt(np.pi / 2.0)  # Rayleigh mean for scale 1
    return convolve1d(ray, np.array([0.25, 0.5, 0.25]), axis=0, mode="nearest")


def default_tgc(geom: FanGeometry, slope_db_per_cm: float = 0.0) -> np.ndarray:
    """Column vector gain curve; flat (all ones) when slope is 0."""
    depth_cm = np.arange(geom.samples_per_line) * geom.radial_step_mm / 10.0
    return (10.0 ** (slope_db_per_cm * depth_cm / 20.0))[:, None]


def blend(prop: PropagationResult, enhancement, noise, gains=(1.0, 1.0), tgc=None) -> np.ndarray:
    """Fan-space intensity: clamp01((g_echo*echo + g_enh*enh) * noise * tgc)."""
    g_echo, g_enh = gains
    echo = np.asarray(prop.echo, dtype=float)
    enh = np.asarray(enhancement, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if echo.shape != enh.shape or echo.shape != noise.shape:
        raise ShapeMismatch("blend inputs must share the fan shape")
    out = (g_echo * echo + g_enh * enh) * noise
    if tgc is not None:
        out = out * tgc
    return np.clip(out, 0.0, 1.0)


def _cartesian_sample_coords(geom: FanGeometry, out_size):
    """Fan (row, col) sample coordinates for every Cartesian output pixel."""
    H, W = out_size
    half = np.deg2rad(geom.fov_angle_deg) / 2.0
    rho_max = geom.probe_radius_mm + (geom.samples_per_line - 1) * geom.radial_step_mm
    y0 = geom.probe_radius_mm * np.cos(half)
    height = rho_max - y0
    width = 2.0 * rho_max * np.sin(half)
    sy = height / H
    sx = width / W
    yy = y0 + (np.arange(H) + 0.5) * sy
    xx = (np.arange(W) + 0.5) * sx - width / 2.0
    X, Y = np.meshgrid(xx, yy)
    rho = np.hypot(X, Y)
    theta = np.arctan2(X, Y)
    rows = (rho - geom.probe_radius_mm) / geom.radial_step_mm
    ang_step = 2.0 * half / max(geom.num_scanlines - 1, 1)
    cols = (theta + half) / ang_step
    inside = (
        (rho >= geom.probe_radius_mm)
        & (rho <= rho_max)
        & (np.abs(theta) <= half)
    )
    return rows, cols, inside


def scan_convert(fan_field, geom: FanGeometry, out_size, order: int = 1) -> np.ndarray:
    """Fan -> Cartesian display resampling; outside-fan pixels are 0."""
    rows, cols, inside = _cartesian_sample_coords(geom, out_size)
    out = map_coordinates(
        np.asarray(fan_field, dtype=float),
        [rows, cols],
        order=order,
        mode="nearest",
        prefilter=False,
    )
    out[~inside] = 0.0
    return out


def fan_from_cartesian(cart_field, geom: FanGeometry, cart_size) -> np.ndarray:
    """Inverse of scan_convert (bilinear); used by resampling oracles."""
    H, W = cart_size
    half = np.deg2rad(geom.fov_angle_deg) / 2.0
    rho_max = geom.probe_radius_mm + (geom.samples_per_line - 1) * geom.radial_step_mm
    y0 = geom.probe_radius_mm * np.cos(half)
    sy = (rho_max - y0) / H
    sx = 2.0 * rho_max * np.sin(half) / W
    theta = geom.scanline_angles_rad
    rho = geom.radii_mm
    X = rho[:, None] * np.sin(theta)[None, :]
    Y = rho[:, None] * np.cos(theta)[None, :]
    rows = (Y - y0) / sy - 0.5
    cols = (X + rho_max * np.sin(half)) / sx - 0.5
    return map_coordinates(
        np.asarray(cart_field, dtype=float), [rows, cols], order=1, mode="nearest", prefilter=False
    )


def make_label(hu_fan, bone_threshold_hu: float = 250.0, label_thickness: int = 2) -> np.ndarray:
    """First bone crossing per scanline, extended label_thickness pixels deep."""
    hu = np.asarray(hu_fan, dtype=float)
    R, S = hu.shape
    label = np.zeros((R, S), dtype=bool)
    above = hu >= bone_threshold_hu
    has_bone = above.any(axis=0)
    first = above.argmax(axis=0)
    for s in np.flatnonzero(has_bone):
        r0 = first[s]
        label[r0 : r0 + label_thickness, s] = True
    return label


def quantize(img01) -> np.ndarray:
    """[0,1] float -> uint8, round half up."""
    return np.floor(np.clip(img01, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
