"""Probe-pressure deformation of the sampled HU field.

The displacement field is a local translation warp: every pixel inside the
influence radius moves parallel to the push vector (m - c), scaled by a
squared falloff ratio, optionally stiffened per pixel by its HU value.
The printed source equation is dimensionally ambiguous; the adopted form
applies the squared ratio to (m - c) only (see README).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates


@dataclass(frozen=True)
class ProbeContact:
    """Contact parameters in slice pixel coordinates (row, col)."""

    probe_radius_mm: float
    contact_center_px: tuple  # c, on the image top line
    push_target_px: tuple     # m, probe apex
    r_max_px: float
    strength_f: float = 1.0
    hu_weight_enabled: bool = False

    def __post_init__(self):
        c = np.asarray(self.contact_center_px, dtype=float)
        m = np.asarray(self.push_target_px, dtype=float)
        if self.r_max_px <= np.linalg.norm(m - c):
            raise ValueError("r_max_px must exceed the push depth |m - c|")
        if self.strength_f <= 0:
            raise ValueError("strength_f must be positive")
        if self.probe_radius_mm <= 0:
            raise ValueError("probe_radius_mm must be positive")

    @property
    def push_vector(self) -> np.ndarray:
        return np.asarray(self.push_target_px, float) - np.asarray(self.contact_center_px, float)

    @property
    def push_depth_px(self) -> float:
        return float(np.linalg.norm(self.push_vector))


def hu_stiffness(hu):
    """Monotone stiffness weight, 1 at HU=0; harder tissue moves less."""
    return np.clip((np.asarray(hu, dtype=float) + 1000.0) / 1000.0, 0.1, 4.0)


def warp_displacement(x, contact: ProbeContact, hu=0.0) -> np.ndarray:
    """Displacement (row, col) of point(s) x under the probe push."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    c = np.asarray(contact.contact_center_px, dtype=float)
    mv = contact.push_vector
    d2 = float(mv @ mv)
    r2 = contact.r_max_px**2
    dist2 = np.sum((x - c) ** 2, axis=-1)
    alpha = hu_stiffness(hu) if contact.hu_weight_enabled else np.ones_like(dist2)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), dist2.shape)
    D = (100.0 / contact.strength_f) * alpha * d2
    num = r2 - dist2
    denom = num + D
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(denom > 0, num / denom, 0.0)
    ratio = np.where(dist2 >= r2, 0.0, ratio)
    if d2 == 0.0:
        ratio = np.zeros_like(ratio)
    u = ratio[..., None] ** 2 * mv
    return u[0] if single else u


def compute_uv_map(shape, contact: ProbeContact, hu_field=None) -> np.ndarray:
    """Backward-warp sample coordinates, shape (2, rows, cols) in (row, col)."""
    rows, cols = shape
    rr, cc = np.meshgrid(np.arange(rows, dtype=float), np.arange(cols, dtype=float), indexing="ij")
    pts = np.stack([rr.ravel(), cc.ravel()], axis=-1)
    hu = 0.0
    if contact.hu_weight_enabled and hu_field is not None:
        hu = np.asarray(hu_field, dtype=float).ravel()
    u = warp_displacement(pts, contact, hu)
    src = pts - u
    return src.T.reshape(2, rows, cols)


def apply_press(hu_field, contact: ProbeContact, uv_map=None):
    """Warp the HU field so tissue conforms to the pressed probe face.

    Returns (warped field, uv_map); pass the uv_map back in to skip
    recomputation when hu_weight_enabled is False.
    """
    field = np.asarray(hu_field, dtype=np.float32)
    if field.size == 0:
        raise ValueError("empty field")
    if uv_map is None:
        uv_map = compute_uv_map(field.shape, contact, field)
    if contact.push_depth_px == 0.0:
        return field.copy(), uv_map
    warped = map_coordinates(field, uv_map, order=1, mode="nearest", prefilter=False)
    return warped.astype(np.float32), uv_map


def squeeze_band_mask(shape, pixel_spacing_mm, contact: ProbeContact) -> np.ndarray:
    """Pixels between the probe-face arc and the concentric push-limit arc.

    The probe pivot (center of curvature) sits one probe radius behind the
    apex along the push direction; the band is the annulus of radial width
    equal to the push depth, measured from the probe face outward.
    """
    rows, cols = shape
    mask = np.zeros((rows, cols), dtype=bool)
    depth = contact.push_depth_px
    if depth == 0.0:
        return mask
    m = np.asarray(contact.push_target_px, dtype=float)
    push_dir = contact.push_vector / depth
    # pixel spacing along (row, col); radius converted to pixels isotropically
    sp = float(np.mean(pixel_spacing_mm))
    radius_px = contact.probe_radius_mm / sp
    pivot = m - radius_px * push_dir
    rr, cc = np.meshgrid(np.arange(rows, dtype=float), np.arange(cols, dtype=float), indexing="ij")
    dist = np.hypot(rr - pivot[0], cc - pivot[1])
    return (dist >= radius_px) & (dist <= radius_px + depth)
