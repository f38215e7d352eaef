"""CT volume container, raw+sidecar I/O, and oblique slice sampling.

Voxels are stored internally as a (z, y, x) float32 array in Hounsfield
units; on disk they are little-endian int16, x fastest-varying.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import map_coordinates

from .errors import (
    MissingSidecar,
    NonOrthonormalDirection,
    NonPositiveSpacing,
    SizeMismatch,
)

HU_MIN = -1024
HU_MAX = 4096
AIR_HU = -1024.0


@dataclass
class CtVolume:
    """Immutable CT volume with physical placement in world mm."""

    dims: tuple  # (nx, ny, nz)
    spacing_mm: np.ndarray  # (3,)
    origin_mm: np.ndarray  # (3,)
    direction: np.ndarray  # (3,3), columns are the world directions of +x,+y,+z index axes
    voxels: np.ndarray  # (nz, ny, nx) float32 HU
    clamped_count: int = 0

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        if len(self.dims) != 3 or any(d < 2 for d in self.dims):
            raise ValueError("dims must be 3 integers >= 2")
        self.spacing_mm = np.asarray(self.spacing_mm, dtype=float).reshape(3)
        if np.any(self.spacing_mm <= 0):
            raise NonPositiveSpacing(f"spacing must be positive, got {self.spacing_mm}")
        self.origin_mm = np.asarray(self.origin_mm, dtype=float).reshape(3)
        self.direction = np.asarray(self.direction, dtype=float).reshape(3, 3)
        if not np.allclose(self.direction.T @ self.direction, np.eye(3), atol=1e-6):
            raise NonOrthonormalDirection("direction matrix is not orthonormal")
        nx, ny, nz = self.dims
        self.voxels = np.asarray(self.voxels, dtype=np.float32).reshape(nz, ny, nx)
        self.voxels.setflags(write=False)

    def world_to_index(self, p_mm: np.ndarray) -> np.ndarray:
        """Continuous (x, y, z) voxel index of world point(s)."""
        p = np.atleast_2d(np.asarray(p_mm, dtype=float))
        local = (p - self.origin_mm) @ self.direction  # D^T (p - o)
        return local / self.spacing_mm

    def index_to_world(self, idx: np.ndarray) -> np.ndarray:
        i = np.atleast_2d(np.asarray(idx, dtype=float))
        return (i * self.spacing_mm) @ self.direction.T + self.origin_mm


@dataclass
class SliceGeometry:
    """Rectangular sampling plane: rows along v, cols along u, in world mm."""

    rows: int
    cols: int
    pixel_spacing_mm: tuple  # (du_mm, dv_mm)
    plane_origin_mm: np.ndarray
    u: np.ndarray  # in-plane column direction, unit
    v: np.ndarray  # in-plane row direction, unit

    def __post_init__(self):
        self.rows = int(self.rows)
        self.cols = int(self.cols)
        self.plane_origin_mm = np.asarray(self.plane_origin_mm, dtype=float).reshape(3)
        self.u = np.asarray(self.u, dtype=float).reshape(3)
        self.v = np.asarray(self.v, dtype=float).reshape(3)
        for name, vec in (("u", self.u), ("v", self.v)):
            if abs(np.linalg.norm(vec) - 1.0) > 1e-9:
                raise ValueError(f"{name} axis must be unit length")
        if abs(float(self.u @ self.v)) > 1e-9:
            raise ValueError("u and v must be orthogonal")

    @property
    def normal(self) -> np.ndarray:
        return np.cross(self.u, self.v)

    def pixel_to_world(self, rows, cols) -> np.ndarray:
        """World positions of (row, col) pixel coordinates (broadcastable)."""
        r = np.asarray(rows, dtype=float)
        c = np.asarray(cols, dtype=float)
        du, dv = self.pixel_spacing_mm
        return (
            self.plane_origin_mm
            + c[..., None] * du * self.u
            + r[..., None] * dv * self.v
        )


def save_volume(vol: CtVolume, path: str) -> None:
    """Write the `.ctvol.json` sidecar plus its raw int16 payload."""
    raw_name = os.path.basename(path).replace(".ctvol.json", "") + ".raw"
    sidecar = {
        "dims": list(vol.dims),
        "spacing_mm": [float(s) for s in vol.spacing_mm],
        "origin_mm": [float(o) for o in vol.origin_mm],
        "direction": [float(d) for d in vol.direction.reshape(-1)],
        "raw": raw_name,
    }
    raw = np.clip(np.rint(vol.voxels), HU_MIN, HU_MAX).astype("<i2")
    raw.tofile(os.path.join(os.path.dirname(path) or ".", raw_name))
    with open(path, "w") as fh:
        json.dump(sidecar, fh, indent=1)


def load_volume(path: str) -> CtVolume:
    """Load a volume from a `.ctvol.json` sidecar; HU clamped to [-1024, 4096]."""
    if not os.path.isfile(path):
        raise MissingSidecar(path)
    with open(path) as fh:
        meta = json.load(fh)
    dims = tuple(int(d) for d in meta["dims"])
    raw_path = os.path.join(os.path.dirname(path) or ".", meta["raw"])
    if not os.path.isfile(raw_path):
        raise MissingSidecar(f"raw file not found: {raw_path}")
    expected = 2 * dims[0] * dims[1] * dims[2]
    actual = os.path.getsize(raw_path)
    if actual != expected:
        raise SizeMismatch(f"raw file is {actual} bytes, expected {expected}")
    raw = np.fromfile(raw_path, dtype="<i2").astype(np.float32)
    clamped = int(np.count_nonzero((raw < HU_MIN) | (raw > HU_MAX)))
    raw = np.clip(raw, HU_MIN, HU_MAX)
    return CtVolume(
        dims=dims,
        spacing_mm=meta["spacing_mm"],
        origin_mm=meta["origin_mm"],
        direction=np.asarray(meta["direction"], dtype=float).reshape(3, 3),
        voxels=raw.reshape(dims[2], dims[1], dims[0]),
        clamped_count=clamped,
    )


def hu_at(vol: CtVolume, p_mm) -> float:
    """Trilinear HU sample at world point(s); outside the volume -> -1024."""
    idx = vol.world_to_index(p_mm)  # (N, 3) in (x, y, z) order
    coords = idx[:, ::-1].T  # map_coordinates wants (z, y, x)
    out = map_coordinates(
        vol.voxels, coords, order=1, mode="constant", cval=AIR_HU, prefilter=False
    )
    return float(out[0]) if np.asarray(p_mm).ndim == 1 else out


def sample_slice(vol: CtVolume, geom: SliceGeometry) -> np.ndarray:
    """Sample a rows x cols HU field along an arbitrary plane."""
    r, c = np.meshgrid(np.arange(geom.rows), np.arange(geom.cols), indexing="ij")
    pts = geom.pixel_to_world(r.ravel(), c.ravel())
    field = hu_at(vol, pts)
    return np.asarray(field, dtype=np.float32).reshape(geom.rows, geom.cols)
