"""Probe movement constrained to the patient surface.

Two modes: a 2-DOF geodesic walk over the clipped skin mesh, and a 1-DOF
walk along polylines obtained by slicing the mesh with parallel planes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import EmptyRegion, LeftRegion
from .mesh import SurfaceMesh
from .rigid import rotation_about_axis
from .volume import SliceGeometry

_EPS = 1e-12


@dataclass
class ProbePose:
    """Probe placement: z-axis points into the tissue, x-axis is lateral."""

    position_mm: np.ndarray
    quaternion: np.ndarray  # (x, y, z, w), unit

    def __post_init__(self):
        self.position_mm = np.asarray(self.position_mm, dtype=float).reshape(3)
        q = np.asarray(self.quaternion, dtype=float).reshape(4)
        n = np.linalg.norm(q)
        if abs(n - 1.0) > 1e-6:
            raise ValueError("quaternion must be unit length")
        self.quaternion = q / n

    @staticmethod
    def identity() -> "ProbePose":
        return ProbePose(np.zeros(3), np.array([0.0, 0.0, 0.0, 1.0]))

    @staticmethod
    def from_axes(position, x_axis, z_axis) -> "ProbePose":
        """Build from the lateral (x) and depth (z) axes; y completes the frame."""
        z = np.asarray(z_axis, dtype=float)
        z = z / np.linalg.norm(z)
        x = np.asarray(x_axis, dtype=float)
        x = x - (x @ z) * z
        nx = np.linalg.norm(x)
        if nx < 1e-9:
            raise ValueError("x axis parallel to z axis")
        x = x / nx
        y = np.cross(z, x)
        R = np.column_stack([x, y, z])
        return ProbePose(position, Rotation.from_matrix(R).as_quat())

    @property
    def rotation_matrix(self) -> np.ndarray:
        return Rotation.from_quat(self.quaternion).as_matrix()

    @property
    def x_axis(self) -> np.ndarray:
        return self.rotation_matrix[:, 0]

    @property
    def y_axis(self) -> np.ndarray:
        return self.rotation_matrix[:, 1]

    @property
    def z_axis(self) -> np.ndarray:
        return self.rotation_matrix[:, 2]

    def to_json_dict(self) -> dict:
        return {
            "position_mm": [float(v) for v in self.position_mm],
            "quaternion_xyzw": [float(v) for v in self.quaternion],
        }

    @staticmethod
    def from_json_dict(d: dict) -> "ProbePose":
        return ProbePose(np.asarray(d["position_mm"]), np.asarray(d["quaternion_xyzw"]))


@dataclass
class SurfaceState:
    """Position on the mesh plus a heading in the triangle tangent frame."""

    triangle_index: int
    barycentric: np.ndarray  # (3,), nonnegative, sums to 1
    heading: np.ndarray  # (2,), unit, in the triangle's local 2D frame

    def __post_init__(self):
        self.barycentric = np.asarray(self.barycentric, dtype=float).reshape(3)
        if abs(self.barycentric.sum() - 1.0) > 1e-9 or np.any(self.barycentric < -1e-12):
            raise ValueError("barycentric coordinates must be nonnegative and sum to 1")
        h = np.asarray(self.heading, dtype=float).reshape(2)
        self.heading = h / np.linalg.norm(h)


def _triangle_frame(mesh: SurfaceMesh, ti: int):
    """Orthonormal (e1, e2, n) frame of triangle ti."""
    a, b, c = mesh.vertices[mesh.triangles[ti]]
    e1 = b - a
    e1 = e1 / np.linalg.norm(e1)
    n = np.cross(b - a, c - a)
    n = n / np.linalg.norm(n)
    e2 = np.cross(n, e1)
    return e1, e2, n


def _point_from_state(mesh: SurfaceMesh, state: SurfaceState) -> np.ndarray:
    tri = mesh.triangles[state.triangle_index]
    return state.barycentric @ mesh.vertices[tri]


def _barycentric(mesh: SurfaceMesh, ti: int, p: np.ndarray) -> np.ndarray:
    a, b, c = mesh.vertices[mesh.triangles[ti]]
    v0, v1, v2 = b - a, c - a, p - a
    d00, d01, d11 = v0 @ v0, v0 @ v1, v1 @ v1
    d20, d21 = v2 @ v0, v2 @ v1
    denom = d00 * d11 - d01 * d01
    v = (d11 * d20 - d01 * d21) / denom
    w = (d00 * d21 - d01 * d20) / denom
    return np.array([1.0 - v - w, v, w])


def surface_state_at(mesh: SurfaceMesh, triangle_index: int, barycentric=None, heading=None) -> SurfaceState:
    """Convenience constructor with centroid / first-edge defaults."""
    if barycentric is None:
        barycentric = np.full(3, 1.0 / 3.0)
    if heading is None:
        heading = np.array([1.0, 0.0])
    return SurfaceState(triangle_index, barycentric, heading)


def interpolated_normal(mesh: SurfaceMesh, state: SurfaceState) -> np.ndarray:
    tri = mesh.triangles[state.triangle_index]
    n = state.barycentric @ mesh.normals[tri]
    return n / np.linalg.norm(n)


def _pose_from_state(mesh: SurfaceMesh, state: SurfaceState) -> ProbePose:
    e1, e2, n_tri = _triangle_frame(mesh, state.triangle_index)
    heading3 = state.heading[0] * e1 + state.heading[1] * e2
    n = interpolated_normal(mesh, state)
    z = -n  # into the tissue
    return ProbePose.from_axes(_point_from_state(mesh, state), heading3, z)


def move_free(mesh: SurfaceMesh, state: SurfaceState, du: float, dv: float):
    """Geodesic walk of (du, dv) mm in the heading frame; returns (state, pose).

    du advances along the heading, dv along normal x heading. The walk
    unfolds across triangle edges; leaving the clipped mesh raises LeftRegion.
    """
    dist = float(np.hypot(du, dv))
    if dist == 0.0:
        return state, _pose_from_state(mesh, state)

    adjacency = mesh.edge_adjacency()
    ti = state.triangle_index
    e1, e2, n = _triangle_frame(mesh, ti)
    heading3 = state.heading[0] * e1 + state.heading[1] * e2
    lateral3 = np.cross(n, heading3)
    d = du * heading3 + dv * lateral3
    d = d / np.linalg.norm(d)
    p = _point_from_state(mesh, state)
    remaining = dist

    for _ in range(10000):
        tri = mesh.triangles[ti]
        a, b, c = mesh.vertices[tri]
        _, _, n = _triangle_frame(mesh, ti)
        # keep direction in the triangle plane (numerical drift after folding)
        d = d - (d @ n) * n
        d = d / np.linalg.norm(d)
        # earliest edge crossing of the ray p + t d, t > eps
        t_exit, exit_edge = np.inf, None
        for k, (i0, i1) in enumerate(((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0]))):
            q0, q1 = mesh.vertices[i0], mesh.vertices[i1]
            edge = q1 - q0
            # outward edge normal in the triangle plane
            en = np.cross(edge, n)
            en = en / (np.linalg.norm(en) + _EPS)
            denom = d @ en
            if denom <= _EPS:
                continue  # moving away from or parallel to this edge
            t = ((q0 - p) @ en) / denom
            if -1e-9 < t < t_exit:
                t_exit, exit_edge = max(t, 0.0), (int(i0), int(i1))
        if remaining <= t_exit:
            p = p + remaining * d
            break
        if exit_edge is None:
            raise LeftRegion("geodesic walk lost containment")
        p = p + t_exit * d
        remaining -= t_exit
        key = tuple(sorted(exit_edge))
        neighbors = [t for t in adjacency.get(key, []) if t != ti]
        if not neighbors:
            raise LeftRegion("walk crossed the boundary of the clipped region")
        tj = neighbors[0]
        # fold the direction into the neighbor plane by rotating about the edge
        n_next = mesh.triangle_normal(tj)
        axis = np.cross(n, n_next)
        sin_a = np.linalg.norm(axis)
        cos_a = float(np.clip(n @ n_next, -1.0, 1.0))
        if sin_a > 1e-12:
            R = rotation_about_axis(axis, np.arctan2(sin_a, cos_a))
            d = R @ d
        ti = tj
    else:
        raise LeftRegion("geodesic walk did not terminate")

    bary = np.clip(_barycentric(mesh, ti, p), 0.0, None)
    bary = bary / bary.sum()
    e1, e2, n = _triangle_frame(mesh, ti)
    # new heading: walked direction rotated back by the lateral offset angle,
    # so the heading frame stays aligned with the direction of du
    ang = np.arctan2(dv, du)
    d_in_plane = d - (d @ n) * n
    d_in_plane = d_in_plane / np.linalg.norm(d_in_plane)
    h3 = rotation_about_axis(n, -ang) @ d_in_plane
    heading2 = np.array([h3 @ e1, h3 @ e2])
    new_state = SurfaceState(ti, bary, heading2)
    return new_state, _pose_from_state(mesh, new_state)


@dataclass
class Polyline3:
    """3D polyline with per-vertex surface normals, parameterized by arc length."""

    points: np.ndarray  # (N, 3)
    normals: np.ndarray  # (N, 3)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.normals = np.asarray(self.normals, dtype=float).reshape(-1, 3)
        seg = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        self.cum_length = np.concatenate([[0.0], np.cumsum(seg)])

    @property
    def length(self) -> float:
        return float(self.cum_length[-1])

    @property
    def is_closed(self) -> bool:
        return bool(np.linalg.norm(self.points[0] - self.points[-1]) < 1e-9)

    def _locate(self, t: float):
        t = float(np.clip(t, 0.0, self.length))
        i = int(np.searchsorted(self.cum_length, t, side="right") - 1)
        i = min(i, len(self.points) - 2)
        seg_len = self.cum_length[i + 1] - self.cum_length[i]
        frac = 0.0 if seg_len == 0 else (t - self.cum_length[i]) / seg_len
        return i, frac

    def point_at(self, t: float) -> np.ndarray:
        i, frac = self._locate(t)
        return (1 - frac) * self.points[i] + frac * self.points[i + 1]

    def tangent_at(self, t: float) -> np.ndarray:
        i, _ = self._locate(t)
        d = self.points[i + 1] - self.points[i]
        return d / np.linalg.norm(d)

    def normal_at(self, t: float) -> np.ndarray:
        i, frac = self._locate(t)
        n = (1 - frac) * self.normals[i] + frac * self.normals[i + 1]
        return n / np.linalg.norm(n)


def slice_curves(mesh: SurfaceMesh, forward_dir, spacing_mm: float):
    """Intersect the mesh with parallel planes spaced along forward_dir."""
    if spacing_mm <= 0:
        raise ValueError("spacing must be positive")
    fwd = np.asarray(forward_dir, dtype=float)
    fwd = fwd / np.linalg.norm(fwd)
    proj = mesh.vertices @ fwd
    lo, hi = float(proj.min()), float(proj.max())
    offsets = np.arange(lo + 0.5 * spacing_mm, hi, spacing_mm)
    curves = []
    for off in offsets:
        curves.extend(_plane_section(mesh, fwd, off, proj))
    if not curves:
        raise EmptyRegion("no slicing plane intersects the mesh")
    return curves


def _plane_section(mesh: SurfaceMesh, fwd, offset, proj):
    """Polylines of the mesh section at plane {p : p.fwd = offset}."""
    sd = proj - offset  # signed distance per vertex
    segments = []
    for tri in mesh.triangles:
        pts = []
        for k in range(3):
            i0, i1 = int(tri[k]), int(tri[(k + 1) % 3])
            d0, d1 = sd[i0], sd[i1]
            if (d0 > 0) == (d1 > 0):
                continue
            frac = d0 / (d0 - d1)
            p = (1 - frac) * mesh.vertices[i0] + frac * mesh.vertices[i1]
            n = (1 - frac) * mesh.normals[i0] + frac * mesh.normals[i1]
            pts.append((p, n / np.linalg.norm(n)))
        if len(pts) == 2:
            segments.append(pts)
    # chain segments into polylines by matching endpoints
    def key(p):
        return tuple(np.round(p, 6))

    endpoints: dict = {}
    for si, seg in enumerate(segments):
        for end in (0, 1):
            endpoints.setdefault(key(seg[end][0]), []).append((si, end))
    used = [False] * len(segments)
    polylines = []
    for start in range(len(segments)):
        if used[start]:
            continue
        used[start] = True
        chain = [segments[start][0], segments[start][1]]
        # extend forward then backward
        for direction in (1, 0):
            while True:
                k = key(chain[-1 if direction else 0][0])
                candidates = [
                    (si, e) for (si, e) in endpoints.get(k, []) if not used[si]
                ]
                if not candidates:
                    break
                si, e = candidates[0]
                used[si] = True
                nxt = segments[si][1 - e]
                if direction:
                    chain.append(nxt)
                else:
                    chain.insert(0, nxt)
        if len(chain) >= 2:
            polylines.append(
                Polyline3(
                    np.array([p for p, _ in chain]), np.array([n for _, n in chain])
                )
            )
    return polylines


def move_on_curve(curve: Polyline3, t: float, dt: float, roll_deg: float = 0.0):
    """Advance along a sliced curve by dt mm (clamped); returns (t', pose)."""
    t_new = float(np.clip(t + dt, 0.0, curve.length))
    if curve.is_closed:
        t_new = float(np.mod(t + dt, curve.length))
    pos = curve.point_at(t_new)
    tangent = curve.tangent_at(t_new)
    z = -curve.normal_at(t_new)
    if abs(roll_deg) > 0:
        tangent = rotation_about_axis(z, np.deg2rad(roll_deg)) @ tangent
    return t_new, ProbePose.from_axes(pos, tangent, z)


def pose_to_slice_geometry(
    pose: ProbePose,
    rows: int,
    cols: int,
    pixel_spacing_mm,
    lateral_offset_px: float = 0.0,
) -> SliceGeometry:
    """Imaging plane of a pose: u = lateral (x) axis, v = depth (z) axis.

    plane_origin is the probe apex (pose position) shifted laterally by
    lateral_offset_px pixels; pass -(cols-1)/2 to center the image.
    """
    du, dv = pixel_spacing_mm
    u = pose.x_axis
    v = pose.z_axis
    origin = pose.position_mm + lateral_offset_px * du * u
    return SliceGeometry(rows, cols, (du, dv), origin, u, v)
