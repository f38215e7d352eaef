"""Triangle surface meshes: OBJ I/O, AABB clipping, skin extraction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyRegion
from .volume import CtVolume

SKIN_THRESHOLD_HU = -300.0


@dataclass
class SurfaceMesh:
    vertices: np.ndarray  # (N, 3) mm
    triangles: np.ndarray  # (M, 3) int
    normals: np.ndarray = None  # (N, 3) unit, computed if omitted

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=int).reshape(-1, 3)
        if self.triangles.size and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise ValueError("triangle index out of range")
        if self.normals is None:
            self.normals = vertex_normals(self.vertices, self.triangles)
        else:
            self.normals = np.asarray(self.normals, dtype=float).reshape(-1, 3)
            norms = np.linalg.norm(self.normals, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-6):
                raise ValueError("vertex normals must be unit length")

    def triangle_normal(self, ti: int) -> np.ndarray:
        a, b, c = self.vertices[self.triangles[ti]]
        n = np.cross(b - a, c - a)
        ln = np.linalg.norm(n)
        return n / ln if ln > 0 else np.array([0.0, 0.0, 1.0])

    def edge_adjacency(self) -> dict:
        """Map sorted vertex-pair edge -> list of incident triangle indices."""
        adj: dict = {}
        for ti, tri in enumerate(self.triangles):
            for k in range(3):
                e = tuple(sorted((int(tri[k]), int(tri[(k + 1) % 3]))))
                adj.setdefault(e, []).append(ti)
        return adj


def vertex_normals(vertices, triangles) -> np.ndarray:
    """Area-weighted vertex normals."""
    normals = np.zeros_like(vertices, dtype=float)
    tris = np.asarray(triangles, dtype=int)
    if tris.size:
        a = vertices[tris[:, 0]]
        b = vertices[tris[:, 1]]
        c = vertices[tris[:, 2]]
        fn = np.cross(b - a, c - a)  # magnitude = 2 * area
        for k in range(3):
            np.add.at(normals, tris[:, k], fn)
    lens = np.linalg.norm(normals, axis=1, keepdims=True)
    lens[lens == 0] = 1.0
    return normals / lens


def load_obj(path: str) -> SurfaceMesh:
    """Parse an ASCII OBJ restricted to v / vn / f records."""
    verts, vns, faces, face_vns = [], [], [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "vn":
                vns.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                vi, ni = [], []
                for tok in parts[1:]:
                    fields = tok.split("/")
                    vi.append(int(fields[0]) - 1)
                    if len(fields) == 3 and fields[2]:
                        ni.append(int(fields[2]) - 1)
                # fan-triangulate polygons
                for k in range(1, len(vi) - 1):
                    faces.append([vi[0], vi[k], vi[k + 1]])
                    if len(ni) == len(vi):
                        face_vns.append([ni[0], ni[k], ni[k + 1]])
    vertices = np.asarray(verts, dtype=float)
    normals = None
    if vns and len(face_vns) == len(faces):
        # average the per-corner normals onto vertices
        acc = np.zeros_like(vertices)
        vns_arr = np.asarray(vns, dtype=float)
        for tri, nrm in zip(faces, face_vns):
            for v, n in zip(tri, nrm):
                acc[v] += vns_arr[n]
        lens = np.linalg.norm(acc, axis=1, keepdims=True)
        lens[lens == 0] = 1.0
        normals = acc / lens
    return SurfaceMesh(vertices, np.asarray(faces, dtype=int), normals)


def save_obj(mesh: SurfaceMesh, path: str) -> None:
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for n in mesh.normals:
            fh.write(f"vn {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}\n")
        for t in mesh.triangles:
            fh.write(
                f"f {t[0]+1}//{t[0]+1} {t[1]+1}//{t[1]+1} {t[2]+1}//{t[2]+1}\n"
            )


def clip_region(mesh: SurfaceMesh, aabb) -> SurfaceMesh:
    """Sub-mesh of triangles whose vertices all lie inside the box.

    aabb: (min_xyz, max_xyz) in mm.
    """
    lo = np.asarray(aabb[0], dtype=float)
    hi = np.asarray(aabb[1], dtype=float)
    if np.any(hi <= lo):
        raise ValueError("degenerate bounding box")
    inside = np.all((mesh.vertices >= lo) & (mesh.vertices <= hi), axis=1)
    keep = np.all(inside[mesh.triangles], axis=1)
    if not np.any(keep):
        raise EmptyRegion("no triangle fully inside the clip box")
    tris = mesh.triangles[keep]
    used = np.unique(tris)
    remap = -np.ones(len(mesh.vertices), dtype=int)
    remap[used] = np.arange(len(used))
    return SurfaceMesh(mesh.vertices[used], remap[tris], mesh.normals[used])


def skin_mesh_from_volume(
    vol: CtVolume,
    threshold_hu: float = SKIN_THRESHOLD_HU,
    stride: int = 1,
) -> SurfaceMesh:
    """Height-field skin mesh by per-column first crossing from the volume top.

    Scans each (x, y) voxel column from the largest z index downward and
    records the first voxel at or above the threshold; grid cells whose four
    corners all have a crossing become two triangles.
    """
    nx, ny, nz = vol.dims
    vox = vol.voxels  # (z, y, x)
    xs = np.arange(0, nx, stride)
    ys = np.arange(0, ny, stride)
    height = np.full((len(ys), len(xs)), np.nan)
    above = vox >= threshold_hu
    for j, y in enumerate(ys):
        col = above[:, y, :][:, xs]  # (z, len(xs))
        hit = col[::-1].argmax(axis=0)  # first crossing from the top
        any_hit = col.any(axis=0)
        z_idx = nz - 1 - hit
        height[j, np.asarray(any_hit)] = z_idx[np.asarray(any_hit)]
    verts, vidx = [], -np.ones(height.shape, dtype=int)
    for j, y in enumerate(ys):
        for i, x in enumerate(xs):
            if np.isfinite(height[j, i]):
                vidx[j, i] = len(verts)
                verts.append(vol.index_to_world([x, y, height[j, i]]).reshape(3))
    tris = []
    for j in range(len(ys) - 1):
        for i in range(len(xs) - 1):
            q = [vidx[j, i], vidx[j, i + 1], vidx[j + 1, i + 1], vidx[j + 1, i]]
            if min(q) < 0:
                continue
            tris.append([q[0], q[1], q[2]])
            tris.append([q[0], q[2], q[3]])
    if not tris:
        raise EmptyRegion("no skin surface found above threshold")
    return SurfaceMesh(np.asarray(verts), np.asarray(tris, dtype=int))
