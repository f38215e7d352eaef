"""Point-cloud construction from labeled frames and CT-US rigid registration.

Refinement uses trimmed ICP: nearest neighbors via a k-d tree, the worst
residual fraction dropped each iteration, and the rigid update solved in
closed form (SVD / orthogonal Procrustes).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import label as cc_label
from scipy.spatial import cKDTree

from .errors import DegenerateCloud, EmptyMask, NoConvergence, NoPoints
from .kinematics import ProbePose
from .rigid import RigidTransform
from .volume import CtVolume


@dataclass
class PointCloud:
    points: np.ndarray  # (N, 3) mm
    frame_ids: np.ndarray = None  # optional per-point source frame

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point coordinates must be finite")
        if self.frame_ids is not None:
            self.frame_ids = np.asarray(self.frame_ids, dtype=int).reshape(-1)

    def __len__(self):
        return len(self.points)

    def transformed(self, T: RigidTransform) -> "PointCloud":
        return PointCloud(T.apply(self.points), self.frame_ids)


@dataclass
class ScrewPlan:
    entry_mm: np.ndarray
    tip_mm: np.ndarray
    axis: np.ndarray
    length_mm: float
    diameter_mm: float

    def __post_init__(self):
        self.entry_mm = np.asarray(self.entry_mm, dtype=float).reshape(3)
        self.tip_mm = np.asarray(self.tip_mm, dtype=float).reshape(3)
        a = np.asarray(self.axis, dtype=float).reshape(3)
        n = np.linalg.norm(a)
        if n == 0 or self.length_mm <= 0 or self.diameter_mm <= 0:
            raise ValueError("invalid screw plan")
        self.axis = a / n


def mask_to_contour(mask) -> np.ndarray:
    """Upper contour of the largest 8-connected component: (row, col) pairs."""
    m = np.asarray(mask, dtype=bool)
    if not m.any():
        raise EmptyMask("mask has no true pixel")
    labels, n = cc_label(m, structure=np.ones((3, 3), dtype=int))
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    comp = labels == sizes.argmax()
    out = []
    for c in np.flatnonzero(comp.any(axis=0)):
        out.append((int(comp[:, c].argmax()), int(c)))
    return np.asarray(out, dtype=int)


def frames_to_pointcloud(frames, calib: RigidTransform, pixel_spacing_mm) -> PointCloud:
    """Lift per-frame contours into world space via pose o calib.

    frames: iterable of (mask, ProbePose). Contour pixel (row, col) maps to
    image-plane mm coordinates (col*sx, row*sy, 0).
    """
    sx, sy = pixel_spacing_mm
    pts, ids = [], []
    for fid, (mask, pose) in enumerate(frames):
        try:
            contour = mask_to_contour(mask)
        except EmptyMask:
            continue
        plane = np.column_stack(
            [contour[:, 1] * sx, contour[:, 0] * sy, np.zeros(len(contour))]
        )
        pose_T = RigidTransform(pose.rotation_matrix, pose.position_mm)
        world = pose_T.compose(calib).apply(plane)
        pts.append(world)
        ids.extend([fid] * len(world))
    if not pts:
        raise NoPoints("no frame produced contour points")
    return PointCloud(np.vstack(pts), np.asarray(ids))


def ct_surface_cloud(
    vol: CtVolume, bone_threshold_hu: float = 250.0, stride: int = 1
) -> PointCloud:
    """CT-side bone surface: per-(x, y) column first crossing from the top.

    Mirrors the first-crossing rule used for frame labels so both clouds
    describe the same surface family. View direction is the volume -z axis.
    """
    nx, ny, nz = vol.dims
    above = vol.voxels >= bone_threshold_hu  # (z, y, x)
    pts = []
    for y in range(0, ny, stride):
        col = above[:, y, :]
        hit = col[::-1].argmax(axis=0)
        any_hit = col.any(axis=0)
        for x in range(0, nx, stride):
            if any_hit[x]:
                z = nz - 1 - hit[x]
                pts.append(vol.index_to_world([x, y, z]).reshape(3))
    if not pts:
        raise NoPoints("no voxel above bone threshold")
    return PointCloud(np.asarray(pts))


def _check_cloud(cloud: PointCloud, min_points: int = 3):
    if len(cloud) < min_points:
        raise DegenerateCloud(f"cloud has {len(cloud)} points, need {min_points}")
    centered = cloud.points - cloud.points.mean(axis=0)
    if np.linalg.matrix_rank(centered, tol=1e-9) < 2:
        raise DegenerateCloud("points are collinear")


def _trimmed_subset(points: np.ndarray, trim_fraction: float) -> np.ndarray:
    """Drop the trim_fraction of points farthest from the per-axis median."""
    if trim_fraction <= 0:
        return points
    d = np.linalg.norm(points - np.median(points, axis=0), axis=1)
    return points[d <= np.quantile(d, 1.0 - trim_fraction)]


def coarse_align(
    src: PointCloud, dst: PointCloud, trim_fraction: float = 0.0
) -> RigidTransform:
    """Centroid + principal-axes alignment, disambiguated over the 4 proper flips.

    With trim_fraction > 0 the statistics are computed on the points closest
    to each cloud's median, which keeps gross outliers from biasing the axes.
    """
    _check_cloud(src)
    _check_cloud(dst)
    sp = _trimmed_subset(src.points, trim_fraction)
    dp = _trimmed_subset(dst.points, trim_fraction)
    cs = sp.mean(axis=0)
    cd = dp.mean(axis=0)
    Us = _principal_axes(sp - cs)
    Ud = _principal_axes(dp - cd)
    tree = cKDTree(dp)
    best = None
    for fx, fy in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
        F = np.diag([fx, fy, fx * fy])  # proper rotations only
        R = Ud @ F @ Us.T
        t = cd - R @ cs
        T = RigidTransform(R, t)
        d, _ = tree.query(T.apply(sp))
        if trim_fraction > 0:
            d = np.sort(d)[: max(3, int(len(d) * (1.0 - trim_fraction)))]
        rms = float(np.sqrt(np.mean(d**2)))
        if best is None or rms < best[0]:
            best = (rms, T)
    return best[1]


def _principal_axes(centered: np.ndarray) -> np.ndarray:
    cov = centered.T @ centered
    _, vecs = np.linalg.eigh(cov)
    U = vecs[:, ::-1]  # descending variance
    if np.linalg.det(U) < 0:
        U[:, 2] = -U[:, 2]
    return U


def _procrustes(src_pts: np.ndarray, dst_pts: np.ndarray) -> RigidTransform:
    """Closed-form rigid least squares mapping src onto dst."""
    cs = src_pts.mean(axis=0)
    cd = dst_pts.mean(axis=0)
    H = (src_pts - cs).T @ (dst_pts - cd)
    U, _, Vt = np.linalg.svd(H)
    S = np.diag([1.0, 1.0, np.sign(np.linalg.det(Vt.T @ U.T))])
    R = Vt.T @ S @ U.T
    return RigidTransform(R, cd - R @ cs)


@dataclass
class IcpResult:
    transform: RigidTransform
    rms_mm: float
    mse_xyz: np.ndarray  # per-axis mean squared residual of kept pairs
    iterations: int
    rms_history: list
    converged: bool


def trimmed_icp(
    src: PointCloud,
    dst: PointCloud,
    max_iter: int = 50,
    trim_fraction: float = 0.2,
    tol: float = 1e-6,
    init: RigidTransform = None,
    warn_rms_mm: float = 10.0,
) -> IcpResult:
    """Trimmed ICP refinement of src onto dst.

    Each iteration matches nearest neighbors, drops the worst trim_fraction
    residuals, and applies the Procrustes update. Raises NoConvergence (with
    the result attached) if max_iter is reached with RMS above warn_rms_mm.
    """
    if not (0.0 <= trim_fraction < 0.5):
        raise ValueError("trim_fraction must be in [0, 0.5)")
    _check_cloud(src)
    _check_cloud(dst)
    T = init if init is not None else RigidTransform.identity()
    tree = cKDTree(dst.points)
    prev_rms = np.inf
    history = []
    mse_xyz = np.zeros(3)
    n_keep = max(3, int(np.ceil(len(src) * (1.0 - trim_fraction))))
    it = 0
    for it in range(1, max_iter + 1):
        moved = T.apply(src.points)
        d, nn = tree.query(moved)
        keep = np.argsort(d)[:n_keep]
        kept_src = src.points[keep]
        kept_dst = dst.points[nn[keep]]
        resid = T.apply(kept_src) - kept_dst
        rms = float(np.sqrt(np.mean(np.sum(resid**2, axis=1))))
        history.append(rms)
        mse_xyz = np.mean(resid**2, axis=0)
        if abs(prev_rms - rms) < tol:
            prev_rms = rms
            break
        prev_rms = rms
        T = _procrustes(kept_src, kept_dst)
    result = IcpResult(
        transform=T,
        rms_mm=prev_rms,
        mse_xyz=mse_xyz,
        iterations=it,
        rms_history=history,
        converged=abs(history[-1] - (history[-2] if len(history) > 1 else np.inf)) < tol
        or prev_rms <= warn_rms_mm,
    )
    if it == max_iter and prev_rms > warn_rms_mm:
        raise NoConvergence(
            f"ICP hit max_iter with RMS {prev_rms:.3f} mm", result=result
        )
    return result


def screw_error(plan: ScrewPlan, T_est: RigidTransform, T_gt: RigidTransform) -> dict:
    """Tip translation error (component-wise + norm) and axis angle error."""
    tip_err = T_est.apply(plan.tip_mm) - T_gt.apply(plan.tip_mm)
    a_est = T_est.rotate(plan.axis)
    a_gt = T_gt.rotate(plan.axis)
    cosang = float(np.clip(a_est @ a_gt, -1.0, 1.0))
    return {
        "tip_err_mm": tip_err,
        "tip_err_norm_mm": float(np.linalg.norm(tip_err)),
        "angle_deg": float(np.degrees(np.arccos(cosang))),
    }


def save_ply(cloud: PointCloud, path: str) -> None:
    with open(path, "w") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {len(cloud)}\n")
        fh.write("property float x\nproperty float y\nproperty float z\n")
        fh.write("end_header\n")
        for p in cloud.points:
            fh.write(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f}\n")


def load_ply(path: str) -> PointCloud:
    pts = []
    with open(path) as fh:
        header = True
        for line in fh:
            if header:
                if line.strip() == "end_header":
                    header = False
                continue
            parts = line.split()
            if len(parts) >= 3:
                pts.append([float(parts[0]), float(parts[1]), float(parts[2])])
    return PointCloud(np.asarray(pts))
