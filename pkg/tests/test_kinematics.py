import numpy as np
import pytest

from ctus.errors import EmptyRegion, LeftRegion
from ctus.kinematics import (
    Polyline3,
    ProbePose,
    move_free,
    move_on_curve,
    pose_to_slice_geometry,
    slice_curves,
    surface_state_at,
)
from ctus.mesh import SurfaceMesh, clip_region, load_obj, save_obj


def planar_grid(n=10, size=100.0, z=0.0):
    """Regular triangulated grid in the z=z plane, normals +z."""
    xs = np.linspace(-size / 2, size / 2, n)
    ys = np.linspace(-size / 2, size / 2, n)
    verts = np.array([[x, y, z] for y in ys for x in xs])
    tris = []
    for j in range(n - 1):
        for i in range(n - 1):
            a = j * n + i
            tris.append([a, a + 1, a + n + 1])
            tris.append([a, a + n + 1, a + n])
    return SurfaceMesh(verts, np.array(tris))


def cylinder_mesh(radius=50.0, length=100.0, n_circ=400, n_len=20):
    """Open cylinder about the y-axis; outward normals."""
    verts, tris = [], []
    for j in range(n_len):
        y = -length / 2 + length * j / (n_len - 1)
        for i in range(n_circ):
            t = 2 * np.pi * i / n_circ
            verts.append([radius * np.sin(t), y, radius * np.cos(t)])
    for j in range(n_len - 1):
        for i in range(n_circ):
            a = j * n_circ + i
            b = j * n_circ + (i + 1) % n_circ
            c = a + n_circ
            d = b + n_circ
            tris.append([a, b, d])
            tris.append([a, d, c])
    return SurfaceMesh(np.array(verts), np.array(tris))


def sphere_mesh(radius=1.0, n=24):
    import itertools

    verts, tris = [], []
    for j in range(n + 1):
        phi = np.pi * j / n
        for i in range(2 * n):
            t = 2 * np.pi * i / (2 * n)
            verts.append(
                [
                    radius * np.sin(phi) * np.cos(t),
                    radius * np.sin(phi) * np.sin(t),
                    radius * np.cos(phi),
                ]
            )
    w = 2 * n
    for j in range(n):
        for i in range(w):
            a = j * w + i
            b = j * w + (i + 1) % w
            c = a + w
            d = b + w
            tris.append([a, d, b])
            tris.append([a, c, d])
    return SurfaceMesh(np.array(verts), np.array(tris))


# ---------------------------------------------------------------- clipping


def test_clip_whole_mesh_identity():
    mesh = planar_grid(6)
    out = clip_region(mesh, ([-100, -100, -1], [100, 100, 1]))
    assert len(out.triangles) == len(mesh.triangles)
    assert len(out.vertices) == len(mesh.vertices)


def test_clip_nothing_raises():
    mesh = planar_grid(6)
    with pytest.raises(EmptyRegion):
        clip_region(mesh, ([200, 200, 200], [300, 300, 300]))


def test_clip_halfspace_matches_bruteforce():
    mesh = sphere_mesh()
    lo = np.array([-2.0, -2.0, 0.0])
    hi = np.array([2.0, 2.0, 2.0])
    out = clip_region(mesh, (lo, hi))
    count = 0
    for tri in mesh.triangles:
        pts = mesh.vertices[tri]
        if np.all((pts >= lo) & (pts <= hi)):
            count += 1
    assert len(out.triangles) == count


# ---------------------------------------------------------------- move_free


def test_move_free_zero_step():
    mesh = planar_grid()
    state = surface_state_at(mesh, 0)
    new_state, pose = move_free(mesh, state, 0.0, 0.0)
    assert new_state.triangle_index == state.triangle_index
    assert np.allclose(new_state.barycentric, state.barycentric)
    assert np.allclose(pose.position_mm[2], 0.0)


def test_move_free_planar_exact_displacement():
    mesh = planar_grid(12, 200.0)
    # triangle near center, heading aligned with +x
    state = surface_state_at(mesh, 2 * (11 * 5 + 5))
    _, pose0 = move_free(mesh, state, 0.0, 0.0)
    new_state, pose1 = move_free(mesh, state, 7.0, 3.0)
    delta = pose1.position_mm - pose0.position_mm
    e1 = mesh.vertices[mesh.triangles[state.triangle_index][1]] - mesh.vertices[
        mesh.triangles[state.triangle_index][0]
    ]
    e1 = e1 / np.linalg.norm(e1)
    n = mesh.triangle_normal(state.triangle_index)
    lateral = np.cross(n, e1)
    expected = 7.0 * e1 + 3.0 * lateral
    assert np.allclose(delta, expected, atol=1e-9)
    assert abs(np.linalg.norm(delta) - np.hypot(7.0, 3.0)) < 1e-9


def test_move_free_cylinder_arclength():
    mesh = cylinder_mesh(radius=50.0)
    # start on a triangle near the top (z ~ +r), walk circumferentially
    center = np.array([0.0, 0.0, 50.0])
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    ti = int(np.argmin(np.linalg.norm(centroids - center, axis=1)))
    state = surface_state_at(mesh, ti)
    # heading = first edge; align walk along the circumferential direction:
    # pick du/dv so the step is along x at the start
    _, pose0 = move_free(mesh, state, 0.0, 0.0)
    e1, n = None, mesh.triangle_normal(ti)
    tri = mesh.triangles[ti]
    e1 = mesh.vertices[tri[1]] - mesh.vertices[tri[0]]
    e1 = e1 / np.linalg.norm(e1)
    lateral = np.cross(n, e1)
    circ = np.cross(np.array([0.0, 1.0, 0.0]), n)  # circumferential at start
    circ = circ / np.linalg.norm(circ)
    du, dv = float(circ @ e1), float(circ @ lateral)
    positions = [pose0.position_mm]
    for _ in range(10):
        state, pose = move_free(mesh, state, du, dv)
        positions.append(pose.position_mm)
    path = sum(
        np.linalg.norm(b - a) for a, b in zip(positions, positions[1:])
    )
    assert abs(path - 10.0) < 0.1
    # all positions stay on the cylinder surface
    for p in positions:
        assert abs(np.hypot(p[0], p[2]) - 50.0) < 0.1


def test_move_free_reversible():
    mesh = cylinder_mesh(radius=50.0, n_circ=200)
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    ti = int(np.argmin(np.linalg.norm(centroids - np.array([0.0, 0.0, 50.0]), axis=1)))
    state = surface_state_at(mesh, ti)
    _, pose0 = move_free(mesh, state, 0.0, 0.0)
    state1, _ = move_free(mesh, state, 4.0, 2.0)
    state2, pose2 = move_free(mesh, state1, -4.0, -2.0)
    assert np.linalg.norm(pose2.position_mm - pose0.position_mm) < 1e-3


def test_move_free_leaves_region():
    mesh = planar_grid(6, 50.0)
    state = surface_state_at(mesh, 0)
    with pytest.raises(LeftRegion):
        move_free(mesh, state, -1000.0, 0.0)


def test_move_free_position_on_mesh():
    mesh = sphere_mesh(radius=40.0)
    state = surface_state_at(mesh, len(mesh.triangles) // 2)
    state, pose = move_free(mesh, state, 5.0, -3.0)
    assert abs(np.linalg.norm(pose.position_mm) - 40.0) < 0.5
    # pose z-axis points inward (opposite the outward sphere normal)
    outward = pose.position_mm / np.linalg.norm(pose.position_mm)
    assert pose.z_axis @ outward < -0.9


# ---------------------------------------------------------------- slice_curves


def test_slice_cylinder_circumference():
    mesh = cylinder_mesh(radius=30.0, length=40.0, n_circ=300, n_len=10)
    curves = slice_curves(mesh, [0.0, 1.0, 0.0], 10.0)
    closed = [c for c in curves if c.is_closed]
    assert closed
    for c in closed:
        assert abs(c.length - 2 * np.pi * 30.0) / (2 * np.pi * 30.0) < 0.01


def test_slice_planar_mesh_straight():
    mesh = planar_grid(10, 100.0)
    curves = slice_curves(mesh, [0.0, 1.0, 0.0], 20.0)
    assert curves
    for c in curves:
        # straight: endpoint distance equals arc length
        chord = np.linalg.norm(c.points[-1] - c.points[0])
        assert abs(chord - c.length) < 1e-6


def test_slice_spacing_larger_than_mesh():
    mesh = planar_grid(5, 10.0)
    curves = slice_curves(mesh, [0.0, 1.0, 0.0], 8.0)
    assert len(curves) >= 1


def test_slice_curves_empty():
    mesh = planar_grid(5, 10.0)
    with pytest.raises(EmptyRegion):
        slice_curves(mesh, [0.0, 0.0, 1.0], 100.0)  # planes miss the flat mesh


def test_curves_pairwise_non_intersecting():
    mesh = cylinder_mesh(radius=20.0, length=60.0, n_circ=100, n_len=12)
    curves = slice_curves(mesh, [0.0, 1.0, 0.0], 10.0)
    for i in range(len(curves)):
        for j in range(i + 1, len(curves)):
            from scipy.spatial import cKDTree

            d, _ = cKDTree(curves[i].points).query(curves[j].points)
            assert d.min() > 1e-6


# ---------------------------------------------------------------- move_on_curve


def circle_curve(radius=25.0, n=200):
    t = np.linspace(0, 2 * np.pi, n + 1)
    pts = np.column_stack([radius * np.cos(t), radius * np.sin(t), np.zeros_like(t)])
    normals = np.column_stack([np.cos(t), np.sin(t), np.zeros_like(t)])
    return Polyline3(pts, normals)


def test_move_on_curve_zero_dt():
    c = circle_curve()
    t0, pose0 = move_on_curve(c, 5.0, 0.0)
    assert t0 == 5.0
    t1, pose1 = move_on_curve(c, 5.0, 0.0)
    assert np.allclose(pose0.position_mm, pose1.position_mm)


def test_move_on_curve_clamps_open_curve():
    pts = np.column_stack([np.linspace(0, 10, 11), np.zeros(11), np.zeros(11)])
    normals = np.tile([0.0, 0.0, 1.0], (11, 1))
    c = Polyline3(pts, normals)
    t, pose = move_on_curve(c, 9.0, 100.0)
    assert t == pytest.approx(10.0)
    assert np.allclose(pose.position_mm, [10.0, 0.0, 0.0])


def test_move_on_curve_closed_loop_returns():
    c = circle_curve()
    t, pose_start = move_on_curve(c, 0.0, 0.0)
    steps = 40
    dt = c.length / steps
    for _ in range(steps):
        t, pose = move_on_curve(c, t, dt)
    assert np.linalg.norm(pose.position_mm - pose_start.position_mm) < 1e-3


# ---------------------------------------------------------------- pose -> slice


def test_pose_identity_axes():
    pose = ProbePose.identity()
    geom = pose_to_slice_geometry(pose, 10, 10, (1.0, 1.0))
    assert np.allclose(geom.u, [1, 0, 0])
    assert np.allclose(geom.v, [0, 0, 1])
    assert np.allclose(geom.plane_origin_mm, 0.0)


def test_pose_rotation_equivariance():
    from scipy.spatial.transform import Rotation

    q = Rotation.from_euler("z", 90, degrees=True).as_quat()
    pose = ProbePose(np.zeros(3), q)
    geom = pose_to_slice_geometry(pose, 10, 10, (1.0, 1.0))
    assert np.allclose(geom.u, [0, 1, 0], atol=1e-12)
    assert np.allclose(geom.v, [0, 0, 1], atol=1e-12)


def test_pose_random_slice_normal_is_elevational_axis():
    rng = np.random.default_rng(17)
    from scipy.spatial.transform import Rotation

    for _ in range(20):
        q = Rotation.random(random_state=int(rng.integers(1 << 30))).as_quat()
        pose = ProbePose(rng.uniform(-10, 10, 3), q)
        geom = pose_to_slice_geometry(pose, 8, 8, (0.5, 0.5))
        # u x v = x_axis x z_axis = -y_axis for a right-handed probe frame
        assert np.allclose(geom.normal, -pose.y_axis, atol=1e-9)


def test_obj_roundtrip(tmp_path):
    mesh = sphere_mesh(radius=5.0, n=6)
    path = str(tmp_path / "m.obj")
    save_obj(mesh, path)
    loaded = load_obj(path)
    assert np.allclose(loaded.vertices, mesh.vertices, atol=1e-6)
    assert np.array_equal(loaded.triangles, mesh.triangles)
    assert np.allclose(loaded.normals, mesh.normals, atol=1e-5)
