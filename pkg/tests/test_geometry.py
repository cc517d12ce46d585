import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import inside_brute, knn_brute, mean_knn_brute
from sepmembrane.geometry import (
    Cuboid,
    PointCloud,
    build_index,
    frame_from_normal,
    global_density,
    local_density,
    mean_knn_distance,
    points_in_cuboid,
)


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def unit_grid(n):
    g = np.arange(n, dtype=float)
    return np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)


# build_index


def test_empty_cloud_rejected():
    with pytest.raises(ValueError, match="empty cloud"):
        build_index(np.zeros((0, 3)))


def test_single_point_self_neighbor():
    dist, idx = PointCloud([[1.0, 2.0, 3.0]]).knn([[1.0, 2.0, 3.0]], 1)
    assert dist[0, 0] == 0.0 and idx[0, 0] == 0


def test_cube_corners_knn_matches_brute_force():
    corners = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=float)
    cloud = PointCloud(corners)
    dist, _ = cloud.knn(corners[:1], 3)
    ref, _ = knn_brute(corners, corners[:1], 3)
    np.testing.assert_array_equal(dist, ref)


@pytest.mark.parametrize("k", [1, 8, 16])
def test_knn_matches_brute_force(k):
    rng = np.random.default_rng(k)
    pts = rng.normal(size=(200, 3))
    queries = rng.normal(size=(50, 3))
    dist, idx = PointCloud(pts).knn(queries, k)
    ref_d, ref_i = knn_brute(pts, queries, k)
    np.testing.assert_allclose(dist, ref_d, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(idx, ref_i)


def test_knn_large_cloud_matches_brute_force():
    rng = np.random.default_rng(11)
    pts = rng.random((10_000, 3))
    queries = rng.random((20, 3))
    dist, _ = PointCloud(pts).knn(queries, 16)
    ref, _ = knn_brute(pts, queries, 16)
    np.testing.assert_allclose(dist, ref, atol=1e-12)


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        PointCloud([[0.0, np.nan, 0.0]])


def test_attribute_length_checked():
    with pytest.raises(ValueError, match="attribute"):
        PointCloud(np.zeros((3, 3)), {"intensity": [1.0, 2.0]})


# mean_knn_distance


def test_two_points_k1():
    assert mean_knn_distance(PointCloud([[0, 0, 0], [1, 0, 0]]), 0, 1) == 1.0


def test_axis_line_middle_point():
    line = np.column_stack([np.arange(5.0), np.zeros(5), np.zeros(5)])
    assert mean_knn_distance(PointCloud(line), 2, 2) == 1.0


def test_mean_knn_random_matches_brute_force():
    pts = np.random.default_rng(3).normal(size=(100, 3))
    cloud = PointCloud(pts)
    for i in (0, 17, 99):
        assert mean_knn_distance(cloud, i, 8) == pytest.approx(mean_knn_brute(pts, i, 8), abs=1e-12)


def test_k_too_large():
    with pytest.raises(ValueError, match="k too large"):
        mean_knn_distance(PointCloud(np.eye(3)), 0, 3)


def test_mean_knn_invariances():
    rng = np.random.default_rng(5)
    pts = rng.normal(size=(60, 3))
    base = mean_knn_distance(PointCloud(pts), 4, 8)
    moved = pts @ random_rotation(rng).T + rng.normal(size=3)
    assert mean_knn_distance(PointCloud(moved), 4, 8) == pytest.approx(base, rel=1e-12)
    assert mean_knn_distance(PointCloud(2.5 * pts), 4, 8) == pytest.approx(2.5 * base, rel=1e-12)


# local / global density


def test_local_density_constant_spacing():
    h = 0.3
    ring = np.array([[np.cos(a), np.sin(a), 0.0] for a in np.linspace(0, 2 * np.pi, 3, endpoint=False)])
    ring *= h / np.linalg.norm(ring[0] - ring[1])
    assert local_density(PointCloud(ring), [0, 1, 2], 2) == pytest.approx(h, rel=1e-12)


def test_local_density_unit_grid_k6():
    pts = unit_grid(4)
    cloud = PointCloud(pts)
    interior = [i for i, p in enumerate(pts) if np.all((p > 0) & (p < 3))]
    # interior grid points: six face neighbours at distance 1
    assert local_density(cloud, interior, 6) == pytest.approx(1.0, abs=1e-12)
    ref = np.mean([mean_knn_brute(pts, i, 6) for i in interior])
    assert local_density(cloud, interior, 6) == pytest.approx(ref, abs=1e-12)


def test_single_member_density():
    pts = np.random.default_rng(2).normal(size=(30, 3))
    cloud = PointCloud(pts)
    assert local_density(cloud, [7], 8) == pytest.approx(mean_knn_brute(pts, 7, 8), abs=1e-12)


def test_empty_member_set():
    with pytest.raises(ValueError):
        local_density(PointCloud(np.eye(3)), [], 1)


def test_global_equals_local_over_all():
    pts = np.random.default_rng(8).normal(size=(80, 3))
    cloud = PointCloud(pts)
    assert global_density(cloud, 8) == local_density(cloud, np.arange(80), 8)


@pytest.mark.parametrize("k", [1, 2, 6])
def test_global_density_interior_unit_grid(k):
    # a 3x3x3 grid embedded in a larger one: every member has >= 6 unit neighbours
    pts = unit_grid(5)
    cloud = PointCloud(pts)
    members = [i for i, p in enumerate(pts) if np.all((p >= 1) & (p <= 3))]
    assert local_density(cloud, members, k) == pytest.approx(1.0, abs=1e-12)


def test_global_density_unit_grid_matches_oracle():
    pts = unit_grid(4)
    ref = np.mean([mean_knn_brute(pts, i, 6) for i in range(len(pts))])
    assert global_density(PointCloud(pts), 6) == pytest.approx(ref, abs=1e-12)


def test_two_cluster_global_between_locals():
    rng = np.random.default_rng(4)
    a = rng.normal(scale=0.1, size=(100, 3))
    b = rng.normal(scale=1.0, size=(100, 3)) + 20
    cloud = PointCloud(np.vstack([a, b]))
    da = local_density(cloud, np.arange(100), 8)
    db = local_density(cloud, np.arange(100, 200), 8)
    g = global_density(cloud, 8)
    assert min(da, db) < g < max(da, db)


def test_global_density_needs_k_plus_one():
    with pytest.raises(ValueError):
        global_density(PointCloud(np.eye(3)), 3)


# cuboids


def test_center_inside():
    c = Cuboid((0, 0, 0), np.eye(3), (1, 1, 1))
    assert points_in_cuboid(PointCloud([[0.0, 0.0, 0.0]]), c)[0] == 1


def test_face_point_inside():
    c = Cuboid((0, 0, 0), np.eye(3), (1, 1, 1))
    n, ids = points_in_cuboid(PointCloud([[0.5, 0.0, 0.0], [0.0, -0.5, 0.5], [0.5000001, 0, 0]]), c)
    assert n == 2 and list(ids) == [0, 1]


def test_rotated_cuboid_matches_projection_oracle():
    rng = np.random.default_rng(9)
    pts = rng.uniform(-1, 1, size=(500, 3))
    frame = frame_from_normal(rng.normal(size=3))
    c = Cuboid(rng.normal(scale=0.2, size=3), frame, (0.9, 0.5, 1.1))
    n, ids = points_in_cuboid(PointCloud(pts), c)
    expect = np.flatnonzero(inside_brute(pts, c.center, frame, c.extents))
    assert n == len(expect) > 0
    np.testing.assert_array_equal(ids, expect)


def test_points_in_cuboid_rigid_invariance():
    rng = np.random.default_rng(10)
    pts = rng.uniform(-1, 1, size=(400, 3))
    c = Cuboid.from_normal((0.1, 0.0, -0.2), (1.0, 2.0, 0.5), (0.8, 0.6, 0.4))
    R, t = random_rotation(rng), rng.normal(size=3)
    moved = Cuboid(R @ c.center + t, c.frame @ R.T, c.extents)
    _, a = points_in_cuboid(PointCloud(pts), c)
    _, b = points_in_cuboid(PointCloud(pts @ R.T + t), moved)
    np.testing.assert_array_equal(a, b)


def test_cuboid_validation():
    with pytest.raises(ValueError):
        Cuboid((0, 0, 0), np.eye(3), (1, 0, 1))
    with pytest.raises(ValueError):
        Cuboid((0, 0, 0), [[1, 0, 0], [1, 0, 0], [0, 0, 1]], (1, 1, 1))


def test_split_volumes_add_up():
    c = Cuboid.from_normal((1, 2, 3), (0, 0, 1), (2.0, 1.0, 0.5))
    inner, outer = c.split(0.3)
    assert inner.volume + outer.volume == pytest.approx(c.volume)
    assert inner.extents[0] == pytest.approx(1.3)
    # inner sits on the negative-depth side
    assert inner.local([inner.center])[0, 0] == 0.0
    assert c.local([inner.center])[0, 0] < 0 < c.local([outer.center])[0, 0]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_frame_from_normal_is_orthonormal(n):
    f = frame_from_normal(n)
    np.testing.assert_allclose(f @ f.T, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(f[0], np.asarray(n) / np.linalg.norm(n), atol=1e-12)
