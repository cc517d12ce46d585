"""Seeded synthetic point clouds and corruptions.

Noise levels (``sigma``) are fractions of the input bounding-box diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.spatial import cKDTree

from .geometry import PointCloud

CORRUPTION_KINDS = ("gaussian_noise", "duplicated_outliers", "region_outliers", "surface_outliers")


def _diag(positions) -> float:
    return float(np.linalg.norm(positions.max(axis=0) - positions.min(axis=0)))


def gen_sphere(n: int = 1000, radius: float = 1.0, seed: int = 0, center=(0.0, 0.0, 0.0)) -> PointCloud:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return PointCloud(np.asarray(center, dtype=float) + radius * d)


def gen_ellipsoid(
    n: int = 2000,
    radii=(1.0, 0.8, 0.6),
    bumps=(((0.0, 0.0, 1.0), 0.35, 0.45), ((1.0, 0.0, 0.0), 0.3, 0.4)),
    seed: int = 0,
) -> PointCloud:
    """Ellipsoid with Gaussian bump lobes.

    Each bump is ``(direction, height, angular_width)``: the radius along
    directions within roughly ``angular_width`` radians of ``direction`` grows
    by up to ``height`` times the ellipsoid radius there.
    """
    rng = np.random.default_rng(seed)
    # oversample the unit sphere, then thin by area so the surface is near-uniform
    m = 8 * n
    d = rng.normal(size=(m, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    pts = bumpy_surface(d, radii, bumps)
    area = _local_area_weight(d, radii, bumps)
    keep = rng.choice(m, size=n, replace=False, p=area / area.sum())
    return PointCloud(pts[np.sort(keep)])


def bumpy_surface(directions, radii=(1.0, 0.8, 0.6), bumps=()) -> np.ndarray:
    d = np.asarray(directions, dtype=float)
    r = 1.0 / np.sqrt(np.sum((d / np.asarray(radii)) ** 2, axis=1))
    scale = np.ones(len(d))
    for axis, height, width in bumps:
        a = np.asarray(axis, dtype=float)
        a /= np.linalg.norm(a)
        ang = np.arccos(np.clip(d @ a, -1.0, 1.0))
        scale += height * np.exp(-0.5 * (ang / width) ** 2)
    return d * (r * scale)[:, None]


def _local_area_weight(d, radii, bumps, h=1e-4):
    # surface area element of the radial map via finite-difference tangents
    helper = np.where(np.abs(d[:, :1]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    t1 = np.cross(d, helper)
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = np.cross(d, t1)

    def f(x):
        return bumpy_surface(x / np.linalg.norm(x, axis=1, keepdims=True), radii, bumps)

    g1 = (f(d + h * t1) - f(d - h * t1)) / (2 * h)
    g2 = (f(d + h * t2) - f(d - h * t2)) / (2 * h)
    return np.linalg.norm(np.cross(g1, g2), axis=1)


def add_duplicated_outliers(cloud: PointCloud, sigma: float, seed: int = 0, dark: bool = True) -> PointCloud:
    """Append one Gaussian-displaced copy of every point.

    Copies of an ``intensity`` channel are replaced by random dark values
    when ``dark`` is set; other channels are copied from the source point.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    rng = np.random.default_rng(seed)
    pos = cloud.positions
    jitter = rng.normal(scale=sigma * _diag(pos), size=pos.shape)
    src = np.arange(len(pos))
    return _append(cloud, pos + jitter, src, rng, dark)


def _append(cloud, new_positions, src, rng, dark=True):
    attrs = {}
    for name, values in cloud.attributes.items():
        extra = values[src].copy()
        if name == "intensity" and dark:
            extra = rng.uniform(0.0, 0.35, size=len(src))
        attrs[name] = np.concatenate([values, extra])
    return PointCloud(np.concatenate([cloud.positions, new_positions]), attrs)


@dataclass(frozen=True)
class PlaneSpec:
    """Square plane at z=0 split into a colour step (at ``x = color_split``) and a
    sampling-density step (at ``y = density_split``).

    The low-``y`` half is sampled at ``spacing``; the high-``y`` half at
    ``spacing * density_ratio``.
    """

    half_size: float = 1.0
    spacing: float = 0.04
    color_split: float = 0.0
    colors: Tuple[float, float] = (1.0, 0.3)
    density_split: float = 0.0
    density_ratio: float = 2.0
    density_radius: float = 0.1


def radius_density(positions, radius: float) -> np.ndarray:
    """Number of other points within ``radius`` of each point."""
    tree = cKDTree(positions)
    return tree.query_ball_point(positions, radius, return_length=True).astype(float) - 1.0


def gen_colored_plane(spec: PlaneSpec = PlaneSpec(), seed: int = 0) -> PointCloud:
    """Grid-sampled plane with ``intensity`` and ``density`` channels.

    ``seed`` only breaks exact grid ties with a 1e-9 jitter in the plane.
    """
    rng = np.random.default_rng(seed)
    h = spec.half_size

    def grid(spacing, y_lo, y_hi):
        xs = np.arange(-h + 0.5 * spacing, h, spacing)
        ys = np.arange(y_lo + 0.5 * spacing, y_hi, spacing)
        xx, yy = np.meshgrid(xs, ys, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel(), np.zeros(xx.size)])

    dense = grid(spec.spacing, -h, spec.density_split)
    sparse = grid(spec.spacing * spec.density_ratio, spec.density_split, h)
    pos = np.concatenate([dense, sparse])
    pos[:, :2] += rng.uniform(-1e-9, 1e-9, size=(len(pos), 2))
    intensity = np.where(pos[:, 0] < spec.color_split, spec.colors[0], spec.colors[1])
    density = radius_density(pos, spec.density_radius)
    return PointCloud(pos, {"intensity": intensity, "density": density})


@dataclass(frozen=True)
class CorruptionSpec:
    kind: str
    sigma: float = 0.0
    ratio: float = 1.0
    seed: int = 0
    blobs: int = 3

    def __post_init__(self):
        if self.kind not in CORRUPTION_KINDS:
            raise ValueError(f"unknown corruption kind {self.kind!r}")
        if self.sigma < 0 or self.ratio < 0:
            raise ValueError("sigma and ratio must be non-negative")


def corrupt(cloud: PointCloud, spec: CorruptionSpec) -> PointCloud:
    """Apply one corruption; all but ``gaussian_noise`` only append points.

    * gaussian_noise: every point jittered by N(0, sigma * diag) per axis.
    * duplicated_outliers: ``ratio * n`` random points duplicated and jittered.
    * region_outliers: ``ratio * n`` points in Gaussian blobs (std sigma * diag)
      centred 1.2 diagonals from the box centre, outside the object.
    * surface_outliers: ``ratio * n`` points duplicated and pushed along their
      outward direction from the centroid by N(0, sigma * diag).
    """
    rng = np.random.default_rng(spec.seed)
    pos = cloud.positions
    n = len(pos)
    diag = _diag(pos)
    if spec.kind == "gaussian_noise":
        return PointCloud(pos + rng.normal(scale=spec.sigma * diag, size=pos.shape), dict(cloud.attributes))
    count = int(round(spec.ratio * n))
    if spec.kind == "duplicated_outliers":
        src = np.sort(rng.choice(n, size=count, replace=count > n))
        new = pos[src] + rng.normal(scale=spec.sigma * diag, size=(count, 3))
        return _finish(cloud, new, src, rng)
    if spec.kind == "region_outliers":
        center = 0.5 * (pos.min(axis=0) + pos.max(axis=0))
        dirs = rng.normal(size=(spec.blobs, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        centers = center + 1.2 * diag * dirs
        which = rng.integers(spec.blobs, size=count)
        new = centers[which] + rng.normal(scale=spec.sigma * diag, size=(count, 3))
        src = rng.integers(n, size=count)
        return _finish(cloud, new, src, rng)
    src = np.sort(rng.choice(n, size=count, replace=count > n))
    out = pos[src] - pos.mean(axis=0)
    norm = np.linalg.norm(out, axis=1, keepdims=True)
    out = np.divide(out, norm, out=np.zeros_like(out), where=norm > 0)
    new = pos[src] + out * rng.normal(scale=spec.sigma * diag, size=(count, 1))
    return _finish(cloud, new, src, rng)


def _finish(cloud, new, src, rng):
    out = _append(cloud, new, src, rng)
    if "density" in cloud.attributes:
        spacing = float(np.median(cKDTree(cloud.positions).query(cloud.positions, k=2)[0][:, 1]))
        out.attributes["density"] = radius_density(out.positions, 2.5 * spacing)
    return out


def colored_sphere(n: int = 1000, seed: int = 0, intensity: float = 1.0) -> PointCloud:
    cloud = gen_sphere(n, seed=seed)
    return PointCloud(cloud.positions, {"intensity": np.full(n, float(intensity))})
