"""Point clouds, oriented cuboids and k-NN density estimates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

DEFAULT_K = 8


def build_index(positions) -> cKDTree:
    """KD-tree over ``positions``; rejects empty or non-finite input."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    if len(positions) == 0:
        raise ValueError("empty cloud")
    if not np.all(np.isfinite(positions)):
        raise ValueError("non-finite coordinates")
    return cKDTree(positions)


@dataclass
class PointCloud:
    """Positions plus named per-point scalar channels.

    The spatial index is built lazily and cached; treat instances as
    immutable once queried.
    """

    positions: np.ndarray
    attributes: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("non-finite coordinates")
        attrs = {}
        for name, values in self.attributes.items():
            values = np.asarray(values, dtype=float).reshape(-1)
            if len(values) != len(self.positions):
                raise ValueError(
                    f"attribute {name!r} has {len(values)} entries for {len(self.positions)} points"
                )
            attrs[name] = values
        self.attributes = attrs
        self._index: Optional[cKDTree] = None
        self._knn_cache: Dict[int, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def index(self) -> cKDTree:
        if self._index is None:
            self._index = build_index(self.positions)
        return self._index

    def knn(self, queries, k: int):
        """Distances and ids of the ``k`` nearest cloud points to each query."""
        queries = np.asarray(queries, dtype=float).reshape(-1, 3)
        dist, idx = self.index.query(queries, k=k)
        return dist.reshape(len(queries), k), idx.reshape(len(queries), k)

    def neighbor_spacing(self, k: int = DEFAULT_K) -> np.ndarray:
        """Per-point mean distance to the ``k`` nearest *other* points (cached)."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if k >= len(self):
            raise ValueError("k too large")
        if k not in self._knn_cache:
            dist, _ = self.knn(self.positions, k + 1)
            # column 0 is the point itself (or a coincident duplicate, same distance 0)
            self._knn_cache[k] = dist[:, 1:].mean(axis=1)
        return self._knn_cache[k]

    def bounding_box(self) -> "BoundingBox":
        return BoundingBox(self.positions.min(axis=0), self.positions.max(axis=0))

    def subset(self, ids) -> "PointCloud":
        ids = np.asarray(ids, dtype=int)
        return PointCloud(
            self.positions[ids], {k: v[ids] for k, v in self.attributes.items()}
        )

    def transformed(self, rotation=None, translation=None) -> "PointCloud":
        pts = self.positions
        if rotation is not None:
            pts = pts @ np.asarray(rotation, dtype=float).T
        if translation is not None:
            pts = pts + np.asarray(translation, dtype=float)
        return PointCloud(pts, dict(self.attributes))


@dataclass(frozen=True)
class BoundingBox:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if np.any(lo > hi):
            raise ValueError("bounding box min exceeds max")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def extents(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))


@dataclass(frozen=True)
class Cuboid:
    """Oriented box. ``frame`` rows are (depth, height, width) unit axes and
    ``extents`` the full side lengths along them."""

    center: np.ndarray
    frame: np.ndarray
    extents: np.ndarray

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float).reshape(3)
        frame = np.asarray(self.frame, dtype=float).reshape(3, 3)
        extents = np.asarray(self.extents, dtype=float).reshape(3)
        if np.any(extents <= 0):
            raise ValueError("cuboid extents must be positive")
        if np.max(np.abs(frame @ frame.T - np.eye(3))) > 1e-9:
            raise ValueError("cuboid frame is not orthonormal")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "frame", frame)
        object.__setattr__(self, "extents", extents)

    @classmethod
    def from_normal(cls, center, normal, extents) -> "Cuboid":
        """Cuboid whose depth axis is ``normal``; tangents chosen deterministically."""
        return cls(center, frame_from_normal(normal), extents)

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    @property
    def half_diagonal(self) -> float:
        return 0.5 * float(np.linalg.norm(self.extents))

    def local(self, points) -> np.ndarray:
        """Coordinates of ``points`` in the (depth, height, width) frame."""
        return (np.asarray(points, dtype=float).reshape(-1, 3) - self.center) @ self.frame.T

    def contains(self, points) -> np.ndarray:
        return np.all(np.abs(self.local(points)) <= 0.5 * self.extents, axis=1)

    def split(self, offset: float):
        """Inner (deeper) and outer cuboids separated by a plane at ``offset`` along depth."""
        d = self.extents[0]
        if not -0.5 * d < offset < 0.5 * d:
            raise ValueError("split offset outside the cuboid")
        depth = self.frame[0]
        lo, hi = -0.5 * d, 0.5 * d
        inner = Cuboid(
            self.center + 0.5 * (lo + offset) * depth,
            self.frame,
            (offset - lo, self.extents[1], self.extents[2]),
        )
        outer = Cuboid(
            self.center + 0.5 * (offset + hi) * depth,
            self.frame,
            (hi - offset, self.extents[1], self.extents[2]),
        )
        return inner, outer


def frame_from_normal(normal) -> np.ndarray:
    n = np.asarray(normal, dtype=float).reshape(3)
    n = n / np.linalg.norm(n)
    # helper axis least aligned with n
    helper = np.zeros(3)
    helper[int(np.argmin(np.abs(n)))] = 1.0
    t1 = np.cross(n, helper)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(n, t1)
    return np.stack([n, t1, t2])


def mean_knn_distance(cloud: PointCloud, point_id: int, k: int = DEFAULT_K) -> float:
    """Mean distance from point ``point_id`` to its ``k`` nearest other points."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k >= len(cloud):
        raise ValueError("k too large")
    return float(cloud.neighbor_spacing(k)[point_id])


def local_density(cloud: PointCloud, member_ids: Sequence[int], k: int = DEFAULT_K) -> float:
    """Average neighbour spacing over ``member_ids``.

    Neighbours are searched over the whole cloud, not just the members.
    """
    member_ids = np.asarray(member_ids, dtype=int).reshape(-1)
    if len(member_ids) == 0:
        raise ValueError("empty member set")
    return float(cloud.neighbor_spacing(k)[member_ids].mean())


def global_density(cloud: PointCloud, k: int = DEFAULT_K) -> float:
    if len(cloud) < k + 1:
        raise ValueError("k too large")
    return float(cloud.neighbor_spacing(k).mean())


def points_in_cuboid(cloud: PointCloud, cuboid: Cuboid):
    """Count and ids of cloud points inside ``cuboid`` (faces inclusive)."""
    candidates = cloud.index.query_ball_point(cuboid.center, cuboid.half_diagonal * (1 + 1e-12) + 1e-12)
    candidates = np.asarray(sorted(candidates), dtype=int)
    if len(candidates) == 0:
        return 0, candidates
    inside = candidates[cuboid.contains(cloud.positions[candidates])]
    return int(len(inside)), inside
