"""Chamfer distance, F-Score and normal consistency between surfaces."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import cKDTree

from .bspline import TriangleMesh


@dataclass
class MetricsReport:
    chamfer: float
    fscore: float
    precision: float
    recall: float
    normal_consistency: float
    threshold: float

    def as_dict(self):
        return asdict(self)


def _points(x, name="points") -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1, 3)
    if len(x) == 0:
        raise ValueError(f"empty {name}")
    return x


def sample_mesh(mesh: TriangleMesh, n: int, seed: int = 0):
    """Area-weighted uniform samples and their face normals."""
    if n < 1:
        raise ValueError("n must be >= 1")
    areas = mesh.face_areas()
    total = areas.sum()
    if total <= 0:
        raise ValueError("zero-area mesh")
    rng = np.random.default_rng(seed)
    face = rng.choice(len(areas), size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    tri = mesh.vertices[mesh.faces[face]]
    pts = (
        (1 - r1)[:, None] * tri[:, 0]
        + (r1 * (1 - r2))[:, None] * tri[:, 1]
        + (r1 * r2)[:, None] * tri[:, 2]
    )
    return pts, mesh.face_normals()[face]


def nearest(src, dst):
    """Distance from each ``src`` point to its nearest ``dst`` point, and that point's id."""
    return cKDTree(_points(dst)).query(_points(src))


def chamfer(points_a, points_b) -> float:
    """Symmetric mean nearest-neighbour distance (average of both directions).

    Means use exactly rounded sums, so the value does not depend on point order.
    """
    da, _ = nearest(points_a, points_b)
    db, _ = nearest(points_b, points_a)
    return 0.5 * (math.fsum(da) / len(da)) + 0.5 * (math.fsum(db) / len(db))


def fscore(points_a, points_b, tau: float):
    """(F, precision, recall) with ``points_a`` as prediction and ``points_b`` as reference."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    da, _ = nearest(points_a, points_b)
    db, _ = nearest(points_b, points_a)
    precision = float(np.mean(da <= tau))
    recall = float(np.mean(db <= tau))
    if precision + recall == 0:
        return 0.0, precision, recall
    return 2 * precision * recall / (precision + recall), precision, recall


def normal_consistency(samples_a, samples_b) -> float:
    """Mean |cos| between each sample's normal and its nearest partner's, both directions.

    Each argument is a ``(points, normals)`` pair.
    """
    pa, na = (np.asarray(x, dtype=float).reshape(-1, 3) for x in samples_a)
    pb, nb = (np.asarray(x, dtype=float).reshape(-1, 3) for x in samples_b)
    for n in (na, nb):
        if len(n) == 0 or np.max(np.abs(np.linalg.norm(n, axis=1) - 1)) > 1e-6:
            raise ValueError("normals must be unit length")
    _, ia = nearest(pa, pb)
    _, ib = nearest(pb, pa)
    ca = np.abs(np.einsum("ij,ij->i", na, nb[ia])).mean()
    cb = np.abs(np.einsum("ij,ij->i", nb, na[ib])).mean()
    return float(min(1.0, 0.5 * (ca + cb)))


def pca_normals(points, k: int = 12) -> np.ndarray:
    """Unoriented normals from the smallest principal axis of each k-neighbourhood."""
    points = _points(points)
    k = min(k, len(points))
    _, idx = cKDTree(points).query(points, k=k)
    nb = points[idx.reshape(len(points), k)]
    centred = nb - nb.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centred, centred)
    _, vecs = np.linalg.eigh(cov)
    return vecs[:, :, 0]


def evaluate(pred, gt, tau_pct: float = 1.0, n_samples: int = 30000, seed: int = 0) -> MetricsReport:
    """Score a prediction against a reference.

    Each side is a :class:`TriangleMesh` (sampled uniformly), a ``(points,
    normals)`` pair, or a bare point array (normals estimated by PCA). The
    F-Score threshold is ``tau_pct`` percent of the reference bounding-box
    diagonal.
    """
    pa, na = _as_samples(pred, n_samples, seed)
    pb, nb = _as_samples(gt, n_samples, seed + 1)
    tau = tau_pct / 100.0 * float(np.linalg.norm(pb.max(axis=0) - pb.min(axis=0)))
    f, p, r = fscore(pa, pb, tau)
    return MetricsReport(
        chamfer=chamfer(pa, pb),
        fscore=f,
        precision=p,
        recall=r,
        normal_consistency=normal_consistency((pa, na), (pb, nb)),
        threshold=tau,
    )


def _as_samples(obj, n, seed):
    if isinstance(obj, TriangleMesh):
        return sample_mesh(obj, n, seed)
    if isinstance(obj, tuple) and len(obj) == 2:
        return _points(obj[0]), np.asarray(obj[1], dtype=float).reshape(-1, 3)
    pts = _points(obj)
    return pts, pca_normals(pts)
