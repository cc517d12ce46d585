"""Fisher-ratio separability between adjacent regions of a point cloud.

Spatial occupancy is scored with counts only: actual points count as 1,
virtual empty-space points as 0, and the number of virtual points in a region
is inferred from its volume and the local point spacing. Scalar attributes
(intensity, density, ...) are scored on actual points only, and the per-channel
scores are fused by a weighted mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .geometry import DEFAULT_K, Cuboid, PointCloud, global_density, points_in_cuboid

DENSITY_MODES = ("global", "per-region")

# guards floor(V / delta**3) against round-off when V is an exact multiple
_FLOOR_EPS = 1e-9
# total variance below this fraction of the raw second moment counts as zero
_VAR_EPS = 1e-12


@dataclass(frozen=True)
class RegionCounts:
    o: int
    b: int

    def __post_init__(self):
        if self.o < 0 or self.b < 0:
            raise ValueError("counts must be non-negative")

    @property
    def n(self) -> int:
        return self.o + self.b


@dataclass(frozen=True)
class SeparabilityWeights:
    """Weight on point (occupancy) separability plus one weight per attribute channel."""

    point: float = 1.0
    attributes: Tuple[Tuple[str, float], ...] = ()

    def __post_init__(self):
        attrs = tuple((str(k), float(v)) for k, v in dict(self.attributes).items())
        object.__setattr__(self, "attributes", attrs)
        w = self.vector
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        if w.sum() <= 0:
            raise ValueError("weights sum to zero")

    @classmethod
    def of(cls, point: float = 1.0, **attributes: float) -> "SeparabilityWeights":
        return cls(point, tuple(attributes.items()))

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(name for name, _ in self.attributes)

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.point] + [w for _, w in self.attributes], dtype=float)

    @property
    def active_attributes(self) -> Tuple[str, ...]:
        return tuple(name for name, w in self.attributes if w > 0)


POINT_ONLY = SeparabilityWeights()


class PairSeparability(NamedTuple):
    eta: float
    per_attribute: np.ndarray
    counts: Tuple[RegionCounts, RegionCounts]
    flagged: bool


@dataclass
class SplitResult:
    eta_star: float
    split_offset: float
    per_attribute: np.ndarray = field(default_factory=lambda: np.zeros(1))
    flagged: bool = False


def attribute_separability(values1, values2) -> float:
    """Between-class over total variance of two groups of scalar values.

    Constant data (zero total variance) scores 0.
    """
    v1 = np.asarray(values1, dtype=float).reshape(-1)
    v2 = np.asarray(values2, dtype=float).reshape(-1)
    if len(v1) == 0 or len(v2) == 0:
        raise ValueError("empty region")
    allv = np.concatenate([v1, v2])
    mean = allv.mean()
    total = np.sum((allv - mean) ** 2)
    # relative guard: constant data leaves only round-off in ``total``
    if total <= _VAR_EPS * np.sum(allv**2):
        return 0.0
    between = len(v1) * (v1.mean() - mean) ** 2 + len(v2) * (v2.mean() - mean) ** 2
    return float(min(1.0, max(0.0, between / total)))


def nondata_count(region_volume: float, delta: float, o: int) -> int:
    """Number of virtual empty-space points for a region: floor(V/delta^3) - o, floored at 0."""
    if region_volume <= 0:
        raise ValueError("region volume must be positive")
    if delta <= 0:
        raise ValueError("delta must be positive")
    capacity = int(np.floor(region_volume / delta**3 * (1 + _FLOOR_EPS)))
    return max(0, capacity - int(o))


def point_separability(counts1: RegionCounts, counts2: RegionCounts) -> float:
    n1, n2 = counts1.n, counts2.n
    if n1 == 0 or n2 == 0:
        raise ValueError("empty region")
    return float(_point_sep(counts1.o, n1, counts2.o, n2))


def _point_sep(o1, n1, o2, n2):
    """Vectorised count-form separability; all-empty or all-full regions give 0."""
    o1 = np.asarray(o1, dtype=float)
    o2 = np.asarray(o2, dtype=float)
    n1 = np.asarray(n1, dtype=float)
    n2 = np.asarray(n2, dtype=float)
    N = n1 + n2
    mu_t = (o1 + o2) / N
    denom = N * mu_t * (1.0 - mu_t)
    with np.errstate(divide="ignore", invalid="ignore"):
        num = n1 * (o1 / n1 - mu_t) ** 2 + n2 * (o2 / n2 - mu_t) ** 2
        eta = np.where(denom > 0, num / denom, 0.0)
    return np.clip(eta, 0.0, 1.0)


def weighted_separability(eta_vector, weights) -> float:
    eta = np.asarray(eta_vector, dtype=float).reshape(-1)
    w = weights.vector if isinstance(weights, SeparabilityWeights) else np.asarray(weights, dtype=float)
    w = w.reshape(-1)
    if len(eta) != len(w):
        raise ValueError(f"{len(eta)} separabilities for {len(w)} weights")
    if w.sum() <= 0:
        raise ValueError("weights sum to zero")
    return float(np.dot(w, eta) / w.sum())


def _delta(cloud: PointCloud, ids, density_mode: str, k: int) -> float:
    if density_mode == "global":
        return global_density(cloud, k)
    if density_mode == "per-region":
        return float(cloud.neighbor_spacing(k)[ids].mean())
    raise ValueError(f"unknown density mode {density_mode!r}")


def region_pair_separability(
    cloud: PointCloud,
    cuboid1: Cuboid,
    cuboid2: Cuboid,
    weights: SeparabilityWeights = POINT_ONLY,
    density_mode: str = "global",
    k: int = DEFAULT_K,
) -> PairSeparability:
    """Weighted separability between two adjacent cuboids.

    A point on the shared face belongs to ``cuboid1``.
    """
    _, ids1 = points_in_cuboid(cloud, cuboid1)
    _, ids2 = points_in_cuboid(cloud, cuboid2)
    ids2 = np.setdiff1d(ids2, ids1)
    n_channels = 1 + len(weights.attributes)
    union = np.concatenate([ids1, ids2])
    if len(union) == 0:
        return PairSeparability(0.0, np.zeros(n_channels), (RegionCounts(0, 0), RegionCounts(0, 0)), True)

    delta = _delta(cloud, union, density_mode, k)
    c1 = RegionCounts(len(ids1), nondata_count(cuboid1.volume, delta, len(ids1)))
    c2 = RegionCounts(len(ids2), nondata_count(cuboid2.volume, delta, len(ids2)))
    etas = np.zeros(n_channels)
    if c1.n > 0 and c2.n > 0:
        etas[0] = point_separability(c1, c2)
    for j, (name, w) in enumerate(weights.attributes, start=1):
        if w <= 0 or len(ids1) == 0 or len(ids2) == 0:
            continue
        values = cloud.attributes[name]
        etas[j] = attribute_separability(values[ids1], values[ids2])
    return PairSeparability(weighted_separability(etas, weights), etas, (c1, c2), False)


def split_offsets(depth: float, n_splits: int) -> np.ndarray:
    """``n_splits`` equispaced offsets strictly inside (-depth/2, depth/2)."""
    if n_splits < 2:
        raise ValueError("n_splits must be >= 2")
    return -0.5 * depth + depth * np.arange(1, n_splits + 1) / (n_splits + 1)


def _moments(sorted_values, cut):
    """Count, sum and sum of squares of ``sorted_values[:cut]`` for each cut."""
    c1 = np.concatenate([[0.0], np.cumsum(sorted_values)])
    c2 = np.concatenate([[0.0], np.cumsum(sorted_values**2)])
    return cut.astype(float), c1[cut], c2[cut], c1[-1], c2[-1]


def _sweep_attribute(sorted_values, cut):
    n1, s1, q1, s_tot, q_tot = _moments(sorted_values, cut)
    n = float(len(sorted_values))
    n2 = n - n1
    s2 = s_tot - s1
    total = q_tot - s_tot**2 / n
    out = np.zeros(len(cut))
    ok = (n1 > 0) & (n2 > 0) & (total > _VAR_EPS * q_tot)
    if np.any(ok):
        m1 = s1[ok] / n1[ok]
        m2 = s2[ok] / n2[ok]
        between = n1[ok] * n2[ok] / n * (m1 - m2) ** 2
        out[ok] = between / total
    return np.clip(out, 0.0, 1.0)


def sweep_local(
    depths: np.ndarray,
    attribute_values: Dict[str, np.ndarray],
    extents,
    delta: float,
    n_splits: int,
    weights: SeparabilityWeights,
):
    """Separability at every split offset for points given in cuboid-local depth.

    ``depths`` are the depth coordinates of the actual points inside the
    cuboid. Returns (offsets, weighted etas, per-channel etas).
    """
    depth, height, width = (float(e) for e in extents)
    offsets = split_offsets(depth, n_splits)
    n_channels = 1 + len(weights.attributes)
    per = np.zeros((n_splits, n_channels))
    if len(depths) == 0:
        return offsets, np.zeros(n_splits), per

    order = np.argsort(depths, kind="stable")
    sd = depths[order]
    # region 1 is depth <= offset (inner side, boundary inclusive)
    o1 = np.searchsorted(sd, offsets, side="right")
    o2 = len(sd) - o1
    area = height * width
    inv_cell = 1.0 / delta**3
    cap1 = np.floor((offsets + 0.5 * depth) * area * inv_cell * (1 + _FLOOR_EPS))
    cap2 = np.floor((0.5 * depth - offsets) * area * inv_cell * (1 + _FLOOR_EPS))
    n1 = np.maximum(cap1, o1)
    n2 = np.maximum(cap2, o2)
    valid = (n1 > 0) & (n2 > 0)
    per[valid, 0] = _point_sep(o1[valid], n1[valid], o2[valid], n2[valid])
    for j, (name, w) in enumerate(weights.attributes, start=1):
        if w <= 0:
            continue
        per[:, j] = _sweep_attribute(np.asarray(attribute_values[name], dtype=float)[order], o1)
    w = weights.vector
    return offsets, per @ w / w.sum(), per


def _best_split(offsets, etas, per) -> Tuple[int, float, bool]:
    """Index and value of the best split, and whether a mirror-image offset tied it.

    A mirrored tie (+s and -s equally good) has no preferred side; callers treat
    it as a split at zero offset.
    """
    best = etas.max()
    if best <= 0:
        return -1, 0.0, False
    # ties (within round-off) resolved toward the offset nearest zero
    tied = np.flatnonzero(etas >= best - 1e-12)
    near = np.abs(offsets[tied])
    closest = tied[near <= near.min() + 1e-12 * (1 + near.min())]
    return int(closest[0]), float(etas[closest[0]]), len(closest) > 1


def max_split_separability(
    cloud: PointCloud,
    search_cuboid: Cuboid,
    n_splits: int = 8,
    weights: SeparabilityWeights = POINT_ONLY,
    density_mode: str = "global",
    k: int = DEFAULT_K,
    candidate_ids: Optional[Sequence[int]] = None,
) -> SplitResult:
    """Slide the inner/outer boundary through ``search_cuboid`` and keep the best split.

    ``candidate_ids`` may pre-filter the cloud (e.g. from a ball query); points
    outside the cuboid are discarded either way.
    """
    if candidate_ids is None:
        _, ids = points_in_cuboid(cloud, search_cuboid)
    else:
        ids = np.asarray(candidate_ids, dtype=int)
        if len(ids):
            ids = ids[search_cuboid.contains(cloud.positions[ids])]
    n_channels = 1 + len(weights.attributes)
    if len(ids) == 0:
        return SplitResult(0.0, 0.0, np.zeros(n_channels), True)
    depths = search_cuboid.local(cloud.positions[ids])[:, 0]
    delta = _delta(cloud, ids, density_mode, k)
    attrs = {name: cloud.attributes[name][ids] for name in weights.active_attributes}
    offsets, etas, per = sweep_local(depths, attrs, search_cuboid.extents, delta, n_splits, weights)
    pick, best, mirrored = _best_split(offsets, etas, per)
    if pick < 0:
        return SplitResult(0.0, 0.0, np.zeros(n_channels), False)
    offset = 0.0 if mirrored else float(offsets[pick])
    return SplitResult(best, offset, per[pick].copy(), False)


def separability_map(
    cloud: PointCloud,
    grid_points,
    direction,
    window_dims,
    weights: SeparabilityWeights = POINT_ONLY,
    density_mode: str = "per-region",
    k: int = DEFAULT_K,
) -> np.ndarray:
    """Edge-filter response at each grid point.

    Two windows of size ``window_dims`` = (depth, height, width) sit back to
    back at each grid point, one on each side along ``direction``.
    """
    grid_points = np.asarray(grid_points, dtype=float).reshape(-1, 3)
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    d, h, w = (float(x) for x in window_dims)
    out = np.empty(len(grid_points))
    for i, p in enumerate(grid_points):
        inner = Cuboid.from_normal(p - 0.5 * d * direction, direction, (d, h, w))
        outer = Cuboid(p + 0.5 * d * direction, inner.frame, (d, h, w))
        out[i] = region_pair_separability(cloud, inner, outer, weights, density_mode, k).eta
    return out
