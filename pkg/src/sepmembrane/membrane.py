"""Separability membrane: a closed cubic B-spline surface that is pulled,
sample by sample, onto the boundary of maximal inside/outside separability.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from .bspline import (
    BSplineSurface,
    SampleGrid,
    div_count,
    fit_least_squares,
    refine,
    sample_grid,
    spans,
    to_mesh,
)
from .geometry import DEFAULT_K, PointCloud, frame_from_normal
from .metrics import chamfer
from .separability import DENSITY_MODES, POINT_ONLY, SeparabilityWeights, _best_split, _delta, sweep_local


@dataclass(frozen=True)
class MembraneConfig:
    """Solver parameters.

    ``search_extents`` are (depth, height, width) as fractions of the
    membrane's bounding-box diagonal (``extents_reference="cloud"`` uses the
    input cloud's instead). The depth starts ``search_scale`` times larger and
    is multiplied by ``search_shrink`` every ``shrink_every`` iterations until
    it reaches the configured size; control-grid refinement waits for that.
    ``damping`` ties each refit to the previous control grid. ``deterministic``
    records zero wall time so traces are reproducible byte for byte.
    """

    k: int = DEFAULT_K
    beta: float = 0.5
    search_extents: Tuple[float, float, float] = (0.15, 0.05, 0.05)
    n_splits: int = 8
    weights: SeparabilityWeights = POINT_ONLY
    g_min: float = 1e-3
    patience: int = 3
    init_grid: Tuple[int, int] = (8, 5)
    max_grid: Tuple[int, int] = (40, 25)
    refine_increment: Tuple[int, int] = (1, 1)
    adaptive: bool = True
    alpha: float = 2.0
    div_min: int = 4
    max_iterations: int = 100
    density_mode: str = "per-region"
    margin: float = 0.05
    mesh_dims: Tuple[int, int] = (64, 48)
    deterministic: bool = False
    extents_reference: str = "membrane"
    search_scale: float = 4.0
    search_shrink: float = 0.5
    shrink_every: int = 10
    damping: float = 0.05

    def __post_init__(self):
        # beta == 0 is allowed as a frozen-membrane diagnostic
        if not 0 <= self.beta < 1:
            raise ValueError("beta must lie in [0, 1)")
        if self.search_scale < 1 or not 0 < self.search_shrink < 1:
            raise ValueError("search_scale must be >= 1 and search_shrink in (0, 1)")
        if min(self.search_extents) <= 0:
            raise ValueError("search extents must be positive")
        if self.k < 1 or self.n_splits < 2 or self.patience < 1 or self.max_iterations < 1 or self.shrink_every < 1:
            raise ValueError("counts must be positive (n_splits >= 2)")
        if self.init_grid[0] > self.max_grid[0] or self.init_grid[1] > self.max_grid[1]:
            raise ValueError("init grid exceeds max grid")
        if min(self.init_grid) < 4:
            raise ValueError("control grid needs at least 4 points per direction")
        if min(self.refine_increment) < 0 or self.alpha <= 0 or self.div_min < 1:
            raise ValueError("invalid refinement settings")
        if self.density_mode not in DENSITY_MODES:
            raise ValueError(f"density_mode must be one of {DENSITY_MODES}")
        if self.extents_reference not in ("membrane", "cloud"):
            raise ValueError("extents_reference must be 'membrane' or 'cloud'")
        if self.damping < 0:
            raise ValueError("damping must be non-negative")
        if self.margin < 0:
            raise ValueError("margin must be non-negative")


@dataclass
class TraceRecord:
    iteration: int
    eta_g: float
    M: int
    L: int
    u_n: int
    v_n: int
    chamfer: float
    seconds: float


TRACE_COLUMNS = ("iteration", "eta_g", "M", "L", "u_n", "v_n", "chamfer", "seconds")


@dataclass
class RunTrace:
    records: List[TraceRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self) -> str:
        lines = [",".join(TRACE_COLUMNS)]
        for r in self.records:
            lines.append(
                f"{r.iteration},{r.eta_g:.12g},{r.M},{r.L},{r.u_n},{r.v_n},{r.chamfer:.12g},{r.seconds:.6f}"
            )
        return "\n".join(lines) + "\n"


@dataclass
class MembraneState:
    surface: BSplineSurface
    iteration: int = 0
    eta_history: List[float] = field(default_factory=list)
    stagnation: int = 0
    # per-sample optimum from the latest iteration, used to place refinements
    last_params: Optional[np.ndarray] = None
    last_eta: Optional[np.ndarray] = None
    # multiplier on the configured search extents; shrinks towards 1
    scale: float = 1.0
    scale_since: int = 0

    @property
    def improvement(self) -> float:
        if not self.eta_history:
            return np.inf
        prev = self.eta_history[-2] if len(self.eta_history) > 1 else 0.0
        return self.eta_history[-1] - prev


def extreme_points(cloud: PointCloud) -> np.ndarray:
    """Rows: min-x, max-x, min-y, max-y, min-z, max-z points (first index wins ties)."""
    if len(cloud) == 0:
        raise ValueError("empty cloud")
    pos = cloud.positions
    ids = []
    for axis in range(3):
        ids += [int(np.argmin(pos[:, axis])), int(np.argmax(pos[:, axis]))]
    return pos[ids]


CORNER_CUT = 1.8


def octagon_shape(center, half, directions) -> np.ndarray:
    """Points of the corner-cut box |y_i| <= 1, sum |y_i| <= CORNER_CUT (y = (x - center) / half)
    hit by rays along ``directions``."""
    d = np.asarray(directions, dtype=float)
    a = np.abs(d)
    rho = 1.0 / np.maximum(a.max(axis=1), a.sum(axis=1) / CORNER_CUT)
    return center + half * (rho[:, None] * d)


def _ray_directions(params):
    phi = 2 * np.pi * params[:, 0]
    theta = np.pi * params[:, 1]
    return np.column_stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), -np.cos(theta)])


def init_octagon(cloud: PointCloud, margin: Optional[float] = None, grid_dims=(8, 5)) -> BSplineSurface:
    """Initial closed surface around the cloud.

    The six extreme points span a box; pushing each face out by ``margin``
    (default 5% of the diagonal) and cutting the box corners through the
    extreme points gives an octagonal solid that is fitted with an
    ``M x L`` closed membrane (poles at the z extremes).
    """
    ext = extreme_points(cloud)
    lo = np.array([ext[0, 0], ext[2, 1], ext[4, 2]])
    hi = np.array([ext[1, 0], ext[3, 1], ext[5, 2]])
    diag = float(np.linalg.norm(hi - lo))
    if diag == 0 or np.any(hi - lo <= 1e-9 * diag):
        raise ValueError("degenerate initialization")
    if margin is None:
        margin = 0.05 * diag
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo) + margin
    m, l = grid_dims
    probe = BSplineSurface.closed(np.zeros((m, l, 3)))
    params = _dense_params(probe, 6 * m, 6 * l)
    pts = octagon_shape(center, half, _ray_directions(params))
    surface = fit_least_squares(params, pts, m, l, periodic_u=True, poles=True)
    return orient_outward(surface)


def _dense_params(surface, u_n, v_n):
    from .bspline import grid_params

    return grid_params(surface, u_n, v_n, endpoints=True)


def orient_outward(surface: BSplineSurface) -> BSplineSurface:
    """Pick the normal sign that points away from the control-grid centroid."""
    grid = sample_grid(replace(surface, orientation=1), 16, 9, endpoints=False)
    centroid = surface.control.reshape(-1, 3).mean(axis=0)
    score = np.einsum("ij,ij->i", grid.normals, grid.points - centroid).sum()
    return replace(surface, orientation=1 if score >= 0 else -1)


def sample_dims(surface: BSplineSurface, config: MembraneConfig) -> Tuple[int, int]:
    m, l = surface.shape
    return div_count(m, config.alpha, config.div_min), div_count(l, config.alpha, config.div_min)


def search_extents(
    cloud: PointCloud, config: MembraneConfig, grid: Optional[SampleGrid] = None, scale: float = 1.0
) -> np.ndarray:
    """Absolute cuboid extents for the current iteration."""
    if config.extents_reference == "membrane" and grid is not None:
        diag = float(np.linalg.norm(grid.points.max(axis=0) - grid.points.min(axis=0)))
    else:
        diag = cloud.bounding_box().diagonal
    extents = np.asarray(config.search_extents, dtype=float) * diag
    extents[0] *= scale
    return extents


def evaluate_samples(cloud: PointCloud, grid: SampleGrid, config: MembraneConfig, scale: float = 1.0):
    """Best split offset and separability for every sample of ``grid``."""
    extents = search_extents(cloud, config, grid, scale)
    radius = 0.5 * float(np.linalg.norm(extents)) * (1 + 1e-12)
    candidates = cloud.index.query_ball_point(grid.points, radius)
    n = len(grid.points)
    offsets = np.zeros(n)
    etas = np.zeros(n)
    half = 0.5 * extents
    names = config.weights.active_attributes
    global_delta = _delta(cloud, None, "global", config.k) if config.density_mode == "global" else None
    for s in range(n):
        ids = np.asarray(candidates[s], dtype=int)
        if len(ids) == 0:
            continue
        frame = frame_from_normal(grid.normals[s])
        local = (cloud.positions[ids] - grid.points[s]) @ frame.T
        inside = np.all(np.abs(local) <= half, axis=1)
        if not np.any(inside):
            continue
        ids = ids[inside]
        delta = global_delta if global_delta is not None else _delta(cloud, ids, "per-region", config.k)
        attrs = {a: cloud.attributes[a][ids] for a in names}
        offs, eta, per = sweep_local(local[inside, 0], attrs, extents, delta, config.n_splits, config.weights)
        pick, best, mirrored = _best_split(offs, eta, per)
        if pick >= 0:
            offsets[s] = 0.0 if mirrored else offs[pick]
            etas[s] = best
    return offsets, etas


def iterate(state: MembraneState, cloud: PointCloud, config: MembraneConfig) -> MembraneState:
    """One sweep: sample, search along normals, move, refit."""
    surface = state.surface
    u_n, v_n = sample_dims(surface, config)
    grid = sample_grid(surface, u_n, v_n, endpoints=False)
    offsets, etas = evaluate_samples(cloud, grid, config, state.scale)
    moved = grid.points + (config.beta * offsets)[:, None] * grid.normals
    m, l = surface.shape
    new_surface = fit_least_squares(
        grid.params,
        moved,
        m,
        l,
        surface.knots_u,
        surface.knots_v,
        surface.periodic_u,
        surface.poles,
        surface.orientation,
        prior=surface.control,
        damping=config.damping,
    )
    eta_g = float(etas.mean())
    history = state.eta_history + [eta_g]
    stagnation = count_stagnation(state.stagnation, history, config.g_min)
    return MembraneState(
        new_surface, state.iteration + 1, history, stagnation, grid.params, etas, state.scale, state.scale_since
    )


def count_stagnation(previous: int, history, g_min: float) -> int:
    """Consecutive iterations whose eta_g gain (over the previous one, or over 0) is below ``g_min``."""
    prev = history[-2] if len(history) > 1 else 0.0
    return previous + 1 if history[-1] - prev < g_min else 0


def should_stop(state: MembraneState, config: MembraneConfig) -> bool:
    return state.iteration >= config.max_iterations or (state.stagnation >= config.patience and state.scale <= 1.0)


def shrink_search(state: MembraneState, config: MembraneConfig) -> MembraneState:
    """Narrow the search depth every ``shrink_every`` iterations until it reaches the configured size."""
    if state.scale <= 1.0 or state.iteration - state.scale_since < config.shrink_every:
        return state
    scale = max(1.0, state.scale * config.search_shrink)
    return replace(state, scale=scale, stagnation=0, scale_since=state.iteration)


def _lowest_spans(surface, direction, params, etas, count):
    iv = spans(surface, direction)
    col = 0 if direction == "u" else 1
    which = np.clip(np.searchsorted(iv[:, 0], params[:, col], side="right") - 1, 0, len(iv) - 1)
    sums = np.bincount(which, weights=etas, minlength=len(iv))
    hits = np.bincount(which, minlength=len(iv))
    # intervals without samples are treated as the least separable
    mean = np.where(hits > 0, sums / np.maximum(hits, 1), -1.0)
    order = np.lexsort((np.arange(len(iv)), mean))
    return sorted(order[:count].tolist(), reverse=True)


def adjust(state: MembraneState, config: MembraneConfig) -> MembraneState:
    """Add control rows/columns where separability is lowest once progress stalls.

    Refinement waits until the search depth has shrunk to its final size, so
    the coarse phase runs on the small initial grid.
    """
    if not config.adaptive or not state.eta_history or state.scale > 1.0:
        return state
    if state.improvement >= config.g_min:
        return state
    surface = state.surface
    m, l = surface.shape
    add_u = min(config.refine_increment[0], config.max_grid[0] - m)
    add_v = min(config.refine_increment[1], config.max_grid[1] - l)
    if add_u <= 0 and add_v <= 0:
        return state
    params, etas = state.last_params, state.last_eta
    if add_u > 0:
        for idx in _lowest_spans(surface, "u", params, etas, add_u):
            surface = refine(surface, "u", idx)
    if add_v > 0:
        for idx in _lowest_spans(surface, "v", params, etas, add_v):
            surface = refine(surface, "v", idx)
    return replace(state, surface=surface, stagnation=0)


def reconstruct(cloud: PointCloud, config: MembraneConfig = MembraneConfig(), surface: Optional[BSplineSurface] = None):
    """Full run. Returns (surface, mesh, trace)."""
    if len(cloud) < 7:
        raise ValueError("need at least 7 points")
    if surface is None:
        margin = config.margin * cloud.bounding_box().diagonal
        surface = init_octagon(cloud, margin, config.init_grid)
    state = MembraneState(surface, scale=config.search_scale)
    trace = RunTrace()
    while True:
        t0 = time.perf_counter()
        u_n, v_n = sample_dims(state.surface, config)
        state = iterate(state, cloud, config)
        record_surface = state.surface
        state = shrink_search(adjust(state, config), config)
        elapsed = 0.0 if config.deterministic else time.perf_counter() - t0
        m, l = record_surface.shape
        # a fixed evaluation grid keeps the column comparable across control-grid sizes
        pts = sample_grid(record_surface, *config.mesh_dims, endpoints=False).points
        trace.records.append(
            TraceRecord(state.iteration, state.eta_history[-1], m, l, u_n, v_n, chamfer(pts, cloud.positions), elapsed)
        )
        if should_stop(state, config):
            break
    if not np.all(np.isfinite(state.surface.control)):
        raise FloatingPointError("membrane diverged")
    mesh = to_mesh(state.surface, *config.mesh_dims)
    return state.surface, mesh, trace


def static_grid_config(config: MembraneConfig, grid) -> MembraneConfig:
    """Same solver with refinement disabled and a fixed control grid."""
    grid = tuple(grid)
    return replace(config, init_grid=grid, max_grid=grid, adaptive=False)
