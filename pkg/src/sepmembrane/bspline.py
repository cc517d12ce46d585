"""Cubic tensor-product B-spline surfaces.

Two layouts are supported:

* open patches: clamped knot vectors in both directions;
* closed membranes: periodic in ``u`` (around the object) and clamped in ``v``
  with the first and last control rows collapsed to single pole points.

For a periodic direction with ``M`` control points, ``knots_u`` holds the
``M + 1`` breakpoints of one period, ``0 = t_0 < ... < t_M = 1``; the full knot
sequence is their periodic extension.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Tuple

import numpy as np
from scipy import linalg

DEGREE = 3
RIDGE = 1e-10


def uniform_clamped_knots(count: int) -> np.ndarray:
    if count < DEGREE + 1:
        raise ValueError(f"need at least {DEGREE + 1} control points, got {count}")
    inner = np.linspace(0.0, 1.0, count - DEGREE + 1)
    return np.concatenate([np.zeros(DEGREE), inner, np.ones(DEGREE)])


def uniform_periodic_knots(count: int) -> np.ndarray:
    if count < DEGREE + 1:
        raise ValueError(f"need at least {DEGREE + 1} control points, got {count}")
    return np.linspace(0.0, 1.0, count + 1)


def basis(knots, i: int, p: int, t: float) -> float:
    """Cox-de Boor value of the ``i``-th degree-``p`` basis function at ``t``.

    Uses half-open spans, except that ``t`` equal to the last knot is assigned
    to the last non-empty span so the basis still sums to one there.
    """
    knots = np.asarray(knots, dtype=float)
    n_basis = len(knots) - p - 1
    if not 0 <= i < n_basis:
        raise IndexError(f"basis index {i} out of range [0, {n_basis})")
    if p == 0:
        lo, hi = knots[i], knots[i + 1]
        if lo <= t < hi:
            return 1.0
        last = np.flatnonzero(knots < knots[-1])
        if t == knots[-1] and len(last) and i == last[-1]:
            return 1.0
        return 0.0
    value = 0.0
    d1 = knots[i + p] - knots[i]
    if d1 > 0:
        value += (t - knots[i]) / d1 * basis(knots, i, p - 1, t)
    d2 = knots[i + p + 1] - knots[i + 1]
    if d2 > 0:
        value += (knots[i + p + 1] - t) / d2 * basis(knots, i + 1, p - 1, t)
    return value


def _periodic_extension(breaks: np.ndarray) -> np.ndarray:
    """Knots t_{-3} .. t_{M+3} of the periodic sequence (offset by DEGREE)."""
    m = len(breaks) - 1
    period = breaks[-1] - breaks[0]
    idx = np.arange(-DEGREE, m + DEGREE + 1)
    return breaks[idx % m] + (idx // m) * period


def _local_basis(ext: np.ndarray, span: np.ndarray, t: np.ndarray):
    """Non-zero cubic basis values and first derivatives on ``span``.

    Column r belongs to basis function ``span - 3 + r`` of ``ext``.
    """
    p = DEGREE
    n = len(t)
    N = np.zeros((n, p + 1))
    N[:, 0] = 1.0
    left = np.zeros((n, p + 1))
    right = np.zeros((n, p + 1))
    lower = None
    for j in range(1, p + 1):
        left[:, j] = t - ext[span + 1 - j]
        right[:, j] = ext[span + j] - t
        saved = np.zeros(n)
        for r in range(j):
            denom = right[:, r + 1] + left[:, j - r]
            temp = np.divide(N[:, r], denom, out=np.zeros(n), where=denom != 0)
            N[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        N[:, j] = saved
        if j == p - 1:
            lower = N[:, :p].copy()
    dN = np.zeros((n, p + 1))
    for r in range(p + 1):
        if r >= 1:
            d1 = ext[span + r] - ext[span - p + r]
            dN[:, r] += np.divide(lower[:, r - 1], d1, out=np.zeros(n), where=d1 != 0)
        if r <= p - 1:
            d2 = ext[span + r + 1] - ext[span - p + r + 1]
            dN[:, r] -= np.divide(lower[:, r], d2, out=np.zeros(n), where=d2 != 0)
    return N, p * dN


def basis_rows(knots, count: int, periodic: bool, t):
    """Active control indices, basis values and derivatives at parameters ``t``.

    Returns three ``(len(t), 4)`` arrays.
    """
    knots = np.asarray(knots, dtype=float)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if periodic:
        t = np.mod(t, 1.0)
        ext = _periodic_extension(knots)
        j = np.clip(np.searchsorted(knots, t, side="right") - 1, 0, count - 1)
        span = j + DEGREE
        N, dN = _local_basis(ext, span, t)
        idx = (j[:, None] - DEGREE + np.arange(DEGREE + 1)) % count
        return idx, N, dN
    lo, hi = knots[DEGREE], knots[count]
    if np.any(t < lo - 1e-12) or np.any(t > hi + 1e-12):
        raise ValueError("parameter outside the knot domain")
    t = np.clip(t, lo, hi)
    span = np.searchsorted(knots, t, side="right") - 1
    span = np.clip(span, DEGREE, count - 1)
    N, dN = _local_basis(knots, span, t)
    idx = span[:, None] - DEGREE + np.arange(DEGREE + 1)
    return idx, N, dN


@dataclass(frozen=True)
class BSplineSurface:
    """Cubic surface with an ``(M, L, 3)`` control grid.

    ``orientation`` (+1/-1) multiplies du x dv so that normals face outward.
    """

    control: np.ndarray
    knots_u: np.ndarray
    knots_v: np.ndarray
    periodic_u: bool = False
    poles: bool = False
    orientation: int = 1

    def __post_init__(self):
        control = np.asarray(self.control, dtype=float)
        if control.ndim != 3 or control.shape[2] != 3:
            raise ValueError("control grid must have shape (M, L, 3)")
        ku = np.asarray(self.knots_u, dtype=float)
        kv = np.asarray(self.knots_v, dtype=float)
        m, l = control.shape[:2]
        if np.any(np.diff(ku) < 0) or np.any(np.diff(kv) < 0):
            raise ValueError("knots must be non-decreasing")
        if self.periodic_u:
            if len(ku) != m + 1 or np.any(np.diff(ku) <= 0):
                raise ValueError("periodic knots need M+1 strictly increasing breakpoints")
        elif len(ku) != m + DEGREE + 1:
            raise ValueError("knots_u length inconsistent with control count")
        if len(kv) != l + DEGREE + 1:
            raise ValueError("knots_v length inconsistent with control count")
        if m < DEGREE + 1 or l < DEGREE + 1:
            raise ValueError("at least 4 control points per direction")
        object.__setattr__(self, "control", control)
        object.__setattr__(self, "knots_u", ku)
        object.__setattr__(self, "knots_v", kv)

    @classmethod
    def closed(cls, control, knots_u=None, knots_v=None, orientation: int = 1) -> "BSplineSurface":
        """Closed membrane layout; pole rows of ``control`` are averaged to one point."""
        control = np.array(control, dtype=float)
        m, l = control.shape[:2]
        control[:, 0] = control[:, 0].mean(axis=0)
        control[:, -1] = control[:, -1].mean(axis=0)
        return cls(
            control,
            uniform_periodic_knots(m) if knots_u is None else knots_u,
            uniform_clamped_knots(l) if knots_v is None else knots_v,
            periodic_u=True,
            poles=True,
            orientation=orientation,
        )

    @classmethod
    def patch(cls, control) -> "BSplineSurface":
        control = np.asarray(control, dtype=float)
        m, l = control.shape[:2]
        return cls(control, uniform_clamped_knots(m), uniform_clamped_knots(l))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.control.shape[0], self.control.shape[1]

    def with_control(self, control) -> "BSplineSurface":
        return replace(self, control=np.asarray(control, dtype=float))

    def _rows(self, u, v):
        m, l = self.shape
        iu, Nu, dNu = basis_rows(self.knots_u, m, self.periodic_u, u)
        iv, Nv, dNv = basis_rows(self.knots_v, l, False, v)
        return iu, Nu, dNu, iv, Nv, dNv

    def derivatives(self, u, v):
        """Positions and first partials at parameter arrays ``u``, ``v``."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        v = np.atleast_1d(np.asarray(v, dtype=float))
        u, v = np.broadcast_arrays(u, v)
        iu, Nu, dNu, iv, Nv, dNv = self._rows(u.ravel(), v.ravel())
        local = self.control[iu[:, :, None], iv[:, None, :]]  # (n, 4, 4, 3)
        pos = np.einsum("na,nb,nabk->nk", Nu, Nv, local)
        du = np.einsum("na,nb,nabk->nk", dNu, Nv, local)
        dv = np.einsum("na,nb,nabk->nk", Nu, dNv, local)
        return pos, du, dv

    def points(self, u, v) -> np.ndarray:
        return self.derivatives(u, v)[0]

    def normals(self, u, v, tol: float = 1e-10):
        """Unit normals and a mask of parameters with degenerate tangents."""
        _, du, dv = self.derivatives(u, v)
        cross = self.orientation * np.cross(du, dv)
        length = np.linalg.norm(cross, axis=1)
        # squared larger tangent: a round-off-sized tangent at a pole stays degenerate
        scale = np.maximum(np.maximum(np.linalg.norm(du, axis=1), np.linalg.norm(dv, axis=1)) ** 2, 1e-300)
        degenerate = length <= tol * scale
        out = np.zeros_like(cross)
        ok = ~degenerate
        out[ok] = cross[ok] / length[ok, None]
        return out, degenerate


def evaluate(surface: BSplineSurface, u: float, v: float) -> np.ndarray:
    return surface.points(u, v)[0]


def normal(surface: BSplineSurface, u: float, v: float) -> np.ndarray:
    """Outward unit normal; at a pole, the mean normal of a small ring around it."""
    n, degenerate = surface.normals(u, v)
    if not degenerate[0]:
        return n[0]
    lo, hi = surface.knots_v[DEGREE], surface.knots_v[-DEGREE - 1]
    h = 1e-4 * (hi - lo)
    vv = min(max(v, lo + h), hi - h)
    ring_u = u + np.linspace(0.0, 1.0, 8, endpoint=False)
    if not surface.periodic_u:
        ring_u = np.clip(u + h * np.array([-1.0, 1.0]), surface.knots_u[DEGREE], surface.knots_u[-DEGREE - 1])
    ring, bad = surface.normals(ring_u, np.full(len(ring_u), vv))
    avg = ring[~bad].sum(axis=0)
    return avg / np.linalg.norm(avg)


@dataclass
class SampleGrid:
    """Surface samples laid out u-major: flat index = iu * v_n + iv."""

    params: np.ndarray
    points: np.ndarray
    normals: np.ndarray
    degenerate: np.ndarray
    shape: Tuple[int, int]


def grid_params(surface: BSplineSurface, u_n: int, v_n: int, endpoints: bool = True):
    if u_n < 2 or v_n < 2:
        raise ValueError("need at least 2 samples per direction")
    if surface.periodic_u:
        us = np.arange(u_n) / u_n
    else:
        lo, hi = surface.knots_u[DEGREE], surface.knots_u[-DEGREE - 1]
        us = np.linspace(lo, hi, u_n) if endpoints else lo + (hi - lo) * (np.arange(u_n) + 0.5) / u_n
    lo, hi = surface.knots_v[DEGREE], surface.knots_v[-DEGREE - 1]
    vs = np.linspace(lo, hi, v_n) if endpoints else lo + (hi - lo) * (np.arange(v_n) + 0.5) / v_n
    uu, vv = np.meshgrid(us, vs, indexing="ij")
    return np.column_stack([uu.ravel(), vv.ravel()])


def sample_grid(surface: BSplineSurface, u_n: int, v_n: int, endpoints: bool = True) -> SampleGrid:
    """Evaluate the surface on an equispaced parameter grid.

    A periodic ``u`` never samples the seam twice. With ``endpoints=False`` the
    non-periodic directions are sampled at cell midpoints (no pole samples).
    """
    params = grid_params(surface, u_n, v_n, endpoints)
    pos, du, dv = surface.derivatives(params[:, 0], params[:, 1])
    cross = surface.orientation * np.cross(du, dv)
    length = np.linalg.norm(cross, axis=1)
    scale = np.maximum(np.maximum(np.linalg.norm(du, axis=1), np.linalg.norm(dv, axis=1)) ** 2, 1e-300)
    degenerate = length <= 1e-10 * scale
    normals = np.zeros_like(cross)
    normals[~degenerate] = cross[~degenerate] / length[~degenerate, None]
    if np.any(degenerate):
        normals = _fill_degenerate(normals, degenerate, (u_n, v_n), surface.periodic_u)
    return SampleGrid(params, pos, normals, degenerate, (u_n, v_n))


def _fill_degenerate(normals, degenerate, shape, periodic_u):
    u_n, v_n = shape
    grid = normals.reshape(u_n, v_n, 3)
    bad = degenerate.reshape(u_n, v_n)
    out = grid.copy()
    for iu, iv in zip(*np.nonzero(bad)):
        if iv in (0, v_n - 1) and periodic_u:
            # a pole: the whole neighbouring ring contributes
            ring = 1 if iv == 0 else v_n - 2
            nb = grid[:, ring][~bad[:, ring]]
        else:
            cand = [(iu + du, iv + dv) for du, dv in ((1, 0), (-1, 0), (0, 1), (0, -1))]
            nb = []
            for a, b in cand:
                if periodic_u:
                    a %= u_n
                if 0 <= a < u_n and 0 <= b < v_n and not bad[a, b]:
                    nb.append(grid[a, b])
            nb = np.array(nb)
        if len(nb):
            s = nb.sum(axis=0)
            norm = np.linalg.norm(s)
            if norm > 0:
                out[iu, iv] = s / norm
    return out.reshape(-1, 3)


def _unknown_map(m: int, l: int, poles: bool):
    """Map each control slot (i, j) to an unknown column; pole rows share one."""
    if not poles:
        return np.arange(m * l).reshape(m, l), m * l
    cols = np.empty((m, l), dtype=int)
    cols[:, 0] = 0
    cols[:, -1] = 1
    cols[:, 1:-1] = 2 + np.arange(m * (l - 2)).reshape(m, l - 2)
    return cols, 2 + m * (l - 2)


def design_matrix(params, m, l, knots_u, knots_v, periodic_u, poles):
    params = np.asarray(params, dtype=float)
    iu, Nu, _ = basis_rows(knots_u, m, periodic_u, params[:, 0])
    iv, Nv, _ = basis_rows(knots_v, l, False, params[:, 1])
    cols, n_unknown = _unknown_map(m, l, poles)
    n = len(params)
    A = np.zeros((n, n_unknown))
    rows = np.repeat(np.arange(n), 16)
    c = cols[iu[:, :, None], iv[:, None, :]].reshape(n, 16)
    w = (Nu[:, :, None] * Nv[:, None, :]).reshape(n, 16)
    np.add.at(A, (rows, c.ravel()), w.ravel())
    return A, cols


def fit_least_squares(
    params,
    points,
    m: int,
    l: int,
    knots_u=None,
    knots_v=None,
    periodic_u: bool = False,
    poles: bool = False,
    orientation: int = 1,
    prior=None,
    damping: float = 0.0,
) -> BSplineSurface:
    """Control grid minimising the squared distance to ``points`` at fixed ``params``.

    With a ``prior`` control grid, ``damping`` (relative to the mean diagonal of
    the normal matrix) pulls each unknown towards its prior value. This keeps
    controls over sparsely sampled knot spans in place instead of letting them
    drift through the null space.
    """
    params = np.asarray(params, dtype=float).reshape(-1, 2)
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(params) != len(points):
        raise ValueError("params and points differ in length")
    if knots_u is None:
        knots_u = uniform_periodic_knots(m) if periodic_u else uniform_clamped_knots(m)
    if knots_v is None:
        knots_v = uniform_clamped_knots(l)
    need_v = l - 2 if poles else l
    if (
        len(np.unique(params[:, 0])) < m
        or len(np.unique(params[:, 1])) < need_v
    ):
        raise ValueError("insufficient samples")
    A, cols = design_matrix(params, m, l, knots_u, knots_v, periodic_u, poles)
    if len(points) < A.shape[1]:
        raise ValueError("insufficient samples")
    AtA = A.T @ A
    rhs = A.T @ points
    if prior is not None and damping > 0:
        prior = np.asarray(prior, dtype=float).reshape(m, l, 3)
        lam = damping * float(np.mean(np.diag(AtA)))
        target = np.zeros((A.shape[1], 3))
        np.add.at(target, cols.ravel(), prior.reshape(-1, 3))
        target /= np.bincount(cols.ravel(), minlength=A.shape[1])[:, None]
        AtA[np.diag_indices_from(AtA)] += lam
        rhs = rhs + lam * target
    AtA[np.diag_indices_from(AtA)] += RIDGE
    try:
        X = linalg.solve(AtA, rhs, assume_a="pos")
    except linalg.LinAlgError as exc:
        raise ValueError("insufficient samples") from exc
    return BSplineSurface(X[cols], knots_u, knots_v, periodic_u, poles, orientation)


def residual(surface: BSplineSurface, params, points) -> float:
    """Root-mean-square distance between the surface at ``params`` and ``points``."""
    params = np.asarray(params, dtype=float).reshape(-1, 2)
    diff = surface.points(params[:, 0], params[:, 1]) - np.asarray(points, dtype=float)
    return float(np.sqrt(np.mean(np.sum(diff**2, axis=1))))


def _insert_clamped(knots, ctrl, x):
    """Boehm insertion of knot ``x`` into a clamped curve family.

    ``ctrl`` has control points on axis 0.
    """
    p = DEGREE
    n = len(ctrl)
    k = int(np.searchsorted(knots, x, side="right") - 1)
    k = min(max(k, p), n - 1)
    new = np.empty((n + 1,) + ctrl.shape[1:])
    new[: k - p + 1] = ctrl[: k - p + 1]
    new[k + 1 :] = ctrl[k:]
    for i in range(k - p + 1, k + 1):
        a = (x - knots[i]) / (knots[i + p] - knots[i])
        new[i] = a * ctrl[i] + (1 - a) * ctrl[i - 1]
    return np.insert(knots, k + 1, x), new


def _insert_periodic(breaks, ctrl, x):
    p = DEGREE
    m = len(ctrl)
    ext = _periodic_extension(breaks)

    def t(i):
        return ext[i + p]

    j = int(np.searchsorted(breaks, x, side="right") - 1)
    new = []
    for i in range(j - p + 1, j + 1):
        a = (x - t(i)) / (t(i + p) - t(i))
        new.append(a * ctrl[i % m] + (1 - a) * ctrl[(i - 1) % m])
    # new indices j-2..j from blending, then j+1 .. j-3+M+1 copy old j .. j+M-3
    rest = [ctrl[i % m] for i in range(j, j + m - p + 1)]
    seq = np.array(new + rest)
    start = (j - p + 1) % (m + 1)
    out = np.empty((m + 1,) + ctrl.shape[1:])
    out[(start + np.arange(m + 1)) % (m + 1)] = seq
    return np.insert(breaks, j + 1, x), out


def spans(surface: BSplineSurface, direction: str) -> np.ndarray:
    """Non-empty knot intervals of one parametric direction as (lo, hi) rows."""
    if direction == "u":
        knots = surface.knots_u if surface.periodic_u else np.unique(surface.knots_u)
    elif direction == "v":
        knots = np.unique(surface.knots_v)
    else:
        raise ValueError("direction must be 'u' or 'v'")
    return np.column_stack([knots[:-1], knots[1:]])


def refine(surface: BSplineSurface, direction: str, insert_index: int) -> BSplineSurface:
    """Add one control row (``u``) or column (``v``) by inserting a knot at the
    midpoint of interval ``insert_index``; the geometry is unchanged."""
    iv = spans(surface, direction)
    if not 0 <= insert_index < len(iv):
        raise IndexError(f"interval {insert_index} out of range [0, {len(iv)})")
    x = 0.5 * (iv[insert_index, 0] + iv[insert_index, 1])
    if direction == "u":
        if surface.periodic_u:
            knots, ctrl = _insert_periodic(surface.knots_u, surface.control, x)
        else:
            knots, ctrl = _insert_clamped(surface.knots_u, surface.control, x)
        return replace(surface, control=ctrl, knots_u=knots)
    knots, ctrl = _insert_clamped(surface.knots_v, np.swapaxes(surface.control, 0, 1), x)
    return replace(surface, control=np.swapaxes(ctrl, 0, 1).copy(), knots_v=knots)


def div_count(q: int, alpha: float = 2.0, div_min: int = 4) -> int:
    """Samples per direction for ``q`` control points (half-up rounding)."""
    return int(max(div_min, np.floor(alpha * (q - 1) + 1 + 0.5)))


@dataclass
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray
    vertex_normals: np.ndarray = field(default=None)

    def face_normals(self) -> np.ndarray:
        v = self.vertices[self.faces]
        n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        length = np.linalg.norm(n, axis=1, keepdims=True)
        return np.divide(n, length, out=np.zeros_like(n), where=length > 0)

    def face_areas(self) -> np.ndarray:
        v = self.vertices[self.faces]
        return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)

    def signed_volume(self) -> float:
        v = self.vertices[self.faces]
        return float(np.einsum("ij,ij->i", v[:, 0], np.cross(v[:, 1], v[:, 2])).sum() / 6.0)

    def edges(self) -> np.ndarray:
        f = self.faces
        return np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])

    def is_watertight(self) -> bool:
        e = np.sort(self.edges(), axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        return bool(np.all(counts == 2))

    def euler_characteristic(self) -> int:
        e = np.unique(np.sort(self.edges(), axis=1), axis=0)
        used = len(np.unique(self.faces))
        return int(used - len(e) + len(self.faces))


def to_mesh(surface: BSplineSurface, u_n: int, v_n: int) -> TriangleMesh:
    """Triangulate a sample grid: two triangles per quad, periodic seam stitched,
    pole rows collapsed into triangle fans. Closed meshes face outward."""
    if u_n < 3 or v_n < 3:
        raise ValueError("need at least 3 samples per direction")
    grid = sample_grid(surface, u_n, v_n, endpoints=True)
    pts = grid.points.reshape(u_n, v_n, 3)
    nrm = grid.normals.reshape(u_n, v_n, 3)
    wrap = surface.periodic_u
    cols = u_n if wrap else u_n - 1

    def quad_faces(vid):
        faces = []
        for a in range(cols):
            b = (a + 1) % u_n
            for j in range(v_n - 1):
                q = (vid[a, j], vid[b, j], vid[b, j + 1], vid[a, j + 1])
                for tri in ((q[0], q[1], q[2]), (q[0], q[2], q[3])):
                    if len(set(tri)) == 3:
                        faces.append(tri)
        return faces

    if surface.poles:
        vid = np.empty((u_n, v_n), dtype=int)
        vid[:, 0] = 0
        vid[:, -1] = 1
        vid[:, 1:-1] = 2 + np.arange(u_n * (v_n - 2)).reshape(u_n, v_n - 2)
        verts = np.concatenate([pts[:1, 0], pts[:1, -1], pts[:, 1:-1].reshape(-1, 3)])
        vn = np.concatenate([nrm[:1, 0], nrm[:1, -1], nrm[:, 1:-1].reshape(-1, 3)])
    else:
        vid = np.arange(u_n * v_n).reshape(u_n, v_n)
        verts = pts.reshape(-1, 3)
        vn = nrm.reshape(-1, 3)
    faces = np.array(quad_faces(vid), dtype=np.int64)
    mesh = TriangleMesh(verts, faces, vn)
    # orient faces to agree with the surface normals
    fn = mesh.face_normals()
    agree = np.einsum("ij,ij->i", fn, vn[faces].mean(axis=1))
    if np.sum(agree) < 0:
        mesh = TriangleMesh(verts, faces[:, ::-1].copy(), vn)
    return mesh
