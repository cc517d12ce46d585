"""Brute-force reference implementations used to check the library."""

import math

import numpy as np


def knn_brute(points, queries, k):
    """(distances, ids) of the k nearest points to each query, by full sort."""
    points = np.asarray(points, dtype=float)
    queries = np.asarray(queries, dtype=float)
    d = np.sqrt(((queries[:, None, :] - points[None, :, :]) ** 2).sum(axis=2))
    order = np.argsort(d, axis=1, kind="stable")[:, :k]
    return np.take_along_axis(d, order, axis=1), order


def mean_knn_brute(points, i, k):
    """Mean distance from point i to its k nearest other points."""
    points = np.asarray(points, dtype=float)
    d = []
    for j in range(len(points)):
        if j != i:
            d.append(float(np.sqrt(np.sum((points[i] - points[j]) ** 2))))
    d.sort()
    return sum(d[:k]) / k


def fisher_ratio(values1, values2):
    """Between-class over total sum of squares, written out term by term."""
    allv = list(values1) + list(values2)
    n = len(allv)
    mean = sum(allv) / n
    total = sum((x - mean) ** 2 for x in allv)
    if total == 0:
        return 0.0
    m1 = sum(values1) / len(values1)
    m2 = sum(values2) / len(values2)
    between = len(values1) * (m1 - mean) ** 2 + len(values2) * (m2 - mean) ** 2
    return between / total


def binary_arrays(o1, b1, o2, b2):
    """Explicit occupancy sequences: 1 per actual point, 0 per empty-space point."""
    return [1.0] * o1 + [0.0] * b1, [1.0] * o2 + [0.0] * b2


def inside_brute(points, center, frame, extents):
    out = []
    for p in np.asarray(points, dtype=float):
        ok = True
        for axis, ext in zip(frame, extents):
            if abs(float(np.dot(p - center, axis))) > ext / 2:
                ok = False
        out.append(ok)
    return np.array(out)


def chamfer_brute(a, b):
    def one_way(x, y):
        dists = [min(float(np.sqrt(np.sum((p - q) ** 2))) for q in y) for p in x]
        return math.fsum(dists) / len(x)

    return 0.5 * one_way(a, b) + 0.5 * one_way(b, a)


def fscore_brute(a, b, tau):
    def frac(x, y):
        hits = 0
        for p in x:
            if min(float(np.sqrt(np.sum((p - q) ** 2))) for q in y) <= tau:
                hits += 1
        return hits / len(x)

    p, r = frac(a, b), frac(b, a)
    f = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return f, p, r


def cox_de_boor(knots, i, p, t):
    """Textbook recursion with half-open spans (last knot not special-cased)."""
    if p == 0:
        return 1.0 if knots[i] <= t < knots[i + 1] else 0.0
    a = 0.0
    if knots[i + p] != knots[i]:
        a = (t - knots[i]) / (knots[i + p] - knots[i]) * cox_de_boor(knots, i, p - 1, t)
    b = 0.0
    if knots[i + p + 1] != knots[i + 1]:
        b = (knots[i + p + 1] - t) / (knots[i + p + 1] - knots[i + 1]) * cox_de_boor(knots, i + 1, p - 1, t)
    return a + b


def surface_double_sum(control, knots_u, knots_v, u, v):
    """Tensor-product sum over every control point (clamped patch)."""
    m, l = control.shape[:2]
    out = np.zeros(3)
    for i in range(m):
        nu = cox_de_boor(knots_u, i, 3, u)
        if nu == 0:
            continue
        for j in range(l):
            out += nu * cox_de_boor(knots_v, j, 3, v) * control[i, j]
    return out


def sphere_points(n, seed=1):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)
