"""Acceptance criteria 1-13, one test each, each printing a PASS/FAIL line."""

import time
from dataclasses import replace

import numpy as np

from oracles import binary_arrays, chamfer_brute, fisher_ratio, fscore_brute
from test_geometry import random_rotation
from sepmembrane import cli
from sepmembrane.bspline import (
    BSplineSurface,
    basis_rows,
    div_count,
    fit_least_squares,
    refine,
    residual,
    sample_grid,
    spans,
    uniform_clamped_knots,
    uniform_periodic_knots,
)
from sepmembrane.geometry import Cuboid, PointCloud
from sepmembrane.membrane import MembraneConfig, reconstruct, static_grid_config
from sepmembrane.metrics import chamfer, fscore, sample_mesh
from sepmembrane.separability import (
    RegionCounts,
    SeparabilityWeights,
    attribute_separability,
    max_split_separability,
    point_separability,
    separability_map,
)
from sepmembrane.synth import (
    PlaneSpec,
    add_duplicated_outliers,
    colored_sphere,
    gen_colored_plane,
    gen_ellipsoid,
    gen_sphere,
)

# tuned solver settings shared by the reconstruction criteria
TUNED = dict(density_mode="per-region", search_extents=(0.15, 0.1, 0.1), search_scale=4.0, n_splits=32)
SPHERE = MembraneConfig(**TUNED, adaptive=False, init_grid=(8, 8), max_grid=(8, 8))
BUMPS = (((0.0, 0.0, 1.0), 0.4, 0.3), ((1.0, 0.0, 0.0), 0.35, 0.3))


def unit_sphere_samples(n=100_000, seed=1):
    d = np.random.default_rng(seed).normal(size=(n, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def sphere_scores(mesh, n=100_000):
    gt = unit_sphere_samples(n)
    pts, _ = sample_mesh(mesh, n, seed=0)
    tau = 0.01 * float(np.linalg.norm(gt.max(axis=0) - gt.min(axis=0)))
    return chamfer(pts, gt), fscore(pts, gt, tau)[0]


def test_criterion_01_count_form_equivalence(verdict):
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(10_000):
        n1, n2 = rng.integers(1, 65, size=2)
        o1, o2 = rng.integers(0, n1 + 1), rng.integers(0, n2 + 1)
        fast = point_separability(RegionCounts(int(o1), int(n1 - o1)), RegionCounts(int(o2), int(n2 - o2)))
        a, b = binary_arrays(int(o1), int(n1 - o1), int(o2), int(n2 - o2))
        worst = max(worst, abs(fast - attribute_separability(a, b)))
    # the oracle loop above dominates; time the count form alone
    t0 = time.perf_counter()
    for _ in range(10_000):
        point_separability(RegionCounts(3, 5), RegionCounts(7, 1))
    count_time = time.perf_counter() - t0
    ok = worst <= 1e-12 and count_time < 1.0
    verdict(1, "count-form equivalence", ok, f"max |diff| {worst:.2e}, 10^4 count-form calls {count_time:.2f}s")


def test_criterion_02_range_and_symmetry(verdict):
    rng = np.random.default_rng(2)
    bad_range = bad_sym = 0
    for _ in range(10_000):
        if rng.random() < 0.5:
            a, b = rng.normal(size=rng.integers(1, 20)), rng.normal(size=rng.integers(1, 20)) * rng.random() * 3
            e1, e2 = attribute_separability(a, b), attribute_separability(b, a)
            ref = fisher_ratio(list(a), list(b))
            bad_range += not (0 <= e1 <= 1) or abs(e1 - ref) > 1e-9
        else:
            c1 = RegionCounts(*(int(x) for x in rng.integers(0, 40, size=2)))
            c2 = RegionCounts(*(int(x) for x in rng.integers(0, 40, size=2)))
            if c1.n == 0 or c2.n == 0:
                continue
            e1, e2 = point_separability(c1, c2), point_separability(c2, c1)
            bad_range += not 0 <= e1 <= 1
        bad_sym += abs(e1 - e2) > 1e-12
    verdict(2, "range and symmetry", bad_range == 0 and bad_sym == 0, f"{bad_range} range, {bad_sym} symmetry violations")


def test_criterion_03_boundary_localization(verdict):
    rng = np.random.default_rng(3)
    depth, n_splits = 1.0, 8
    step = depth / (n_splits + 1)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        face = rng.uniform(-0.3, 0.3)
        pts = rng.uniform(-1, 1, size=(6000, 3))
        pts[:, 2] = rng.uniform(-1, face, size=len(pts))
        R, t = random_rotation(rng), rng.normal(size=3)
        cloud = PointCloud(pts @ R.T + t)
        cuboid = Cuboid.from_normal(t, R[:, 2], (depth, 0.5, 0.5))
        res = max_split_separability(cloud, cuboid, n_splits, density_mode="per-region")
        worst = max(worst, abs(res.split_offset - face))
    elapsed = time.perf_counter() - t0
    ok = worst <= step and elapsed < 10
    verdict(3, "boundary localization", ok, f"worst error {worst:.3f} (step {step:.3f}), {elapsed:.1f}s")


def test_criterion_04_plane_maps(verdict):
    spec = PlaneSpec()
    cloud = gen_colored_plane(spec)
    window = (0.2, 0.2, 0.2)
    # cells whose windows stay on the plane (the outline is a boundary of its own)
    g = np.arange(-0.7, 0.7 + 1e-9, 0.05)
    xx, yy = np.meshgrid(g, g, indexing="ij")
    cells = np.column_stack([xx.ravel(), yy.ravel(), np.zeros(xx.size)])
    runs = [
        ("colour/intensity", (1, 0, 0), SeparabilityWeights(0.0, (("intensity", 1.0),)), "per-region", 0, spec.color_split),
        ("density/density", (0, 1, 0), SeparabilityWeights(0.0, (("density", 1.0),)), "per-region", 1, spec.density_split),
        ("density/point", (0, 1, 0), SeparabilityWeights(), "global", 1, spec.density_split),
    ]
    details, ok = [], True
    for name, direction, weights, mode, axis, boundary in runs:
        eta = separability_map(cloud, cells, direction, window, weights, mode)
        top = cells[eta >= np.quantile(eta, 0.95)]
        dist = float(np.max(np.abs(top[:, axis] - boundary)))
        ok &= dist <= 2 * window[0]
        details.append(f"{name} {dist:.2f}")
    verdict(4, "separability map boundaries", ok, ", ".join(details) + f" (limit {2 * window[0]:.2f})")


def test_criterion_05_clean_sphere(verdict):
    cloud = gen_sphere(1000, seed=7)
    t0 = time.perf_counter()
    _, mesh, trace = reconstruct(cloud, SPHERE)
    elapsed = time.perf_counter() - t0
    cd, f = sphere_scores(mesh)
    ok = cd < 0.02 and f > 0.95 and elapsed < 60
    verdict(5, "clean sphere", ok, f"Chamfer {cd:.4f}, F@1% {f:.3f}, {len(trace)} iterations, {elapsed:.1f}s")


def test_criterion_06_outlier_trend(verdict):
    base = gen_sphere(1000, seed=7)
    scores = {}
    for sigma in (0.0, 0.1, 0.25, 0.5):
        cloud = add_duplicated_outliers(base, sigma, seed=3) if sigma > 0 else base
        _, mesh, _ = reconstruct(cloud, SPHERE)
        scores[sigma] = sphere_scores(mesh)[1]
    rel = abs(scores[0.25] - scores[0.0]) / scores[0.0]
    detail = ", ".join(f"F(σ={s}) {f:.3f}" for s, f in scores.items()) + f"; relative drop at 0.25 {rel:.1%}"
    verdict(6, "outlier robustness trend", rel <= 0.10, detail)


def test_criterion_07_dynamic_adjustment(verdict):
    cloud = gen_ellipsoid(3000, bumps=BUMPS, seed=0)
    config = MembraneConfig(**TUNED, refine_increment=(2, 2))
    runs = {}
    for name, cfg in (
        ("adaptive", config),
        ("static-small", static_grid_config(config, config.init_grid)),
        ("static-max", static_grid_config(config, config.max_grid)),
    ):
        t0 = time.perf_counter()
        surface, _, trace = reconstruct(cloud, cfg)
        runs[name] = (trace.records[-1].chamfer, time.perf_counter() - t0, surface.shape)
    cd_ok = runs["adaptive"][0] <= runs["static-small"][0]
    ratio = runs["adaptive"][1] / runs["static-max"][1]
    detail = "; ".join(f"{k} {s[0]}x{s[1]} Chamfer {c:.4f} in {t:.1f}s" for k, (c, t, s) in runs.items())
    verdict(7, "dynamic adjustment benefit", cd_ok and ratio <= 0.7, detail + f"; time ratio {ratio:.2f}")


def test_criterion_08_div_count_table(verdict):
    got = (div_count(8, 2, 4), div_count(2, 2, 10), div_count(1, 2, 1))
    verdict(8, "div_count table", got == (15, 10, 1), f"{got}")


def test_criterion_09_bspline_suite(verdict):
    rng = np.random.default_rng(9)
    t = rng.random(1000)
    pou = 0.0
    for periodic in (False, True):
        knots = uniform_periodic_knots(9) if periodic else uniform_clamped_knots(9)
        _, N, _ = basis_rows(knots, 9, periodic, t)
        pou = max(pou, float(np.max(np.abs(N.sum(axis=1) - 1))))
    patch = BSplineSurface.patch(rng.normal(size=(6, 5, 3)))
    A, b = rng.normal(size=(3, 3)), rng.normal(size=3)
    u, v = rng.random((2, 100))
    affine = float(np.max(np.abs(patch.with_control(patch.control @ A.T + b).points(u, v) - (patch.points(u, v) @ A.T + b))))
    grid = sample_grid(patch, 20, 18)
    fit = fit_least_squares(grid.params, grid.points, *patch.shape)
    fit_res = residual(fit, grid.params, grid.points)
    closed = init_closed(rng)
    refine_err = 0.0
    for s in (patch, closed):
        for direction in ("u", "v"):
            r = refine(s, direction, len(spans(s, direction)) // 2)
            refine_err = max(refine_err, float(np.max(np.abs(r.points(u, v) - s.points(u, v)))))
    ok = pou <= 1e-12 and affine <= 1e-9 and fit_res < 1e-9 and refine_err < 1e-9
    detail = f"unity {pou:.1e}, affine {affine:.1e}, fit residual {fit_res:.1e}, refine {refine_err:.1e}"
    verdict(9, "B-spline suite", ok, detail)


def init_closed(rng):
    from sepmembrane.membrane import init_octagon

    return init_octagon(PointCloud(rng.normal(size=(200, 3))), grid_dims=(8, 5))


def test_criterion_10_metric_oracles(verdict):
    rng = np.random.default_rng(10)
    mismatches = 0
    monotone = True
    for _ in range(5):
        a, b = rng.normal(size=(100, 3)), rng.normal(size=(100, 3))
        mismatches += chamfer(a, b) != chamfer_brute(a, b)
        prev = -1.0
        for tau in np.linspace(0.05, 1.5, 15):
            got = fscore(a, b, tau)
            mismatches += got != fscore_brute(a, b, tau)
            monotone &= got[0] >= prev
            prev = got[0]
    verdict(10, "metric oracles", mismatches == 0 and monotone, f"{mismatches} mismatches, monotone={monotone}")


def test_criterion_11_eval_harness(verdict, tmp_path, capsys):
    # reference only: Table I needs external meshes; check the harness scores any file pair
    gt, pred = tmp_path / "gt.ply", tmp_path / "pred.xyz"
    assert cli.main(["synth", "sphere", "-n", "2000", "--seed", "1", "-o", str(gt)]) == 0
    assert cli.main(["synth", "sphere", "-n", "2000", "--seed", "2", "-o", str(pred), "--corrupt", "gaussian_noise:0.005"]) == 0
    capsys.readouterr()
    code = cli.main(["eval", "--pred", str(pred), "--gt", str(gt), "--samples", "2000"])
    out = capsys.readouterr().out
    ok = code == 0 and "normal_consistency" in out
    verdict(11, "eval harness (Table I reference only)", ok, out.splitlines()[0] if out else f"exit {code}")


def test_criterion_12_attribute_ablation(verdict):
    cloud = add_duplicated_outliers(colored_sphere(1000, seed=7), 0.025, seed=3)
    scores = {}
    for name, weights in (
        ("spatial", SeparabilityWeights()),
        ("point+intensity", SeparabilityWeights(1.0, (("intensity", 1.0),))),
        ("intensity", SeparabilityWeights(0.0, (("intensity", 1.0),))),
    ):
        _, mesh, _ = reconstruct(cloud, replace(SPHERE, weights=weights))
        scores[name] = sphere_scores(mesh)[1]
    ok = scores["point+intensity"] >= scores["spatial"] and scores["intensity"] >= scores["spatial"]
    verdict(12, "attribute ablation", ok, ", ".join(f"F {k} {v:.3f}" for k, v in scores.items()))


def test_criterion_13_determinism(verdict, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("deterministic = true\nmax_iterations = 8\ninit_grid = 8,5\n")
    src = tmp_path / "s.ply"
    assert cli.main(["synth", "sphere", "-n", "1000", "--seed", "7", "-o", str(src)]) == 0
    blobs = []
    for i in range(2):
        mesh, trace = tmp_path / f"m{i}.obj", tmp_path / f"t{i}.csv"
        assert cli.main(["reconstruct", str(src), "-o", str(mesh), "--config", str(cfg), "--trace", str(trace)]) == 0
        blobs.append((mesh.read_bytes(), trace.read_bytes()))
    ok = blobs[0] == blobs[1]
    verdict(13, "determinism", ok, f"mesh {len(blobs[0][0])} bytes, trace {len(blobs[0][1])} bytes, identical={ok}")
