"""Occupancy only, occupancy plus intensity, and intensity only, on a
white sphere with dark jittered duplicates.
"""

import argparse
from dataclasses import replace

import numpy as np

from sepmembrane.membrane import MembraneConfig, reconstruct
from sepmembrane.metrics import fscore, sample_mesh
from sepmembrane.separability import SeparabilityWeights
from sepmembrane.synth import add_duplicated_outliers, colored_sphere

CONFIG = MembraneConfig(search_extents=(0.15, 0.1, 0.1), n_splits=32, adaptive=False, init_grid=(8, 8), max_grid=(8, 8))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sigmas", default="0.01,0.025")
    a = ap.parse_args()
    d = np.random.default_rng(1).normal(size=(100_000, 3))
    gt = d / np.linalg.norm(d, axis=1, keepdims=True)
    weights = (
        ("spatial", SeparabilityWeights()),
        ("point+intensity", SeparabilityWeights(1.0, (("intensity", 1.0),))),
        ("intensity", SeparabilityWeights(0.0, (("intensity", 1.0),))),
    )
    print(f"{'sigma':>6} " + " ".join(f"{n:>16}" for n, _ in weights))
    for sigma in (float(s) for s in a.sigmas.split(",")):
        cloud = add_duplicated_outliers(colored_sphere(1000, seed=7), sigma, seed=3)
        row = []
        for _, w in weights:
            _, mesh, _ = reconstruct(cloud, replace(CONFIG, weights=w))
            pts, _ = sample_mesh(mesh, 100_000, seed=0)
            row.append(fscore(pts, gt, 0.01 * 2 * np.sqrt(3))[0])
        print(f"{sigma:6.3f} " + " ".join(f"{f:16.3f}" for f in row))


if __name__ == "__main__":
    main()
