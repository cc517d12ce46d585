"""Edge-filter maps on a plane with a colour step and a density step.

Prints a coarse text heat map per weight setting and, with --out, writes
x,y,z,eta CSV files for plotting.
"""

import argparse

import numpy as np

from sepmembrane.io import write_sepmap
from sepmembrane.separability import SeparabilityWeights, separability_map
from sepmembrane.synth import PlaneSpec, gen_colored_plane

SHADES = " .:-=+*#%@"


def text_map(eta, n):
    rows = eta.reshape(n, n).T[::-1]  # y up
    return "\n".join("".join(SHADES[min(9, int(v * 10))] for v in row) for row in rows)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--window", type=float, default=0.2)
    ap.add_argument("--cells", type=int, default=36)
    ap.add_argument("--out", help="prefix for CSV output")
    a = ap.parse_args()

    spec = PlaneSpec()
    cloud = gen_colored_plane(spec)
    print(f"plane: {len(cloud)} points, colour step at x={spec.color_split}, density step at y={spec.density_split}")
    g = np.linspace(-0.9, 0.9, a.cells)
    xx, yy = np.meshgrid(g, g, indexing="ij")
    cells = np.column_stack([xx.ravel(), yy.ravel(), np.zeros(xx.size)])
    w = (a.window,) * 3
    runs = [
        ("intensity, filter along x", (1, 0, 0), SeparabilityWeights(0.0, (("intensity", 1.0),)), "per-region"),
        ("density channel, filter along y", (0, 1, 0), SeparabilityWeights(0.0, (("density", 1.0),)), "per-region"),
        ("occupancy (global density), filter along y", (0, 1, 0), SeparabilityWeights(), "global"),
    ]
    for name, direction, weights, mode in runs:
        eta = separability_map(cloud, cells, direction, w, weights, mode)
        print(f"\n{name}: max {eta.max():.3f}")
        print(text_map(eta, a.cells))
        if a.out:
            path = f"{a.out}_{name.split(',')[0].split()[0]}.csv"
            write_sepmap(cells, eta, path)
            print(f"wrote {path}")


if __name__ == "__main__":
    main()
