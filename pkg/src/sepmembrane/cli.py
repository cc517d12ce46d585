"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

import numpy as np

from . import io
from .membrane import reconstruct
from .metrics import evaluate
from .separability import POINT_ONLY, SeparabilityWeights, separability_map
from .synth import CORRUPTION_KINDS, CorruptionSpec, PlaneSpec, corrupt, gen_colored_plane, gen_sphere

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def parse_corruption(text: str, seed: int = 0) -> CorruptionSpec:
    """``kind`` or ``kind:sigma`` or ``kind:sigma=..,ratio=..,seed=..,blobs=..``."""
    kind, _, params = text.partition(":")
    if kind not in CORRUPTION_KINDS:
        raise UsageError(f"unknown corruption {kind!r}; choose from {', '.join(CORRUPTION_KINDS)}")
    kw = {"seed": seed}
    for i, item in enumerate(p for p in params.split(",") if p.strip()):
        key, eq, value = item.partition("=")
        if not eq:
            if i:
                raise UsageError(f"bad corruption parameter {item!r}")
            key, value = "sigma", key
        key = key.strip()
        if key not in ("sigma", "ratio", "seed", "blobs"):
            raise UsageError(f"unknown corruption parameter {key!r}")
        try:
            kw[key] = int(value) if key in ("seed", "blobs") else float(value)
        except ValueError:
            raise UsageError(f"bad corruption value {item!r}") from None
    try:
        return CorruptionSpec(kind, **kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _parse_weights(text):
    if text is None:
        return POINT_ONLY
    point, attrs = 1.0, []
    for item in text.split(","):
        name, eq, value = item.partition("=")
        if not eq:
            raise UsageError(f"bad weight {item!r}; expected name=value")
        try:
            w = float(value)
        except ValueError:
            raise UsageError(f"bad weight {item!r}") from None
        if name.strip() == "point":
            point = w
        else:
            attrs.append((name.strip(), w))
    try:
        return SeparabilityWeights(point, tuple(attrs))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sepmembrane", description="Separability membrane surface reconstruction")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    r = sub.add_parser("reconstruct", help="fit a closed membrane to a point cloud")
    r.add_argument("input")
    r.add_argument("-o", "--output", required=True, help="mesh path (.obj or .ply)")
    r.add_argument("--config", help="key=value configuration file")
    r.add_argument("--trace", help="write the per-iteration trace CSV here")

    s = sub.add_parser("sepmap", help="separability map evaluated at every cloud point")
    s.add_argument("input")
    s.add_argument("-o", "--output", required=True, help="CSV with x,y,z,eta")
    s.add_argument("--direction", required=True, help="x,y,z")
    s.add_argument("--window", required=True, help="depth,height,width (absolute units)")
    s.add_argument("--weights", help="e.g. point=1,intensity=0.5")
    s.add_argument("--density-mode", default="per-region", choices=("global", "per-region"))
    s.add_argument("-k", type=int, default=8)

    g = sub.add_parser("synth", help="write a synthetic cloud")
    g.add_argument("shape", choices=("sphere", "plane"))
    g.add_argument("-o", "--output", required=True)
    g.add_argument("-n", type=int, default=1000, help="sphere point count")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--spacing", type=float, default=PlaneSpec.spacing, help="plane grid spacing")
    g.add_argument("--corrupt", action="append", default=[], help="kind[:sigma | :key=value,...]")

    e = sub.add_parser("eval", help="score a prediction against a reference")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--tau-pct", type=float, default=1.0)
    e.add_argument("--samples", type=int, default=30000)
    e.add_argument("--seed", type=int, default=0)
    return p


def _load_for_eval(path):
    if io.is_mesh_file(path):
        return io.read_mesh(path)
    return io.read_cloud(path).positions


def _cmd_reconstruct(a):
    cloud = io.read_cloud(a.input)
    run = io.read_run_config(a.config) if a.config else io.RunConfig()
    try:
        _, mesh, trace = reconstruct(cloud, run.membrane)
    except ValueError as exc:
        if str(exc) in ("degenerate initialization", "need at least 7 points"):
            raise
        raise FloatingPointError(str(exc)) from exc
    io.write_mesh(mesh, a.output)
    trace_path = a.trace or run.trace
    if trace_path:
        io.write_trace(trace, trace_path)
    last = trace.records[-1]
    print(f"iterations={len(trace)} grid={last.M}x{last.L} eta_g={last.eta_g:.6f} chamfer={last.chamfer:.6f}")


def _cmd_sepmap(a):
    try:
        direction = np.asarray(io.parse_vector(a.direction))
        window = io.parse_vector(a.window)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if np.linalg.norm(direction) == 0 or min(window) <= 0:
        raise UsageError("direction must be non-zero and window extents positive")
    cloud = io.read_cloud(a.input)
    weights = _parse_weights(a.weights)
    missing = [n for n in weights.active_attributes if n not in cloud.attributes]
    if missing:
        raise ValueError(f"cloud has no attribute(s) {', '.join(missing)}")
    eta = separability_map(cloud, cloud.positions, direction, window, weights, a.density_mode, a.k)
    io.write_sepmap(cloud.positions, eta, a.output)
    print(f"points={len(eta)} eta_max={eta.max():.6f}")


def _cmd_synth(a):
    if a.shape == "sphere":
        cloud = gen_sphere(a.n, seed=a.seed)
    else:
        cloud = gen_colored_plane(replace(PlaneSpec(), spacing=a.spacing), seed=a.seed)
    for i, text in enumerate(a.corrupt):
        cloud = corrupt(cloud, parse_corruption(text, seed=a.seed + i + 1))
    io.write_cloud(cloud, a.output)
    print(f"points={len(cloud)}")


def _cmd_eval(a):
    if a.tau_pct <= 0:
        raise UsageError("--tau-pct must be positive")
    pred = _load_for_eval(a.pred)
    gt = _load_for_eval(a.gt)
    report = evaluate(pred, gt, tau_pct=a.tau_pct, n_samples=a.samples, seed=a.seed)
    d = report.as_dict()
    print(json.dumps(d, sort_keys=True))
    width = max(len(k) for k in d)
    for k, v in d.items():
        print(f"{k:<{width}}  {v:.6f}")


_COMMANDS = {"reconstruct": _cmd_reconstruct, "sepmap": _cmd_sepmap, "synth": _cmd_synth, "eval": _cmd_eval}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        _COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
