"""Point-cloud and mesh files, and the flat ``key=value`` run configuration.

Clouds: PLY (ascii, binary little/big endian), OBJ vertex lines, XYZ text.
Meshes: OBJ and PLY. Text formats write coordinates with 17 significant
digits, so text round trips are exact in practice.
"""

from __future__ import annotations

import dataclasses
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .bspline import TriangleMesh
from .geometry import PointCloud
from .membrane import MembraneConfig
from .separability import SeparabilityWeights

log = logging.getLogger(__name__)

CLOUD_EXTENSIONS = (".ply", ".obj", ".xyz", ".txt")
MESH_EXTENSIONS = (".ply", ".obj")


class FormatError(ValueError):
    """Malformed or unsupported file; ``line`` is 1-based when known."""

    def __init__(self, path, message, line=None):
        self.path, self.line = str(path), line
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")


def _ext(path) -> str:
    return os.path.splitext(str(path))[1].lower()


# ---------------------------------------------------------------- PLY

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


@dataclass
class _Element:
    name: str
    count: int
    props: list = field(default_factory=list)  # (name, type) or (name, (count_type, item_type))


def _parse_ply_header(path, fh):
    first = fh.readline()
    if first.strip() != b"ply":
        raise FormatError(path, "missing 'ply' magic", 1)
    fmt = None
    elements = []
    lineno = 1
    while True:
        raw = fh.readline()
        lineno += 1
        if not raw:
            raise FormatError(path, "header not terminated by end_header", lineno)
        words = raw.decode("ascii", errors="replace").split()
        if not words or words[0] in ("comment", "obj_info"):
            continue
        if words[0] == "end_header":
            break
        if words[0] == "format":
            if len(words) < 2 or words[1] not in ("ascii", "binary_little_endian", "binary_big_endian"):
                raise FormatError(path, f"unsupported format line {raw.strip()!r}", lineno)
            fmt = words[1]
        elif words[0] == "element":
            try:
                elements.append(_Element(words[1], int(words[2])))
            except (IndexError, ValueError):
                raise FormatError(path, "bad element line", lineno) from None
        elif words[0] == "property":
            if not elements:
                raise FormatError(path, "property before element", lineno)
            try:
                if words[1] == "list":
                    elements[-1].props.append((words[4], (_PLY_TYPES[words[2]], _PLY_TYPES[words[3]])))
                else:
                    elements[-1].props.append((words[2], _PLY_TYPES[words[1]]))
            except (IndexError, KeyError):
                raise FormatError(path, f"bad property line {raw.strip()!r}", lineno) from None
        else:
            raise FormatError(path, f"unexpected header keyword {words[0]!r}", lineno)
    if fmt is None:
        raise FormatError(path, "missing format line")
    return fmt, elements, lineno


def _read_ply(path) -> Dict[str, dict]:
    """Element name -> {property: array}; list properties become lists of arrays."""
    with open(path, "rb") as fh:
        fmt, elements, lineno = _parse_ply_header(path, fh)
        body = fh.read()
    out = {}
    if fmt == "ascii":
        lines = body.decode("ascii", errors="replace").splitlines()
        pos = 0
        for el in elements:
            data = {name: [] for name, _ in el.props}
            for _ in range(el.count):
                while pos < len(lines) and not lines[pos].strip():
                    pos += 1
                if pos >= len(lines):
                    raise FormatError(path, f"expected {el.count} {el.name} rows", lineno + pos + 1)
                words = lines[pos].split()
                at = lineno + pos + 1
                pos += 1
                try:
                    k = 0
                    for name, typ in el.props:
                        if isinstance(typ, tuple):
                            n = int(words[k])
                            data[name].append(np.array(words[k + 1 : k + 1 + n], dtype=typ[1]))
                            if len(data[name][-1]) != n:
                                raise IndexError
                            k += 1 + n
                        else:
                            data[name].append(float(words[k]))
                            k += 1
                except (IndexError, ValueError):
                    raise FormatError(path, f"malformed {el.name} row", at) from None
                if k != len(words):
                    raise FormatError(path, f"malformed {el.name} row", at)
            out[el.name] = {
                name: (data[name] if isinstance(typ, tuple) else np.asarray(data[name], dtype=float))
                for name, typ in el.props
            }
        return out
    order = "<" if fmt == "binary_little_endian" else ">"
    offset = 0
    for el in elements:
        if all(not isinstance(t, tuple) for _, t in el.props):
            dtype = np.dtype([(name, order + t) for name, t in el.props])
            size = dtype.itemsize * el.count
            if offset + size > len(body):
                raise FormatError(path, f"truncated binary {el.name} data")
            arr = np.frombuffer(body, dtype=dtype, count=el.count, offset=offset)
            offset += size
            out[el.name] = {name: arr[name].astype(float) for name, _ in el.props}
            continue
        data = {name: [] for name, _ in el.props}
        try:
            for _ in range(el.count):
                for name, typ in el.props:
                    if isinstance(typ, tuple):
                        ct = np.dtype(order + typ[0])
                        n = int(np.frombuffer(body, ct, 1, offset)[0])
                        offset += ct.itemsize
                        it = np.dtype(order + typ[1])
                        data[name].append(np.frombuffer(body, it, n, offset).copy())
                        offset += it.itemsize * n
                    else:
                        t = np.dtype(order + typ)
                        data[name].append(float(np.frombuffer(body, t, 1, offset)[0]))
                        offset += t.itemsize
        except ValueError:
            raise FormatError(path, f"truncated binary {el.name} data") from None
        out[el.name] = {
            name: (data[name] if isinstance(typ, tuple) else np.asarray(data[name], dtype=float))
            for name, typ in el.props
        }
    return out


def _cloud_from_columns(path, cols: Dict[str, np.ndarray]) -> PointCloud:
    for axis in "xyz":
        if axis not in cols:
            raise FormatError(path, f"vertex property {axis!r} missing")
    pos = np.column_stack([cols["x"], cols["y"], cols["z"]]).astype(float)
    attrs = {}
    if all(c in cols for c in ("red", "green", "blue")):
        attrs["intensity"] = (cols["red"] + cols["green"] + cols["blue"]) / 3.0 / 255.0
    skip = {"x", "y", "z", "red", "green", "blue", "alpha", "nx", "ny", "nz"}
    for name, values in cols.items():
        if name not in skip and not isinstance(values, list):
            attrs[name] = np.asarray(values, dtype=float)
    return _drop_nonfinite(path, pos, attrs)


def _drop_nonfinite(path, pos, attrs) -> PointCloud:
    ok = np.all(np.isfinite(pos), axis=1)
    for values in attrs.values():
        ok &= np.isfinite(values)
    dropped = int(len(ok) - ok.sum())
    if dropped:
        log.warning("%s: dropped %d non-finite rows", path, dropped)
    return PointCloud(pos[ok], {k: v[ok] for k, v in attrs.items()})


# ---------------------------------------------------------------- text formats


def _read_xyz(path) -> PointCloud:
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.split("#", 1)[0].replace(",", " ").split()
            if not s:
                continue
            if width is None:
                width = len(s)
                if width < 3:
                    raise FormatError(path, "need at least 3 columns", lineno)
            if len(s) != width:
                raise FormatError(path, f"expected {width} columns, found {len(s)}", lineno)
            try:
                rows.append([float(w) for w in s])
            except ValueError:
                raise FormatError(path, "non-numeric value", lineno) from None
    if not rows:
        raise FormatError(path, "no points")
    data = np.asarray(rows)
    attrs = {}
    if width == 4:
        attrs["intensity"] = data[:, 3]
    elif width >= 6:
        # x y z r g b: colours as 0-255 when any exceeds 1
        rgb = data[:, 3:6]
        scale = 255.0 if rgb.max() > 1.0 else 1.0
        attrs["intensity"] = rgb.mean(axis=1) / scale
    return _drop_nonfinite(path, data[:, :3], attrs)


def _read_obj(path):
    verts, faces = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.split("#", 1)[0].split()
            if not s:
                continue
            try:
                if s[0] == "v":
                    verts.append([float(w) for w in s[1:4]])
                    if len(verts[-1]) != 3:
                        raise ValueError
                elif s[0] == "f":
                    idx = [int(w.split("/")[0]) for w in s[1:]]
                    if len(idx) < 3:
                        raise ValueError
                    idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                    # fan-triangulate polygons
                    faces += [[idx[0], idx[j], idx[j + 1]] for j in range(1, len(idx) - 1)]
            except ValueError:
                raise FormatError(path, f"malformed {s[0]!r} line", lineno) from None
    return np.asarray(verts, dtype=float).reshape(-1, 3), np.asarray(faces, dtype=int).reshape(-1, 3)


def read_cloud(path) -> PointCloud:
    """Load a point cloud; RGB becomes ``intensity = (r+g+b)/3/255``."""
    ext = _ext(path)
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    if ext == ".ply":
        elements = _read_ply(path)
        if "vertex" not in elements:
            raise FormatError(path, "no vertex element")
        return _cloud_from_columns(path, elements["vertex"])
    if ext == ".obj":
        verts, _ = _read_obj(path)
        if len(verts) == 0:
            raise FormatError(path, "no vertices")
        return _drop_nonfinite(path, verts, {})
    if ext in (".xyz", ".txt"):
        return _read_xyz(path)
    raise FormatError(path, f"unsupported extension {ext!r}")


def read_mesh(path) -> TriangleMesh:
    ext = _ext(path)
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    if ext == ".obj":
        verts, faces = _read_obj(path)
    elif ext == ".ply":
        el = _read_ply(path)
        v = el.get("vertex")
        if v is None:
            raise FormatError(path, "no vertex element")
        verts = np.column_stack([v["x"], v["y"], v["z"]])
        polys = (el.get("face") or {}).get("vertex_indices") or (el.get("face") or {}).get("vertex_index") or []
        faces = [[p[0], p[j], p[j + 1]] for p in polys for j in range(1, len(p) - 1)]
        faces = np.asarray(faces, dtype=int).reshape(-1, 3)
    else:
        raise FormatError(path, f"unsupported mesh extension {ext!r}")
    if len(faces) == 0:
        raise FormatError(path, "no faces")
    if faces.min() < 0 or faces.max() >= len(verts):
        raise FormatError(path, "face index out of range")
    return TriangleMesh(verts, faces)


def is_mesh_file(path) -> bool:
    """True when the file holds faces (OBJ ``f`` lines or a non-empty PLY face element)."""
    ext = _ext(path)
    if ext == ".obj":
        with open(path, "r", encoding="utf-8") as fh:
            return any(line.startswith("f ") for line in fh)
    if ext == ".ply":
        with open(path, "rb") as fh:
            _, elements, _ = _parse_ply_header(path, fh)
        return any(e.name == "face" and e.count > 0 for e in elements)
    return False


# ---------------------------------------------------------------- writers


def write_cloud(cloud: PointCloud, path, binary: bool = True) -> None:
    """PLY (binary little endian unless ``binary=False``) or XYZ text by extension."""
    ext = _ext(path)
    names = sorted(cloud.attributes)
    if ext in (".xyz", ".txt"):
        cols = [cloud.positions] + ([cloud.attributes["intensity"][:, None]] if "intensity" in cloud.attributes else [])
        np.savetxt(path, np.hstack(cols), fmt="%.17g")
        return
    if ext != ".ply":
        raise FormatError(path, f"unsupported extension {ext!r}")
    header = ["ply", "format " + ("binary_little_endian 1.0" if binary else "ascii 1.0"), f"element vertex {len(cloud)}"]
    header += [f"property double {a}" for a in "xyz"]
    header += [f"property double {n}" for n in names]
    header.append("end_header")
    data = np.column_stack([cloud.positions] + [cloud.attributes[n] for n in names])
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            fh.write(data.astype("<f8").tobytes())
        else:
            np.savetxt(fh, data, fmt="%.17g")


def write_mesh(mesh: TriangleMesh, path, fmt: Optional[str] = None, normals: bool = True) -> None:
    """OBJ (1-based ``f`` lines) or ascii PLY; vertex normals included when ``normals``."""
    fmt = (fmt or _ext(path).lstrip(".")).lower()
    has_n = normals and mesh.vertex_normals is not None
    if fmt == "obj":
        lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
        if has_n:
            lines += [f"vn {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertex_normals]
            lines += [f"f {a}//{a} {b}//{b} {c}//{c}" for a, b, c in mesh.faces + 1]
        else:
            lines += [f"f {a} {b} {c}" for a, b, c in mesh.faces + 1]
        text = "\n".join(lines) + "\n"
    elif fmt == "ply":
        header = ["ply", "format ascii 1.0", f"element vertex {len(mesh.vertices)}"]
        header += [f"property double {a}" for a in "xyz"]
        if has_n:
            header += [f"property double {a}" for a in ("nx", "ny", "nz")]
        header += [f"element face {len(mesh.faces)}", "property list uchar int vertex_indices", "end_header"]
        cols = np.hstack([mesh.vertices, mesh.vertex_normals]) if has_n else mesh.vertices
        body = [" ".join(f"{v:.17g}" for v in row) for row in cols]
        body += [f"3 {a} {b} {c}" for a, b, c in mesh.faces]
        text = "\n".join(header + body) + "\n"
    else:
        raise ValueError(f"unsupported mesh format {fmt!r}")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(text)


# ---------------------------------------------------------------- run config

# keys that are not MembraneConfig fields
_RUN_KEYS = ("input", "output", "trace", "seed")


@dataclass
class RunConfig:
    membrane: MembraneConfig = MembraneConfig()
    input: Optional[str] = None
    output: Optional[str] = None
    trace: Optional[str] = None
    seed: int = 0


def _parse_value(kind, text):
    if kind is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if kind in (int, float, str):
        return kind(text)
    # tuples: ("tuple", element type, length); "8x5" is accepted for grids
    _, elem, n = kind
    parts = [p for p in text.replace("x", ",").split(",") if p.strip()]
    if len(parts) != n:
        raise ValueError(f"expected {n} comma-separated values")
    return tuple(elem(p) for p in parts)


def _field_kinds() -> Dict[str, object]:
    kinds = {}
    for f in dataclasses.fields(MembraneConfig):
        default = f.default
        if isinstance(default, bool):
            kinds[f.name] = bool
        elif isinstance(default, int):
            kinds[f.name] = int
        elif isinstance(default, float):
            kinds[f.name] = float
        elif isinstance(default, str):
            kinds[f.name] = str
        elif isinstance(default, tuple):
            kinds[f.name] = ("tuple", type(default[0]), len(default))
    return kinds


def parse_run_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse ``key = value`` lines (``#`` comments allowed).

    Keys are MembraneConfig field names, ``input``/``output``/``trace``/``seed``,
    and ``weight.point`` / ``weight.<attribute>`` for separability weights.
    Tuples are comma separated (``search_extents = 0.15,0.05,0.05``).
    """
    kinds = _field_kinds()
    values = {}
    run = {}
    point_w = 1.0
    attr_w = []
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise FormatError(source, "expected key = value", lineno)
        key, value = (s.strip() for s in body.split("=", 1))
        try:
            if key.startswith("weight."):
                name = key[len("weight."):]
                if name == "point":
                    point_w = float(value)
                elif name:
                    attr_w.append((name, float(value)))
                else:
                    raise ValueError("empty weight name")
            elif key in _RUN_KEYS:
                run[key] = int(value) if key == "seed" else value
            elif key in kinds:
                values[key] = _parse_value(kinds[key], value)
            else:
                raise FormatError(source, f"unknown key {key!r}", lineno)
        except FormatError:
            raise
        except ValueError as exc:
            raise FormatError(source, f"bad value for {key!r}: {exc}", lineno) from None
    try:
        weights = SeparabilityWeights(point=point_w, attributes=tuple(attr_w))
        membrane = MembraneConfig(weights=weights, **values)
    except (TypeError, ValueError) as exc:
        raise FormatError(source, str(exc)) from None
    return RunConfig(membrane=membrane, **run)


def read_run_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_run_config(fh.read(), str(path))


def format_run_config(config: MembraneConfig) -> str:
    """Inverse of :func:`parse_run_config` for the membrane part."""
    lines = []
    for f in dataclasses.fields(MembraneConfig):
        v = getattr(config, f.name)
        if f.name == "weights":
            lines.append(f"weight.point = {v.point!r}")
            lines += [f"weight.{n} = {w!r}" for n, w in v.attributes]
        elif isinstance(v, tuple):
            lines.append(f"{f.name} = " + ",".join(repr(x) for x in v))
        else:
            lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def write_trace(trace, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(trace.to_csv())


def write_sepmap(points, etas, path) -> None:
    data = np.column_stack([np.asarray(points, dtype=float), np.asarray(etas, dtype=float)])
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("x,y,z,eta\n")
        for row in data:
            fh.write(",".join(f"{v:.12g}" for v in row) + "\n")


def parse_vector(text: str, n: int = 3) -> Tuple[float, ...]:
    parts = [p for p in text.split(",") if p.strip()]
    if len(parts) != n:
        raise ValueError(f"expected {n} comma-separated numbers, got {text!r}")
    return tuple(float(p) for p in parts)
