"""Point cloud container and PLY 1.0 reader/writer.

Only the vertex element is supported. Coordinates are held as float64;
any other vertex properties (colors, normals, ...) are kept as an opaque
structured array and written back unchanged.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "BoundingBox",
    "PlyError",
    "PointCloud",
    "bounding_box",
    "read_ply",
    "write_ply",
]

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}
_PLY_NAMES = {"i1": "char", "u1": "uchar", "i2": "short", "u2": "ushort",
              "i4": "int", "u4": "uint", "f4": "float", "f8": "double"}
_COORDS = ("x", "y", "z")


class PlyError(ValueError):
    """Malformed or unsupported PLY content."""


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Ordered 3D points; row ``i`` is point ``i`` for the cloud's lifetime.

    ``attributes`` is an optional structured array with one record per point
    holding non-geometry vertex properties. Duplicate positions are allowed.
    """

    points: np.ndarray
    attributes: np.ndarray | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.attributes is not None:
            attrs = np.array(self.attributes, copy=True)
            if attrs.dtype.names is None or attrs.shape != (len(pts),):
                raise ValueError("attributes must be a structured array with one record per point")
            attrs.setflags(write=False)
            object.__setattr__(self, "attributes", attrs)

    def __len__(self) -> int:
        return len(self.points)

    def with_points(self, points) -> "PointCloud":
        """Same attributes, new positions (must keep the point count)."""
        points = np.asarray(points, dtype=np.float64)
        if len(points) != len(self):
            raise ValueError("point count changed")
        return PointCloud(points, self.attributes)


@dataclass(frozen=True)
class BoundingBox:
    min: np.ndarray
    max: np.ndarray

    @property
    def extent(self) -> np.ndarray:
        return self.max - self.min

    @property
    def volume(self) -> float:
        return float(np.prod(self.extent))


def bounding_box(cloud: PointCloud) -> BoundingBox:
    if len(cloud) == 0:
        raise ValueError("bounding box of an empty cloud")
    return BoundingBox(cloud.points.min(axis=0), cloud.points.max(axis=0))


def _parse_header(f):
    lines = []
    offset = 0
    while True:
        raw = f.readline()
        if not raw:
            raise PlyError(f"unexpected end of file in header (line {len(lines) + 1}, byte {offset})")
        offset += len(raw)
        line = raw.decode("ascii", errors="replace").strip()
        if not lines and line != "ply":
            raise PlyError("line 1: missing 'ply' magic")
        lines.append(line)
        if line == "end_header":
            break

    fmt = None
    elements = []  # (name, count, [(prop, dtype)])
    for lineno, line in enumerate(lines[1:-1], start=2):
        tok = line.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            if len(tok) != 3 or tok[2] != "1.0":
                raise PlyError(f"line {lineno}: bad format line {line!r}")
            if tok[1] == "binary_big_endian":
                raise PlyError(f"line {lineno}: binary_big_endian PLY is not supported")
            if tok[1] not in ("ascii", "binary_little_endian"):
                raise PlyError(f"line {lineno}: unknown format {tok[1]!r}")
            fmt = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3:
                raise PlyError(f"line {lineno}: bad element line {line!r}")
            try:
                count = int(tok[2])
            except ValueError:
                raise PlyError(f"line {lineno}: bad element count {tok[2]!r}") from None
            elements.append((tok[1], count, []))
        elif tok[0] == "property":
            if not elements:
                raise PlyError(f"line {lineno}: property before any element")
            if len(tok) >= 2 and tok[1] == "list":
                raise PlyError(f"line {lineno}: list properties are not supported")
            if len(tok) != 3 or tok[1] not in _PLY_TYPES:
                raise PlyError(f"line {lineno}: bad property line {line!r}")
            elements[-1][2].append((tok[2], _PLY_TYPES[tok[1]]))
        else:
            raise PlyError(f"line {lineno}: unrecognized header keyword {tok[0]!r}")

    if fmt is None:
        raise PlyError("header has no format line")
    if len(elements) != 1 or elements[0][0] != "vertex":
        names = [e[0] for e in elements]
        raise PlyError(f"unsupported element layout {names}; expected a single 'vertex' element")
    _, count, props = elements[0]
    names = [p for p, _ in props]
    missing = [c for c in _COORDS if c not in names]
    if missing:
        raise PlyError(f"vertex element lacks properties {missing}")
    if len(set(names)) != len(names):
        raise PlyError("duplicate vertex property names")
    return fmt, count, props, len(lines), offset


def read_ply(path) -> PointCloud:
    """Read an ascii or binary_little_endian PLY point cloud, preserving vertex order."""
    with open(path, "rb") as f:
        fmt, count, props, header_lines, header_bytes = _parse_header(f)
        dtype = np.dtype([(name, "<" + t) for name, t in props])
        if fmt == "binary_little_endian":
            body = f.read(count * dtype.itemsize)
            if len(body) < count * dtype.itemsize:
                done = len(body) // dtype.itemsize
                raise PlyError(
                    f"truncated binary body: vertex {done} incomplete at byte "
                    f"{header_bytes + done * dtype.itemsize}"
                )
            data = np.frombuffer(body, dtype=dtype, count=count)
        else:
            data = np.empty(count, dtype=dtype)
            for i in range(count):
                lineno = header_lines + i + 1
                raw = f.readline()
                tok = raw.split()
                if len(tok) != len(props):
                    raise PlyError(f"line {lineno}: expected {len(props)} values, got {len(tok)}")
                try:
                    data[i] = tuple(
                        float(v) if t[0] == "f" else int(v) for v, (_, t) in zip(tok, props)
                    )
                except ValueError:
                    raise PlyError(f"line {lineno}: cannot parse vertex values {raw!r}") from None

    points = np.column_stack([data[c].astype(np.float64) for c in _COORDS]) if count else np.empty((0, 3))
    if not np.all(np.isfinite(points)):
        bad = int(np.flatnonzero(~np.isfinite(points).all(axis=1))[0])
        raise PlyError(f"vertex {bad}: non-finite coordinate")
    extra = [n for n, _ in props if n not in _COORDS]
    attributes = None
    if extra:
        attributes = np.empty(count, dtype=[(n, data.dtype[n]) for n in extra])
        for n in extra:
            attributes[n] = data[n]
    return PointCloud(points, attributes)


def _atomic_write_bytes(path, chunks):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            for chunk in chunks:
                f.write(chunk)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_ply(cloud: PointCloud, path, format: str = "binary-le") -> None:
    """Write ``cloud`` as PLY; ``format`` is ``"ascii"`` or ``"binary-le"``.

    Coordinates are written as doubles so any cloud round-trips exactly. The
    file is written to a temporary sibling and renamed into place.
    """
    if len(cloud) == 0:
        raise ValueError("refusing to write an empty cloud")
    if format not in ("ascii", "binary-le"):
        raise ValueError(f"unknown PLY format {format!r}")

    fields = [(c, "<f8") for c in _COORDS]
    if cloud.attributes is not None:
        fields += [(n, cloud.attributes.dtype[n].newbyteorder("<")) for n in cloud.attributes.dtype.names]
    data = np.empty(len(cloud), dtype=fields)
    for j, c in enumerate(_COORDS):
        data[c] = cloud.points[:, j]
    if cloud.attributes is not None:
        for n in cloud.attributes.dtype.names:
            data[n] = cloud.attributes[n]

    header = ["ply", "format " + ("ascii" if format == "ascii" else "binary_little_endian") + " 1.0",
              f"element vertex {len(cloud)}"]
    for name, _ in fields:
        header.append(f"property {_PLY_NAMES[np.dtype(data.dtype[name]).str[1:]]} {name}")
    header.append("end_header")
    head = ("\n".join(header) + "\n").encode("ascii")

    if format == "binary-le":
        _atomic_write_bytes(path, [head, data.tobytes()])
        return

    # repr() of a float is the shortest string that round-trips exactly.
    cols = []
    for name in data.dtype.names:
        col = data[name]
        cols.append([repr(float(v)) for v in col] if col.dtype.kind == "f" else [str(int(v)) for v in col])
    body = "\n".join(" ".join(row) for row in zip(*cols)) + "\n"
    _atomic_write_bytes(path, [head, body.encode("ascii")])
