"""Minimal PLY reader/writer for point geometry.

Reads ascii and binary_little_endian files whose first element is the
vertex list with scalar x/y/z properties. Trailing elements (faces etc.)
are ignored. List properties inside the vertex element are rejected since
they make the vertex stride unpredictable.

Write side emits float32 x/y/z, optionally followed by uchar red/green/blue.
"""

import numpy as np

from .errors import PlyError
from .pointcloud import PointCloud

_SCALAR = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def _parse_header(raw: bytes):
    end = raw.find(b"end_header")
    if end < 0:
        raise PlyError("missing end_header", offset=0)
    nl = raw.find(b"\n", end)
    if nl < 0:
        raise PlyError("header not terminated by newline", offset=end)
    body_start = nl + 1
    lines = raw[:end].decode("ascii", errors="replace").splitlines()
    if not lines or lines[0].strip() != "ply":
        raise PlyError("not a PLY file (magic line missing)", offset=0)

    fmt = None
    elements = []  # (name, count, [(prop_name, np_type)])
    offset = 0
    for line in lines:
        tok = line.strip().split()
        if not tok or tok[0] in ("ply", "comment", "obj_info"):
            offset += len(line) + 1
            continue
        if tok[0] == "format":
            if len(tok) < 2 or tok[1] not in ("ascii", "binary_little_endian"):
                raise PlyError(f"unsupported format {tok[1:]}", offset=offset)
            fmt = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3:
                raise PlyError(f"bad element line: {line!r}", offset=offset)
            try:
                count = int(tok[2])
            except ValueError:
                raise PlyError(f"bad element count: {tok[2]!r}", offset=offset)
            elements.append((tok[1], count, []))
        elif tok[0] == "property":
            if not elements:
                raise PlyError("property before any element", offset=offset)
            if tok[1] == "list":
                elements[-1][2].append((tok[-1], None))
            else:
                if tok[1] not in _SCALAR:
                    raise PlyError(f"unknown property type {tok[1]!r}", offset=offset)
                elements[-1][2].append((tok[2], _SCALAR[tok[1]]))
        offset += len(line) + 1
    if fmt is None:
        raise PlyError("header has no format line", offset=0)
    return fmt, elements, body_start


def load_ply(path) -> PointCloud:
    """Read vertex positions (and red/green/blue colors when present)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    fmt, elements, body_start = _parse_header(raw)
    if not elements or elements[0][0] != "vertex":
        raise PlyError("first element must be vertex", offset=0)
    _, count, props = elements[0]
    names = [p[0] for p in props]
    for axis in ("x", "y", "z"):
        if axis not in names:
            raise PlyError(f"vertex element lacks property {axis!r}", offset=0)
    if any(t is None for _, t in props):
        raise PlyError("list property inside vertex element", offset=0)
    has_color = all(c in names for c in ("red", "green", "blue"))
    take = ["x", "y", "z"] + (["red", "green", "blue"] if has_color else [])

    if fmt == "binary_little_endian":
        dt = np.dtype([(name, "<" + t) for name, t in props])
        need = count * dt.itemsize
        if len(raw) - body_start < need:
            raise PlyError(
                f"vertex data truncated: need {need} bytes, have {len(raw) - body_start}",
                offset=body_start,
            )
        rec = np.frombuffer(raw, dtype=dt, count=count, offset=body_start)
        vals = np.column_stack([rec[name].astype(np.float64) for name in take])
    else:
        # ascii: one vertex per line, fixed token count
        text = raw[body_start:].decode("ascii", errors="replace")
        lines = text.splitlines()
        vals = np.empty((count, len(take)), dtype=np.float64)
        cols = [names.index(nm) for nm in take]
        # parse through the declared storage type so ascii and binary files
        # of the same cloud load identically (float32 x stays float32-exact)
        casts = [np.dtype(props[c][1]).type for c in cols]
        byte_pos = body_start
        seen = 0
        for line in lines:
            if seen == count:
                break
            tok = line.split()
            if not tok:
                byte_pos += len(line) + 1
                continue
            if len(tok) != len(props):
                raise PlyError(
                    f"vertex line has {len(tok)} values, expected {len(props)}",
                    offset=byte_pos,
                )
            try:
                for j, c in enumerate(cols):
                    vals[seen, j] = casts[j](float(tok[c]))
            except ValueError:
                raise PlyError(f"non-numeric vertex value in {line!r}", offset=byte_pos)
            seen += 1
            byte_pos += len(line) + 1
        if seen < count:
            raise PlyError(
                f"vertex data truncated: {seen} of {count} rows", offset=byte_pos
            )
    colors = vals[:, 3:6].astype(np.uint8) if has_color else None
    return PointCloud(vals[:, :3], colors)


def save_ply(path, points, colors=None, fmt: str = "binary") -> None:
    """Write positions (float32), optionally with uchar RGB colors."""
    pts = np.asarray(points, dtype=np.float32)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise PlyError(f"points must be (n, 3), got {pts.shape}")
    if fmt not in ("binary", "ascii"):
        raise PlyError(f"fmt must be 'binary' or 'ascii', got {fmt!r}")
    n = pts.shape[0]
    header = ["ply"]
    header.append(
        "format binary_little_endian 1.0" if fmt == "binary" else "format ascii 1.0"
    )
    header.append(f"element vertex {n}")
    header += ["property float x", "property float y", "property float z"]
    if colors is not None:
        colors = np.asarray(colors, dtype=np.uint8)
        if colors.shape != (n, 3):
            raise PlyError(f"colors must be ({n}, 3) uint8, got {colors.shape}")
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    header.append("end_header")

    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if fmt == "binary":
            if colors is None:
                fh.write(np.ascontiguousarray(pts, dtype="<f4").tobytes())
            else:
                dt = np.dtype(
                    [("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                     ("red", "u1"), ("green", "u1"), ("blue", "u1")]
                )
                rec = np.empty(n, dtype=dt)
                rec["x"], rec["y"], rec["z"] = pts[:, 0], pts[:, 1], pts[:, 2]
                rec["red"], rec["green"], rec["blue"] = (
                    colors[:, 0], colors[:, 1], colors[:, 2],
                )
                fh.write(rec.tobytes())
        else:
            rows = []
            for i in range(n):
                row = "%.9g %.9g %.9g" % (pts[i, 0], pts[i, 1], pts[i, 2])
                if colors is not None:
                    row += " %d %d %d" % (colors[i, 0], colors[i, 1], colors[i, 2])
                rows.append(row)
            fh.write(("\n".join(rows) + "\n").encode("ascii"))
