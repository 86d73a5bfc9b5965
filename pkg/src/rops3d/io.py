"""PLY / OBJ mesh files and scene ground-truth JSON."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Iterable

import numpy as np

from .mesh import GroundTruthPose, MeshError, TriangleMesh


class MeshParseError(MeshError):
    pass


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def load_mesh(path) -> TriangleMesh:
    path = Path(path)
    suffix = path.suffix.lower()
    try:
        if suffix == ".ply":
            v, f = _read_ply(path)
        elif suffix == ".obj":
            v, f = _read_obj(path)
        else:
            raise MeshParseError(f"{path}: unsupported mesh format {suffix!r}")
    except MeshParseError:
        raise
    except (ValueError, IndexError, UnicodeDecodeError) as exc:
        raise MeshParseError(f"{path}: {exc}") from exc
    if len(f) == 0:
        raise MeshParseError(f"{path}: mesh has no faces")
    try:
        return TriangleMesh(v, f)
    except MeshError as exc:
        raise MeshParseError(f"{path}: {exc}") from exc


def _fan(polys: Iterable[list[int]]) -> np.ndarray:
    tris = []
    for poly in polys:
        if len(poly) < 3:
            raise MeshParseError(f"face with {len(poly)} vertices")
        for k in range(1, len(poly) - 1):
            tris.append((poly[0], poly[k], poly[k + 1]))
    return np.asarray(tris, dtype=np.int64).reshape(-1, 3)


def _read_ply(path: Path):
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"ply":
            raise MeshParseError(f"{path}: missing 'ply' magic")
        fmt = None
        elements = []  # (name, count, [(prop_name, dtype | ('list', count_t, item_t))])
        while True:
            line = fh.readline()
            if not line:
                raise MeshParseError(f"{path}: header not terminated")
            tok = line.decode("ascii").split()
            if not tok or tok[0] in ("comment", "obj_info"):
                continue
            if tok[0] == "format":
                fmt = tok[1]
            elif tok[0] == "element":
                elements.append((tok[1], int(tok[2]), []))
            elif tok[0] == "property":
                if not elements:
                    raise MeshParseError(f"{path}: property before element")
                if tok[1] == "list":
                    elements[-1][2].append((tok[4], ("list", _PLY_TYPES[tok[2]], _PLY_TYPES[tok[3]])))
                else:
                    elements[-1][2].append((tok[2], _PLY_TYPES[tok[1]]))
            elif tok[0] == "end_header":
                break
        if fmt == "ascii":
            body = fh.read().decode("ascii").split()
            return _parse_ply_ascii(path, elements, body)
        if fmt == "binary_little_endian":
            return _parse_ply_binary(path, elements, fh.read())
        raise MeshParseError(f"{path}: unsupported PLY format {fmt!r}")


def _collect(path, name, table):
    if name == "vertex":
        try:
            return np.column_stack([table["x"], table["y"], table["z"]]).astype(np.float64)
        except KeyError as exc:
            raise MeshParseError(f"{path}: vertex element lacks {exc}") from exc
    return table


def _parse_ply_ascii(path, elements, body):
    pos = 0
    verts, faces = np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64)
    for name, count, props in elements:
        if name == "face":
            polys = []
            for _ in range(count):
                row = []
                for _pname, ptype in props:
                    if isinstance(ptype, tuple):
                        n = int(body[pos])
                        row.append([int(x) for x in body[pos + 1: pos + 1 + n]])
                        if len(row[-1]) != n:
                            raise MeshParseError(f"{path}: truncated face list")
                        pos += 1 + n
                    else:
                        pos += 1
                polys.append(row[0])
            if pos > len(body):
                raise MeshParseError(f"{path}: truncated face data")
            faces = _fan(polys)
        else:
            if any(isinstance(t, tuple) for _n, t in props):
                raise MeshParseError(f"{path}: list property on element {name!r} unsupported")
            n = len(props)
            chunk = body[pos: pos + n * count]
            if len(chunk) != n * count:
                raise MeshParseError(f"{path}: truncated {name} data")
            arr = np.asarray(chunk, dtype=np.float64).reshape(count, n)
            pos += n * count
            if name == "vertex":
                table = {pname: arr[:, i] for i, (pname, _t) in enumerate(props)}
                verts = _collect(path, name, table)
    return verts, faces


def _parse_ply_binary(path, elements, data: bytes):
    pos = 0
    verts, faces = np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64)
    for name, count, props in elements:
        has_list = any(isinstance(t, tuple) for _n, t in props)
        if not has_list:
            dt = np.dtype([(pname, "<" + t) for pname, t in props])
            nbytes = dt.itemsize * count
            if pos + nbytes > len(data):
                raise MeshParseError(f"{path}: truncated binary {name} data")
            table = np.frombuffer(data, dtype=dt, count=count, offset=pos)
            pos += nbytes
            if name == "vertex":
                verts = _collect(path, name, table)
            continue
        if name == "face" and len(props) == 1:
            _pn, (_l, ct, it) = props[0]
            dt = np.dtype([("n", "<" + ct), ("idx", "<" + it, (3,))])
            if pos + dt.itemsize * count <= len(data):
                table = np.frombuffer(data, dtype=dt, count=count, offset=pos)
                if np.all(table["n"] == 3):
                    faces = table["idx"].astype(np.int64)
                    pos += dt.itemsize * count
                    continue
        polys = []
        for _ in range(count):
            row = []
            for _pname, ptype in props:
                if isinstance(ptype, tuple):
                    ct, it = np.dtype("<" + ptype[1]), np.dtype("<" + ptype[2])
                    if pos + ct.itemsize > len(data):
                        raise MeshParseError(f"{path}: truncated binary {name} data")
                    n = int(np.frombuffer(data, ct, 1, pos)[0])
                    pos += ct.itemsize
                    if pos + n * it.itemsize > len(data):
                        raise MeshParseError(f"{path}: truncated binary {name} data")
                    row.append(np.frombuffer(data, it, n, pos).astype(np.int64).tolist())
                    pos += n * it.itemsize
                else:
                    sz = np.dtype(ptype).itemsize
                    if pos + sz > len(data):
                        raise MeshParseError(f"{path}: truncated binary {name} data")
                    pos += sz
            if name == "face":
                polys.append(row[0])
        if name == "face":
            faces = _fan(polys)
    return verts, faces


def _read_obj(path: Path):
    verts, polys = [], []
    with open(path, "r") as fh:
        for line in fh:
            tok = line.split()
            if not tok:
                continue
            if tok[0] == "v":
                verts.append([float(x) for x in tok[1:4]])
            elif tok[0] == "f":
                idx = []
                for item in tok[1:]:
                    k = int(item.split("/")[0])
                    idx.append(k - 1 if k > 0 else len(verts) + k)
                polys.append(idx)
    return np.asarray(verts, dtype=np.float64).reshape(-1, 3), _fan(polys)


def _atomic_write_bytes(path, payload: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    _atomic_write_bytes(path, text.encode("utf-8"))


def save_mesh(mesh: TriangleMesh, path, binary: bool = True):
    """Write PLY (ASCII or binary little-endian) or OBJ, chosen by suffix."""
    path = Path(path)
    if path.suffix.lower() == ".obj":
        lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles.tolist()]
        atomic_write_text(path, "\n".join(lines) + "\n")
        return
    fmt = "binary_little_endian" if binary else "ascii"
    header = (
        f"ply\nformat {fmt} 1.0\n"
        f"element vertex {mesh.n_vertices}\n"
        "property double x\nproperty double y\nproperty double z\n"
        f"element face {mesh.n_triangles}\n"
        "property list uchar int vertex_indices\nend_header\n"
    ).encode("ascii")
    if binary:
        fdt = np.dtype([("n", "u1"), ("idx", "<i4", (3,))])
        faces = np.empty(mesh.n_triangles, dtype=fdt)
        faces["n"] = 3
        faces["idx"] = mesh.triangles
        body = mesh.vertices.astype("<f8").tobytes() + faces.tobytes()
    else:
        rows = [f"{x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
        rows += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
        body = ("\n".join(rows) + "\n").encode("ascii")
    _atomic_write_bytes(path, header + body)


def save_ground_truth(poses, path):
    atomic_write_text(path, json.dumps([p.to_json() for p in poses], indent=2) + "\n")


def load_ground_truth(path) -> list[GroundTruthPose]:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: malformed ground-truth JSON ({exc})") from exc
    if isinstance(data, dict):
        data = data.get("poses", [data])
    if not isinstance(data, list):
        raise ValueError(f"{path}: expected a list of pose records")
    return [GroundTruthPose.from_json(d) for d in data]
