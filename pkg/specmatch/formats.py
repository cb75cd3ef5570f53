"""Readers and writers for mesh and correspondence files.

Meshes: ASCII OFF, OBJ (``v``/``f`` records only) and ASCII PLY are read;
OFF is written. Vertex order is preserved exactly because correspondences
are index based. Correspondences use a small text format::

    #specmatch-corr v1 nN=<rows> nM=<target vertices>
    <0-based index into M>   (one line per vertex of N)
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .errors import ParseError
from .mesh import TriangleMesh
from .pointwise import HardCorrespondence

MESH_FORMATS = ("off", "obj", "ply")
CORR_HEADER = re.compile(r"^#specmatch-corr v1 nN=(\d+) nM=(\d+)\s*$")


def _strip_comments(text: str) -> list[str]:
    lines = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    return lines


def _parse_off(text: str, name: str) -> TriangleMesh:
    lines = _strip_comments(text)
    if not lines or not lines[0].upper().startswith("OFF"):
        raise ParseError(f"{name}: missing OFF header")
    header = lines[0][3:].split()
    rest = lines[1:]
    if not header:
        if not rest:
            raise ParseError(f"{name}: missing OFF counts line")
        header, rest = rest[0].split(), rest[1:]
    try:
        n_vertices, n_faces = int(header[0]), int(header[1])
    except (IndexError, ValueError) as exc:
        raise ParseError(f"{name}: bad OFF counts line {header!r}") from exc
    if len(rest) < n_vertices + n_faces:
        raise ParseError(f"{name}: expected {n_vertices} vertices and {n_faces} faces, file is truncated")
    try:
        vertices = np.array([[float(x) for x in rest[i].split()[:3]] for i in range(n_vertices)])
    except ValueError as exc:
        raise ParseError(f"{name}: non-numeric vertex coordinate") from exc
    faces = []
    for line in rest[n_vertices : n_vertices + n_faces]:
        tokens = line.split()
        try:
            count = int(tokens[0])
            idx = [int(t) for t in tokens[1 : 1 + count]]
        except (IndexError, ValueError) as exc:
            raise ParseError(f"{name}: bad face record {line!r}") from exc
        if count != 3 or len(idx) != 3:
            raise ParseError(f"{name}: only triangles are supported, got a {count}-gon")
        faces.append(idx)
    if vertices.ndim != 2 or vertices.shape[1] != 3:
        raise ParseError(f"{name}: every vertex needs three coordinates")
    return TriangleMesh(vertices, np.array(faces, dtype=np.int64).reshape(-1, 3), name)


def _parse_obj(text: str, name: str) -> TriangleMesh:
    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] == "v":
            try:
                vertices.append([float(t) for t in tokens[1:4]])
            except ValueError as exc:
                raise ParseError(f"{name}:{lineno}: bad vertex record") from exc
            if len(vertices[-1]) != 3:
                raise ParseError(f"{name}:{lineno}: vertex needs three coordinates")
        elif tokens[0] == "f":
            if len(tokens) != 4:
                raise ParseError(f"{name}:{lineno}: only triangles are supported")
            face = []
            for token in tokens[1:]:
                try:
                    index = int(token.split("/")[0])
                except ValueError as exc:
                    raise ParseError(f"{name}:{lineno}: bad face index {token!r}") from exc
                # negative indices count back from the latest vertex
                face.append(index - 1 if index > 0 else len(vertices) + index)
            faces.append(face)
    if not vertices:
        raise ParseError(f"{name}: no vertex records")
    return TriangleMesh(np.array(vertices), np.array(faces, dtype=np.int64).reshape(-1, 3), name)


def _parse_ply(text: str, name: str) -> TriangleMesh:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError(f"{name}: missing 'ply' magic")
    elements: list[tuple[str, int, list[str]]] = []
    body_start = None
    for i, raw in enumerate(lines[1:], 1):
        tokens = raw.split()
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        if tokens[0] == "format":
            if len(tokens) < 2 or tokens[1] != "ascii":
                raise ParseError(f"{name}: only ASCII PLY is supported")
        elif tokens[0] == "element":
            try:
                elements.append((tokens[1], int(tokens[2]), []))
            except (IndexError, ValueError) as exc:
                raise ParseError(f"{name}: bad element line {raw.strip()!r}") from exc
        elif tokens[0] == "property":
            if not elements:
                raise ParseError(f"{name}: property before element")
            elements[-1][2].append(tokens[-1])
        elif tokens[0] == "end_header":
            body_start = i + 1
            break
    if body_start is None:
        raise ParseError(f"{name}: missing end_header")

    body = [ln for ln in lines[body_start:] if ln.strip()]
    cursor = 0
    vertices = None
    faces = None
    for element, count, props in elements:
        records = body[cursor : cursor + count]
        if len(records) < count:
            raise ParseError(f"{name}: truncated {element} block")
        cursor += count
        if element == "vertex":
            try:
                cols = [props.index(axis) for axis in ("x", "y", "z")]
                table = np.array([[float(t) for t in rec.split()] for rec in records])
            except ValueError as exc:
                raise ParseError(f"{name}: bad vertex block") from exc
            vertices = table[:, cols] if count else np.zeros((0, 3))
        elif element == "face":
            rows = []
            for rec in records:
                try:
                    tokens = [int(t) for t in rec.split()]
                except ValueError as exc:
                    raise ParseError(f"{name}: bad face record {rec.strip()!r}") from exc
                if tokens[0] != 3:
                    raise ParseError(f"{name}: only triangles are supported")
                if len(tokens) < 4:
                    raise ParseError(f"{name}: face record {rec.strip()!r} lists fewer than 3 vertices")
                rows.append(tokens[1:4])
            faces = np.array(rows, dtype=np.int64).reshape(-1, 3)
    if vertices is None or faces is None:
        raise ParseError(f"{name}: PLY needs vertex and face elements")
    return TriangleMesh(vertices, faces, name)


_PARSERS = {"off": _parse_off, "obj": _parse_obj, "ply": _parse_ply}


def load_mesh(path: str | Path, fmt: str | None = None) -> TriangleMesh:
    """Read a triangle mesh, inferring the format from the extension if needed."""
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    if fmt not in _PARSERS:
        raise ParseError(f"{path}: unsupported mesh format {fmt!r} (use one of {', '.join(MESH_FORMATS)})")
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not an ASCII mesh file") from exc
    return _PARSERS[fmt](text, path.stem)


def write_off(mesh: TriangleMesh, path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as f:
        f.write("OFF\n")
        f.write(f"{mesh.n_vertices} {mesh.n_faces} 0\n")
        for x, y, z in mesh.vertices.tolist():
            f.write(f"{x!r} {y!r} {z!r}\n")
        for a, b, c in mesh.faces.tolist():
            f.write(f"3 {a} {b} {c}\n")
    return path


def write_correspondence(corr: HardCorrespondence, path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"#specmatch-corr v1 nN={corr.n_source} nM={corr.n_target}\n")
        for index in corr.target_index:
            f.write(f"{int(index)}\n")
    return path


def read_correspondence(path: str | Path) -> HardCorrespondence:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    match = CORR_HEADER.match(lines[0]) if lines else None
    if match is None:
        raise ParseError(f"{path}: missing or malformed '#specmatch-corr v1' header")
    n_source, n_target = int(match.group(1)), int(match.group(2))
    body = [ln.strip() for ln in lines[1:] if ln.strip()]
    if len(body) != n_source:
        raise ParseError(f"{path}: header announces {n_source} rows, found {len(body)}")
    try:
        index = np.array([int(tok) for tok in body], dtype=np.int64)
    except ValueError as exc:
        raise ParseError(f"{path}: non-integer correspondence entry") from exc
    return HardCorrespondence(index, n_target)
