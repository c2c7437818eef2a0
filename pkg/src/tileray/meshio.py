"""Wavefront OBJ subset loader for proxy meshes.

Supports v / vt / vn / f records; faces with more than three corners
are fan-triangulated. Normals are optional (area-weighted vertex
normals are computed when absent); uvs are mandatory for shell meshes
and clamped to [0,1].
"""

from __future__ import annotations

import math
from typing import Optional

from .geometry import Vec3, vcross, vnorm, vsub
from .shell import MeshError, ProxyMesh


class ObjError(ValueError):
    pass


def _parse_face_corner(token: str, lineno: int):
    parts = token.split("/")
    if len(parts) > 3 or not parts[0]:
        raise ObjError(f"line {lineno}: malformed face corner {token!r}")
    try:
        vi = int(parts[0])
        ti = int(parts[1]) if len(parts) > 1 and parts[1] else None
        ni = int(parts[2]) if len(parts) > 2 and parts[2] else None
    except ValueError:
        raise ObjError(f"line {lineno}: malformed face corner {token!r}") from None
    return vi, ti, ni


def _resolve(idx: Optional[int], n: int, kind: str, lineno: int) -> Optional[int]:
    if idx is None:
        return None
    resolved = idx - 1 if idx > 0 else n + idx
    if not (0 <= resolved < n):
        raise ObjError(f"line {lineno}: {kind} index {idx} out of range (have {n})")
    return resolved


def load_obj_text(text: str, require_uv: bool = True) -> ProxyMesh:
    vs: list[Vec3] = []
    vts: list[tuple] = []
    vns: list[Vec3] = []
    corners: list[tuple] = []  # (vi, ti, ni) per triangle corner
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        tag = fields[0]
        try:
            if tag == "v":
                vs.append((float(fields[1]), float(fields[2]), float(fields[3])))
            elif tag == "vt":
                vts.append((float(fields[1]), float(fields[2])))
            elif tag == "vn":
                vns.append((float(fields[1]), float(fields[2]), float(fields[3])))
            elif tag == "f":
                if len(fields) < 4:
                    raise ObjError(f"line {lineno}: face needs at least 3 corners")
                face = []
                for token in fields[1:]:
                    vi, ti, ni = _parse_face_corner(token, lineno)
                    face.append((
                        _resolve(vi, len(vs), "vertex", lineno),
                        _resolve(ti, len(vts), "uv", lineno),
                        _resolve(ni, len(vns), "normal", lineno),
                    ))
                for k in range(1, len(face) - 1):
                    corners.extend((face[0], face[k], face[k + 1]))
        except (IndexError, ValueError) as exc:
            if isinstance(exc, ObjError):
                raise
            raise ObjError(f"line {lineno}: malformed {tag} record") from None
    if not corners:
        raise ObjError("no faces found")

    if require_uv and any(c[1] is None for c in corners):
        raise ObjError("mesh has faces without uv coordinates (required for shell meshes)")

    # area-weighted fallback normals, accumulated per source vertex
    acc = [(0.0, 0.0, 0.0)] * len(vs)
    needs_normals = any(c[2] is None for c in corners)
    if needs_normals:
        for k in range(0, len(corners), 3):
            a, b, c = (vs[corners[k + i][0]] for i in range(3))
            fn = vcross(vsub(b, a), vsub(c, a))
            for i in range(3):
                vi = corners[k + i][0]
                acc[vi] = (acc[vi][0] + fn[0], acc[vi][1] + fn[1], acc[vi][2] + fn[2])

    dedup: dict = {}
    positions: list[Vec3] = []
    normals: list[Vec3] = []
    uvs: list[tuple] = []
    triangles = []
    tri: list[int] = []
    for vi, ti, ni in corners:
        key = (vi, ti, ni)
        if key not in dedup:
            dedup[key] = len(positions)
            positions.append(vs[vi])
            if ni is not None:
                n = vns[ni]
            else:
                n = acc[vi]
            ln = vnorm(n)
            if ln == 0.0:
                raise ObjError(f"vertex {vi + 1} has a zero normal")
            normals.append((n[0] / ln, n[1] / ln, n[2] / ln))
            if ti is not None:
                u, v = vts[ti]
                uvs.append((min(max(u, 0.0), 1.0), min(max(v, 0.0), 1.0)))
            else:
                uvs.append((0.0, 0.0))
        tri.append(dedup[key])
        if len(tri) == 3:
            triangles.append((tri[0], tri[1], tri[2]))
            tri = []
    try:
        return ProxyMesh(positions, normals, uvs, triangles)
    except MeshError as exc:
        raise ObjError(str(exc)) from None


def load_obj(path, require_uv: bool = True) -> ProxyMesh:
    with open(path, "r", encoding="utf-8") as fh:
        return load_obj_text(fh.read(), require_uv=require_uv)
