"""Adaptive shell construction: per-triangle overlapping prisms.

Each proxy-mesh triangle gets its own prism between positive and
negative offset extrusions. Offsets are derived from the content that
the tiling maps onto that triangle: extrusion heights from the tallest
mapped molecule above/below the tile plane, side expansion from half
the width of the widest mapped molecule, so edge-straddling placements
stay inside some prism.

Prisms are treated as convex solids with planar side quads. When
per-vertex normals diverge enough to bend a quad, the boundary used for
intersection is the 8-triangle tessellation and the plane set is an
approximation; this mirrors common shell-mapping practice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

from .geometry import (
    Aabb,
    Affine,
    Interval,
    Ray,
    Vec2,
    Vec3,
    ray_triangle,
    vadd,
    vcross,
    vdot,
    vnorm,
    vnormalize,
    vscale,
    vsub,
)
from .tiling import TilingRecipe2D, WangSquareTile, map_triangle, replication_area_dims


class MeshError(ValueError):
    """Invalid proxy mesh data."""


@dataclass
class ProxyMesh:
    """Low-poly triangle mesh with per-vertex normals and uvs.

    Front faces wind counter-clockwise; uvs live in [0,1]^2.
    """

    positions: list[Vec3]
    normals: list[Vec3]
    uvs: list[Vec2]
    triangles: list[Tuple[int, int, int]]

    def __post_init__(self):
        nv = len(self.positions)
        if not (len(self.normals) == len(self.uvs) == nv):
            raise MeshError("positions/normals/uvs length mismatch")
        for n in self.normals:
            if abs(vnorm(n) - 1.0) > 1e-6:
                raise MeshError(f"vertex normal {n} is not unit length")
        for u, v in self.uvs:
            if not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0):
                raise MeshError(f"uv ({u}, {v}) outside [0,1]^2")
        for tri in self.triangles:
            if any(i < 0 or i >= nv for i in tri):
                raise MeshError(f"triangle {tri} references missing vertex")
            a, b, c = (self.positions[i] for i in tri)
            if 0.5 * vnorm(vcross(vsub(b, a), vsub(c, a))) <= 1e-12:
                raise MeshError(f"triangle {tri} is degenerate")

    def tri_positions(self, t: int) -> Tuple[Vec3, Vec3, Vec3]:
        i, j, k = self.triangles[t]
        return self.positions[i], self.positions[j], self.positions[k]

    def tri_normals(self, t: int) -> Tuple[Vec3, Vec3, Vec3]:
        i, j, k = self.triangles[t]
        return self.normals[i], self.normals[j], self.normals[k]

    def tri_uvs(self, t: int) -> Tuple[Vec2, Vec2, Vec2]:
        i, j, k = self.triangles[t]
        return self.uvs[i], self.uvs[j], self.uvs[k]

    def uv_triangles(self):
        for t in range(len(self.triangles)):
            yield self.tri_uvs(t)

    def aabb(self) -> Aabb:
        return Aabb.of_points(self.positions)


@dataclass(frozen=True)
class MeshInstance:
    """Placement of a proxy mesh in the scene."""

    mesh_id: int
    world_transform: Affine


@dataclass
class Prism:
    """Convex volume over one triangle, between the offset extrusions.

    verts_top/verts_bottom follow the base vertex order after side
    expansion; a prism with no mapped content is degenerate (zero
    heights) and is skipped when the scene-level BVH is built.
    """

    triangle_index: int
    verts_top: Tuple[Vec3, Vec3, Vec3]
    verts_bottom: Tuple[Vec3, Vec3, Vec3]
    h_plus: float
    h_minus: float
    side_offset: float
    planes: list[Tuple[Vec3, float]] = field(default_factory=list)  # outward (n, d): inside is n.p <= d

    def __post_init__(self):
        if not self.planes and not self.is_degenerate():
            self.planes = _prism_planes(self.verts_top, self.verts_bottom)

    def is_degenerate(self) -> bool:
        return self.h_plus == 0.0 and self.h_minus == 0.0

    def vertices(self) -> list[Vec3]:
        return list(self.verts_top) + list(self.verts_bottom)

    def aabb(self) -> Aabb:
        return Aabb.of_points(self.vertices())

    def centroid(self) -> Vec3:
        vs = self.vertices()
        return (
            sum(v[0] for v in vs) / 6.0,
            sum(v[1] for v in vs) / 6.0,
            sum(v[2] for v in vs) / 6.0,
        )

    def boundary_triangles(self) -> list[Tuple[Vec3, Vec3, Vec3]]:
        """2 caps + 3 side quads split into 2 triangles each."""
        t, b = self.verts_top, self.verts_bottom
        tris = [(t[0], t[1], t[2]), (b[0], b[2], b[1])]
        for i, j in ((0, 1), (1, 2), (2, 0)):
            tris.append((t[i], t[j], b[j]))
            tris.append((t[i], b[j], b[i]))
        return tris


def _prism_planes(top, bottom) -> list[Tuple[Vec3, float]]:
    center = (
        sum(v[0] for v in top + bottom) / 6.0,
        sum(v[1] for v in top + bottom) / 6.0,
        sum(v[2] for v in top + bottom) / 6.0,
    )

    def outward(n: Vec3, anchor: Vec3) -> Tuple[Vec3, float]:
        n = vnormalize(n)
        d = vdot(n, anchor)
        if vdot(n, center) > d:
            n = vscale(n, -1.0)
            d = vdot(n, anchor)
        return n, d

    planes = [
        outward(vcross(vsub(top[1], top[0]), vsub(top[2], top[0])), top[0]),
        outward(vcross(vsub(bottom[1], bottom[0]), vsub(bottom[2], bottom[0])), bottom[0]),
    ]
    for i, j in ((0, 1), (1, 2), (2, 0)):
        # bent quads get the averaged plane through the quad centroid
        n1 = vcross(vsub(top[j], top[i]), vsub(bottom[i], top[i]))
        n2 = vcross(vsub(bottom[i], bottom[j]), vsub(top[j], bottom[j]))
        n = vadd(n1, n2)
        if vnorm(n) <= 1e-15:
            # side quad collapsed to a line (e.g. zero heights + shared edge)
            continue
        quad_center = (
            (top[i][0] + top[j][0] + bottom[j][0] + bottom[i][0]) * 0.25,
            (top[i][1] + top[j][1] + bottom[j][1] + bottom[i][1]) * 0.25,
            (top[i][2] + top[j][2] + bottom[j][2] + bottom[i][2]) * 0.25,
        )
        planes.append(outward(n, quad_center))
    return planes


def build_adaptive_prisms(
    mesh: ProxyMesh,
    recipe: TilingRecipe2D,
    tiles: Sequence[WangSquareTile],
    molecules_by_id,
) -> list[Prism]:
    """Per-triangle prisms sized by the mapped tile content.

    For each triangle, the tiles in its replication area decide
    h_plus/h_minus (max instance reach above/below the tile plane) and
    side_offset (half the widest mapped molecule). Base vertices move
    outward from the triangle centroid by side_offset, then extrude
    along the per-vertex normals. Triangles with no mapped content
    yield degenerate zero-height prisms.
    """
    by_id = {t.id: t for t in tiles}
    dims = replication_area_dims(mesh, recipe.tile_uv_size)
    prisms = []
    for t in range(len(mesh.triangles)):
        area = map_triangle(mesh.tri_uvs(t), recipe, dims)
        tile_ids = {recipe.lookup(*cell) for cell, _ in area.entries}
        h_plus = 0.0
        h_minus = 0.0
        side = 0.0
        for tid in sorted(tile_ids):
            for inst in by_id[tid].instances:
                mol = molecules_by_id[inst.molecule_type_id]
                h_plus = max(h_plus, inst.local_position[1] + mol.aabb.max[1])
                h_minus = max(h_minus, -(inst.local_position[1] + mol.aabb.min[1]))
                side = max(side, mol.width * 0.5)
        h_plus = max(h_plus, 0.0)
        h_minus = max(h_minus, 0.0)

        v = mesh.tri_positions(t)
        n = mesh.tri_normals(t)
        centroid = (
            (v[0][0] + v[1][0] + v[2][0]) / 3.0,
            (v[0][1] + v[1][1] + v[2][1]) / 3.0,
            (v[0][2] + v[1][2] + v[2][2]) / 3.0,
        )
        base = []
        for i in range(3):
            out = vsub(v[i], centroid)
            length = vnorm(out)
            if length > 0.0 and side > 0.0:
                base.append(vadd(v[i], vscale(out, side / length)))
            else:
                base.append(v[i])
        top = tuple(vadd(base[i], vscale(n[i], h_plus)) for i in range(3))
        bottom = tuple(vsub(base[i], vscale(n[i], h_minus)) for i in range(3))
        prisms.append(Prism(t, top, bottom, h_plus, h_minus, side))
    return prisms


def ray_prism_intersect(prism: Prism, ray: Ray) -> Optional[Interval]:
    """Entry/exit t of the ray against the triangulated prism boundary
    (raw, not clamped to the ray interval). The entry point is where
    traversal would switch to the tile level."""
    t_enter = math.inf
    t_exit = -math.inf
    for v0, v1, v2 in prism.boundary_triangles():
        hit = ray_triangle(ray, v0, v1, v2, bounded=False)
        if hit is None:
            continue
        t_enter = min(t_enter, hit.t)
        t_exit = max(t_exit, hit.t)
    if t_enter > t_exit:
        return None
    return Interval(t_enter, t_exit)


def point_in_prism(prism: Prism, p: Vec3, eps: float = 1e-9) -> bool:
    """All five plane tests within eps (inside or on the boundary)."""
    if prism.is_degenerate():
        return False
    for n, d in prism.planes:
        if vdot(n, p) - d > eps:
            return False
    return True
