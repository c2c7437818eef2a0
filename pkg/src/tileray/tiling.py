"""Geometric Wang tiles, tiling recipes, and the triangle-to-tile mapper.

Square tiles carry membrane content in a tile-local frame (footprint
x,z in [-s/2, s/2], tile plane at y = 0); cube tiles carry soluble
content in [-s/2, s/2]^3. A recipe is a seeded, pre-generated grid of
tile indices forming a valid tiling; at render time triangles (via
their uv bounds) and core-grid boxes look tiles up through it.

Recipes are generated with a scanline greedy fill. With a complete tile
set (every predecessor color combination present) the candidate set is
never empty; that is the supported input class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .geometry import Aabb, Mat3, Vec2, Vec3, quat_to_mat3


class TilingError(ValueError):
    """Unsatisfiable tiling constraint or recipe/grid size mismatch."""


@dataclass(frozen=True)
class MoleculeInstance:
    """One molecule placement inside a tile, in tile object space."""

    molecule_type_id: int
    local_position: Vec3
    rotation: Tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)  # (w, x, y, z)

    def rotation_matrix(self) -> Mat3:
        return quat_to_mat3(*self.rotation)


@dataclass
class WangSquareTile:
    """Square tile with edge colors ordered (N, E, S, W).

    N/S run along +v/-v in uv space (mapped to tile-local +z/-z), E/W
    along +u/-u (tile-local +x/-x).
    """

    id: int
    edge_colors: Tuple[int, int, int, int]
    instances: list[MoleculeInstance]
    world_size: float

    @property
    def north(self) -> int:
        return self.edge_colors[0]

    @property
    def east(self) -> int:
        return self.edge_colors[1]

    @property
    def south(self) -> int:
        return self.edge_colors[2]

    @property
    def west(self) -> int:
        return self.edge_colors[3]


@dataclass
class WangCubeTile:
    """Cube tile with face colors ordered (+x, -x, +y, -y, +z, -z)."""

    id: int
    face_colors: Tuple[int, int, int, int, int, int]
    instances: list[MoleculeInstance]
    world_size: float


@dataclass
class TilingRecipe2D:
    """Grid of square-tile indices; cell (i, j) is stored at i + j*W."""

    dims: Tuple[int, int]
    cells: np.ndarray  # int32, flat, length W*H
    tile_uv_size: float

    def lookup(self, i: int, j: int) -> int:
        w, h = self.dims
        if not (0 <= i < w and 0 <= j < h):
            raise TilingError(f"recipe cell ({i}, {j}) outside dims {self.dims}")
        return int(self.cells[i + j * w])

    def validate(self, tiles: Sequence[WangSquareTile]) -> list[str]:
        w, h = self.dims
        problems = []
        by_id = {t.id: t for t in tiles}
        for j in range(h):
            for i in range(w):
                tile = by_id[self.lookup(i, j)]
                if i + 1 < w and tile.east != by_id[self.lookup(i + 1, j)].west:
                    problems.append(f"E/W mismatch between ({i},{j}) and ({i + 1},{j})")
                if j + 1 < h and tile.north != by_id[self.lookup(i, j + 1)].south:
                    problems.append(f"N/S mismatch between ({i},{j}) and ({i},{j + 1})")
        return problems


@dataclass
class TilingRecipe3D:
    """Grid of cube-tile indices; cell (i, j, k) at i + j*W + k*W*H."""

    dims: Tuple[int, int, int]
    cells: np.ndarray  # int32, flat

    def lookup(self, i: int, j: int, k: int) -> int:
        w, h, d = self.dims
        if not (0 <= i < w and 0 <= j < h and 0 <= k < d):
            raise TilingError(f"recipe cell ({i}, {j}, {k}) outside dims {self.dims}")
        return int(self.cells[i + j * w + k * w * h])

    def validate(self, tiles: Sequence[WangCubeTile]) -> list[str]:
        w, h, d = self.dims
        by_id = {t.id: t for t in tiles}
        problems = []
        for k in range(d):
            for j in range(h):
                for i in range(w):
                    f = by_id[self.lookup(i, j, k)].face_colors
                    if i + 1 < w and f[0] != by_id[self.lookup(i + 1, j, k)].face_colors[1]:
                        problems.append(f"x-face mismatch at ({i},{j},{k})")
                    if j + 1 < h and f[2] != by_id[self.lookup(i, j + 1, k)].face_colors[3]:
                        problems.append(f"y-face mismatch at ({i},{j},{k})")
                    if k + 1 < d and f[4] != by_id[self.lookup(i, j, k + 1)].face_colors[5]:
                        problems.append(f"z-face mismatch at ({i},{j},{k})")
        return problems


def generate_recipe_2d(
    tiles: Sequence[WangSquareTile],
    dims: Tuple[int, int],
    seed: int,
    tile_uv_size: float = 0.0,
) -> TilingRecipe2D:
    """Scanline greedy fill, row-major: cell (i, j) is drawn uniformly
    (seeded) from tiles whose W color matches the E color of (i-1, j)
    and whose S color matches the N color of (i, j-1); border cells
    constrain only the neighbors that exist."""
    if not tiles:
        raise TilingError("empty tile set")
    w, h = dims
    rng = np.random.RandomState(seed)
    cells = np.empty(w * h, dtype=np.int32)
    by_id = {t.id: t for t in tiles}
    for j in range(h):
        for i in range(w):
            need_w = by_id[int(cells[(i - 1) + j * w])].east if i > 0 else None
            need_s = by_id[int(cells[i + (j - 1) * w])].north if j > 0 else None
            cand = [
                t.id
                for t in tiles
                if (need_w is None or t.west == need_w) and (need_s is None or t.south == need_s)
            ]
            if not cand:
                raise TilingError(f"no tile fits cell ({i}, {j}) (needs W={need_w}, S={need_s})")
            cells[i + j * w] = cand[rng.randint(len(cand))]
    return TilingRecipe2D(dims, cells, tile_uv_size)


def generate_recipe_3d(
    tiles: Sequence[WangCubeTile],
    dims: Tuple[int, int, int],
    seed: int,
) -> TilingRecipe3D:
    """3D scanline fill with three predecessor constraints (-x, -y, -z)."""
    if not tiles:
        raise TilingError("empty tile set")
    w, h, d = dims
    rng = np.random.RandomState(seed)
    cells = np.empty(w * h * d, dtype=np.int32)
    by_id = {t.id: t for t in tiles}
    for k in range(d):
        for j in range(h):
            for i in range(w):
                need_x = (
                    by_id[int(cells[(i - 1) + j * w + k * w * h])].face_colors[0] if i > 0 else None
                )
                need_y = (
                    by_id[int(cells[i + (j - 1) * w + k * w * h])].face_colors[2] if j > 0 else None
                )
                need_z = (
                    by_id[int(cells[i + j * w + (k - 1) * w * h])].face_colors[4] if k > 0 else None
                )
                cand = [
                    t.id
                    for t in tiles
                    if (need_x is None or t.face_colors[1] == need_x)
                    and (need_y is None or t.face_colors[3] == need_y)
                    and (need_z is None or t.face_colors[5] == need_z)
                ]
                if not cand:
                    raise TilingError(
                        f"no cube fits cell ({i}, {j}, {k}) "
                        f"(needs -x={need_x}, -y={need_y}, -z={need_z})"
                    )
                cells[i + j * w + k * w * h] = cand[rng.randint(len(cand))]
    return TilingRecipe3D(dims, cells)


def default_recipe_dims_2d(tile_uv_size: float) -> Tuple[int, int]:
    """Smallest grid that covers the full uv unit square."""
    n = max(1, math.ceil(1.0 / tile_uv_size))
    return (n, n)


@dataclass(frozen=True)
class ReplicationArea:
    """The window of recipe cells that can overlap one triangle in uv.

    entries are ((i, j) recipe cell, tile-center uv) pairs enumerated
    u-major; dims equal the precomputed per-mesh maximum.
    """

    origin_cell: Tuple[int, int]
    dims: Tuple[int, int]
    entries: list[Tuple[Tuple[int, int], Vec2]]


def replication_area_dims(mesh, tile_uv_size: float) -> Tuple[int, int]:
    """Window size from the largest triangle's uv extent: ceil(extent /
    tile size) + 1 per axis, so any fractional alignment of the triangle
    against the tile lattice stays covered."""
    max_du = 0.0
    max_dv = 0.0
    for (u0, v0), (u1, v1), (u2, v2) in mesh.uv_triangles():
        max_du = max(max_du, max(u0, u1, u2) - min(u0, u1, u2))
        max_dv = max(max_dv, max(v0, v1, v2) - min(v0, v1, v2))
    return (
        math.ceil(max_du / tile_uv_size) + 1,
        math.ceil(max_dv / tile_uv_size) + 1,
    )


def map_triangle(
    tri_uv: Tuple[Vec2, Vec2, Vec2],
    recipe: TilingRecipe2D,
    dims: Tuple[int, int],
) -> ReplicationArea:
    """Anchor the replication window at floor(min_uv / tile size),
    clamped so it stays inside the recipe."""
    t = recipe.tile_uv_size
    w, h = recipe.dims
    nu, nv = dims
    if nu > w or nv > h:
        raise TilingError(f"replication window {dims} exceeds recipe dims {recipe.dims}")
    min_u = min(p[0] for p in tri_uv)
    min_v = min(p[1] for p in tri_uv)
    oi = min(max(math.floor(min_u / t), 0), max(w - nu, 0))
    oj = min(max(math.floor(min_v / t), 0), max(h - nv, 0))
    entries = []
    for iu in range(nu):
        for iv in range(nv):
            ci, cj = oi + iu, oj + iv
            entries.append(((ci, cj), ((ci + 0.5) * t, (cj + 0.5) * t)))
    return ReplicationArea((oi, oj), (nu, nv), entries)


def recipe_lookup_2d(recipe: TilingRecipe2D, cell: Tuple[int, int]) -> int:
    return recipe.lookup(cell[0], cell[1])


def recipe_lookup_3d(recipe: TilingRecipe3D, box: Tuple[int, int, int]) -> int:
    return recipe.lookup(box[0], box[1], box[2])


def instance_tile_bounds(inst: MoleculeInstance, molecule_aabb: Aabb) -> Aabb:
    """AABB of the instance in tile object space: the molecule AABB
    rotated by the instance rotation (corner hull) plus the local offset."""
    rot = inst.rotation_matrix()
    px, py, pz = inst.local_position
    lo = [math.inf] * 3
    hi = [-math.inf] * 3
    for corner in molecule_aabb.corners():
        x = rot[0] * corner[0] + rot[1] * corner[1] + rot[2] * corner[2] + px
        y = rot[3] * corner[0] + rot[4] * corner[1] + rot[5] * corner[2] + py
        z = rot[6] * corner[0] + rot[7] * corner[1] + rot[8] * corner[2] + pz
        for i, v in enumerate((x, y, z)):
            lo[i] = min(lo[i], v)
            hi[i] = max(hi[i], v)
    return Aabb(tuple(lo), tuple(hi))


def tile_content_bounds(
    square_tiles: Sequence[WangSquareTile],
    cube_tiles: Sequence[WangCubeTile],
    molecules_by_id,
) -> Tuple[Optional[Aabb], Optional[Aabb]]:
    """Union of instance AABBs across each tile set (shared conservative
    tile box used by the per-entry filter and the replication grid)."""

    def union_over(tiles):
        box: Optional[Aabb] = None
        for tile in tiles:
            for inst in tile.instances:
                b = instance_tile_bounds(inst, molecules_by_id[inst.molecule_type_id].aabb)
                box = b if box is None else box.union(b)
        return box

    return union_over(square_tiles), union_over(cube_tiles)
