"""Core grid: uniform subdivision of a proxy mesh's interior.

The grid has no per-box storage; every geometric quantity derives from
the metadata (AABB, dims, box size). Box coordinates follow the pure
floor convention, so points on an interior boundary belong to the
higher-index box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

from .geometry import Affine, Interval, Ray, Vec3, affine_invert, ray_triangle, transform_ray

BoxCoord = Tuple[int, int, int]


@dataclass(frozen=True)
class CoreGridMeta:
    """Grid AABB (mesh object space), box counts per axis, box size.

    The box size equals the Wang-cube edge on every axis, and
    min + dims*size covers the AABB.
    """

    aabb_min: Vec3
    dims: Tuple[int, int, int]
    box_size: Vec3

    def __post_init__(self):
        if any(d < 1 for d in self.dims):
            raise ValueError(f"grid dims must be positive, got {self.dims}")
        if any(s <= 0 for s in self.box_size):
            raise ValueError(f"box size must be positive, got {self.box_size}")

    @staticmethod
    def for_bounds(lo: Vec3, hi: Vec3, cube_size: float) -> "CoreGridMeta":
        dims = tuple(max(1, math.ceil((hi[i] - lo[i]) / cube_size)) for i in range(3))
        return CoreGridMeta(lo, dims, (cube_size, cube_size, cube_size))

    def aabb_max(self) -> Vec3:
        return (
            self.aabb_min[0] + self.dims[0] * self.box_size[0],
            self.aabb_min[1] + self.dims[1] * self.box_size[1],
            self.aabb_min[2] + self.dims[2] * self.box_size[2],
        )

    def box_count(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    def linear_index(self, b: BoxCoord) -> int:
        return b[0] + self.dims[0] * (b[1] + self.dims[1] * b[2])


def point_to_box(meta: CoreGridMeta, p: Vec3) -> BoxCoord:
    """floor((p - min) / size) per axis, clamped into the grid."""
    out = []
    for i in range(3):
        v = math.floor((p[i] - meta.aabb_min[i]) / meta.box_size[i])
        out.append(min(max(v, 0), meta.dims[i] - 1))
    return (out[0], out[1], out[2])


def box_min(meta: CoreGridMeta, b: BoxCoord) -> Vec3:
    return (
        b[0] * meta.box_size[0] + meta.aabb_min[0],
        b[1] * meta.box_size[1] + meta.aabb_min[1],
        b[2] * meta.box_size[2] + meta.aabb_min[2],
    )


def box_center(meta: CoreGridMeta, b: BoxCoord) -> Vec3:
    lo = box_min(meta, b)
    return (
        lo[0] + meta.box_size[0] * 0.5,
        lo[1] + meta.box_size[1] * 0.5,
        lo[2] + meta.box_size[2] * 0.5,
    )


def ray_interval(
    world_transform: Affine,
    mesh,
    ray: Ray,
    eps: float,
) -> Optional[Tuple[float, float]]:
    """Interior segment of a world ray through a mesh instance.

    Casts in mesh object space (t is transform-invariant): t_q = closest
    front-facing triangle hit, t_k = closest back-facing hit. Outside
    the volume the interval is [t_q, t_k]; inside (back face first) it
    is [eps, t_k]; no back-face exit means no interior segment. The
    closest-front/closest-back rule follows the single-interval
    formulation, so multi-segment interiors of non-convex meshes are
    under-covered by design.
    """
    local = transform_ray(affine_invert(world_transform), ray)
    t_front = math.inf
    t_back = math.inf
    for t in range(len(mesh.triangles)):
        hit = ray_triangle(local, *mesh.tri_positions(t))
        if hit is None:
            continue
        if hit.front_facing:
            t_front = min(t_front, hit.t)
        else:
            t_back = min(t_back, hit.t)
    if math.isinf(t_back):
        return None
    if t_front < t_back:
        return (t_front, t_back)
    if t_front == t_back:
        return None  # grazing contact, zero-length interior
    if eps >= t_back:
        return None
    return (eps, t_back)


def grid_traverse(meta: CoreGridMeta, ray: Ray, interval: Tuple[float, float]) -> list[BoxCoord]:
    """3D DDA over [t_lo, t_hi], emitting boxes in increasing entry-t
    order until the box containing t_hi is emitted or the walker leaves
    the grid. Axis ties step in x, y, z priority order."""
    boxes: list[BoxCoord] = []
    for b in _walk(meta, ray.origin, ray.direction, interval[0], interval[1]):
        boxes.append(b)
    return boxes


def _walk(meta: CoreGridMeta, o: Vec3, d: Vec3, t_lo: float, t_hi: float):
    span = t_hi - t_lo
    if span <= 0.0:
        return
    start = (
        o[0] + (t_lo + span * 1e-9) * d[0],
        o[1] + (t_lo + span * 1e-9) * d[1],
        o[2] + (t_lo + span * 1e-9) * d[2],
    )
    i, j, k = point_to_box(meta, start)
    cur = [i, j, k]
    step = [0, 0, 0]
    t_next = [math.inf, math.inf, math.inf]
    t_delta = [math.inf, math.inf, math.inf]
    for a in range(3):
        if d[a] > 0.0:
            step[a] = 1
            boundary = meta.aabb_min[a] + (cur[a] + 1) * meta.box_size[a]
            t_next[a] = (boundary - o[a]) / d[a]
            t_delta[a] = meta.box_size[a] / d[a]
        elif d[a] < 0.0:
            step[a] = -1
            boundary = meta.aabb_min[a] + cur[a] * meta.box_size[a]
            t_next[a] = (boundary - o[a]) / d[a]
            t_delta[a] = -meta.box_size[a] / d[a]
    while True:
        yield (cur[0], cur[1], cur[2])
        if t_next[0] <= t_next[1] and t_next[0] <= t_next[2]:
            axis = 0
        elif t_next[1] <= t_next[2]:
            axis = 1
        else:
            axis = 2
        if t_next[axis] > t_hi:
            return  # the box containing t_hi has been emitted
        cur[axis] += step[axis]
        if cur[axis] < 0 or cur[axis] >= meta.dims[axis]:
            return
        t_next[axis] += t_delta[axis]
