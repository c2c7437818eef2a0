"""Bounding-volume hierarchy used at every level of the traversal tree.

This is the software stand-in for hardware BLAS/TLAS: one generic BVH
over primitive AABBs, built once per content type (prisms per mesh,
instance boxes per tile, atoms per molecule) and traversed read-only by
any number of rays. There is deliberately no instance-node concept --
per-copy transforms are computed during traversal by the renderer.

Builds are deterministic: median split on the widest centroid axis with
a stable ordering, so identical inputs give identical hierarchies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .geometry import Aabb, Ray

LEAF_SIZE = 4


@dataclass
class Bvh:
    """Flat node arrays; leaves reference ranges of ``prim_ids``."""

    node_min: np.ndarray  # (n, 3) float64
    node_max: np.ndarray  # (n, 3) float64
    node_axis: np.ndarray  # (n,) int64, split axis of inner nodes
    node_left: np.ndarray  # (n,) int64, -1 for leaves
    node_right: np.ndarray  # (n,) int64, -1 for leaves
    node_start: np.ndarray  # (n,) int64, prim range start for leaves
    node_count: np.ndarray  # (n,) int64, prim count for leaves (0 = inner)
    prim_ids: np.ndarray  # (m,) int64, permutation of input indices

    @property
    def n_nodes(self) -> int:
        return len(self.node_axis)

    @property
    def n_prims(self) -> int:
        return len(self.prim_ids)

    def nbytes(self) -> int:
        return sum(
            a.nbytes
            for a in (
                self.node_min,
                self.node_max,
                self.node_axis,
                self.node_left,
                self.node_right,
                self.node_start,
                self.node_count,
                self.prim_ids,
            )
        )

    def root_bounds(self) -> Optional[Aabb]:
        if self.n_nodes == 0:
            return None
        return Aabb(tuple(self.node_min[0]), tuple(self.node_max[0]))


def build_bvh(bounds: Sequence[Aabb], leaf_size: int = LEAF_SIZE) -> Bvh:
    """Build a BVH over primitive AABBs. An empty input yields an empty
    hierarchy that intersects nothing."""
    n = len(bounds)
    if n == 0:
        e = np.empty((0,), np.int64)
        return Bvh(np.empty((0, 3)), np.empty((0, 3)), e, e.copy(), e.copy(), e.copy(), e.copy(), e.copy())

    lo = np.array([b.min for b in bounds], dtype=np.float64)
    hi = np.array([b.max for b in bounds], dtype=np.float64)
    centroids = (lo + hi) * 0.5
    order = np.arange(n, dtype=np.int64)

    node_min: list[np.ndarray] = []
    node_max: list[np.ndarray] = []
    node_axis: list[int] = []
    node_left: list[int] = []
    node_right: list[int] = []
    node_start: list[int] = []
    node_count: list[int] = []

    def new_node(start: int, count: int) -> int:
        ids = order[start : start + count]
        node_min.append(lo[ids].min(axis=0))
        node_max.append(hi[ids].max(axis=0))
        node_axis.append(0)
        node_left.append(-1)
        node_right.append(-1)
        node_start.append(start)
        node_count.append(count)
        return len(node_axis) - 1

    root = new_node(0, n)
    stack = [root]
    while stack:
        node = stack.pop()
        start, count = node_start[node], node_count[node]
        if count <= leaf_size:
            continue
        ids = order[start : start + count]
        cen = centroids[ids]
        extent = cen.max(axis=0) - cen.min(axis=0)
        axis = int(np.argmax(extent))
        # stable sort on (centroid, original id) keeps builds deterministic
        perm = np.lexsort((ids, cen[:, axis]))
        order[start : start + count] = ids[perm]
        mid = count // 2
        left = new_node(start, mid)
        right = new_node(start + mid, count - mid)
        node_axis[node] = axis
        node_left[node] = left
        node_right[node] = right
        node_count[node] = 0
        stack.append(left)
        stack.append(right)

    return Bvh(
        np.array(node_min, dtype=np.float64),
        np.array(node_max, dtype=np.float64),
        np.array(node_axis, dtype=np.int64),
        np.array(node_left, dtype=np.int64),
        np.array(node_right, dtype=np.int64),
        np.array(node_start, dtype=np.int64),
        np.array(node_count, dtype=np.int64),
        order,
    )


def _node_interval(bvh: Bvh, node: int, o, d, t_min: float, t_max: float) -> bool:
    """Inclusive slab test: keep nodes whose interval touches [t_min, t_max]."""
    lo = bvh.node_min[node]
    hi = bvh.node_max[node]
    t_enter = -math.inf
    t_exit = math.inf
    for i in range(3):
        if d[i] != 0.0:
            inv = 1.0 / d[i]
            t1 = (lo[i] - o[i]) * inv
            t2 = (hi[i] - o[i]) * inv
            if t1 > t2:
                t1, t2 = t2, t1
            if t1 > t_enter:
                t_enter = t1
            if t2 < t_exit:
                t_exit = t2
        elif o[i] < lo[i] or o[i] > hi[i]:
            return False
    return t_enter <= t_exit and t_enter <= t_max and t_exit >= t_min


def bvh_traverse(
    bvh: Bvh,
    ray: Ray,
    visit: Callable[[int], Optional[float]],
) -> Optional[Tuple[float, int]]:
    """Closest accepted hit over primitives whose bounds overlap the ray.

    ``visit(prim_id)`` returns a hit t or None; each accepted hit shrinks
    the working t_max so farther nodes are pruned. Returns (t, prim_id)
    of the smallest accepted t, or None. Pruning rejects only nodes whose
    entry t strictly exceeds the working t_max, so equal-t candidates are
    all visited and the result is traversal-order independent.
    """
    if bvh.n_nodes == 0:
        return None
    o, d = ray.origin, ray.direction
    t_max = ray.t_max
    best: Optional[Tuple[float, int]] = None
    stack = [0]
    while stack:
        node = stack.pop()
        if not _node_interval(bvh, node, o, d, ray.t_min, t_max):
            continue
        left = bvh.node_left[node]
        if left < 0:
            start = bvh.node_start[node]
            for k in range(start, start + bvh.node_count[node]):
                pid = int(bvh.prim_ids[k])
                t = visit(pid)
                if t is None:
                    continue
                if t <= t_max and (best is None or (t, pid) < best):
                    best = (t, pid)
                    t_max = t
        else:
            right = bvh.node_right[node]
            # near child first so t_max shrinks as early as possible
            if d[bvh.node_axis[node]] < 0.0:
                stack.append(int(left))
                stack.append(int(right))
            else:
                stack.append(int(right))
                stack.append(int(left))
    return best


def validate_bvh(bvh: Bvh, bounds: Sequence[Aabb]) -> list[str]:
    """Containment/coverage violations; empty list means a valid tree."""
    problems: list[str] = []
    if bvh.n_nodes == 0:
        if len(bounds) != 0:
            problems.append("empty hierarchy over non-empty input")
        return problems
    if sorted(bvh.prim_ids.tolist()) != list(range(len(bounds))):
        problems.append("prim_ids is not a permutation of the input")
    for node in range(bvh.n_nodes):
        lo, hi = bvh.node_min[node], bvh.node_max[node]
        if np.any(lo > hi):
            problems.append(f"node {node} has inverted bounds")
            continue
        left = bvh.node_left[node]
        if left < 0:
            start, count = bvh.node_start[node], bvh.node_count[node]
            for k in range(start, start + count):
                b = bounds[int(bvh.prim_ids[k])]
                if np.any(np.asarray(b.min) < lo - 1e-12) or np.any(np.asarray(b.max) > hi + 1e-12):
                    problems.append(f"leaf {node} does not contain primitive {int(bvh.prim_ids[k])}")
        else:
            for child in (left, bvh.node_right[node]):
                if np.any(bvh.node_min[child] < lo - 1e-12) or np.any(bvh.node_max[child] > hi + 1e-12):
                    problems.append(f"node {node} does not contain child {child}")
    return problems


@dataclass
class RepGrid:
    """Static object-space grid of tile-sized AABBs.

    One grid per mesh covers its replication-area window; traversing the
    grid's BVH visits candidate tile cells in closest-first opportunity
    order instead of looping the window sequentially.
    """

    dims: Tuple[int, int]
    tile_world_size: float
    cell_bounds: list[Aabb]  # row-major (u-major) cell AABBs, tile object space
    tree: Bvh

    def cell_offset(self, iu: int, iv: int) -> Tuple[float, float]:
        """Center of cell (iu, iv) relative to the grid center, in the
        tile plane (x toward +u, z toward +v)."""
        nu, nv = self.dims
        s = self.tile_world_size
        return ((iu + 0.5) * s - nu * s * 0.5, (iv + 0.5) * s - nv * s * 0.5)

    def nbytes(self) -> int:
        return 48 * len(self.cell_bounds) + self.tree.nbytes()


def build_rep_grid(
    dims: Tuple[int, int],
    tile_world_size: float,
    h_max: float,
    cell_bounds: Optional[Aabb] = None,
    margin: float = 0.0,
) -> RepGrid:
    """Lay out dims[0] x dims[1] tile AABBs centered on the origin.

    By default each cell spans (s, 2*h_max, s); a caller may pass a
    conservative per-cell box instead (e.g. the union of instance AABBs
    over the tile set). ``margin`` pads the BVH bounds only, so BVH
    candidate enumeration is a superset of any exact per-cell test.
    """
    nu, nv = dims
    if nu < 1 or nv < 1:
        raise ValueError(f"rep grid dims must be >= (1, 1), got {dims}")
    s = tile_world_size
    if cell_bounds is None:
        cell_bounds = Aabb((-s * 0.5, -h_max, -s * 0.5), (s * 0.5, h_max, s * 0.5))
    cells = []
    padded = []
    grid = RepGrid((nu, nv), s, [], build_bvh([]))
    for iu in range(nu):
        for iv in range(nv):
            cx, cz = grid.cell_offset(iu, iv)
            box = Aabb(
                (cell_bounds.min[0] + cx, cell_bounds.min[1], cell_bounds.min[2] + cz),
                (cell_bounds.max[0] + cx, cell_bounds.max[1], cell_bounds.max[2] + cz),
            )
            cells.append(box)
            padded.append(box.expand(margin) if margin > 0.0 else box)
    grid.cell_bounds = cells
    grid.tree = build_bvh(padded, leaf_size=1)
    return grid
