"""Compiled per-pixel traversal kernels over the flattened scene arrays.

The scene is "uploaded" once into flat numpy buffers (FlatScene) and the
three-level traversal runs inside numba-compiled kernels: scene level
(prism/grid), tile level (instance boxes), molecule level (atom
spheres), composing every transform on the fly.

Bit-exactness contract: every arithmetic helper here mirrors the
expression shapes of the pure-Python kernels in geometry.py (and the
transform helpers in render.py) term by term. numba compiles without
fastmath, so IEEE double results are bit-identical across the compiled
path, the Python ops, and the vectorized test oracle. Keep the shapes
in sync when editing either side.

Closest-hit determinism: candidates are ordered by the lexicographic
key (t, mesh instance, prism-or-box, recipe cell, tile instance, atom)
and BVH/box pruning rejects only entry t strictly greater than the
working t_max, so the winner is independent of traversal order.
"""

from __future__ import annotations

import math
import os
from typing import NamedTuple

import numpy as np

if os.environ.get("TILERAY_DISABLE_NUMBA"):
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
else:
    from numba import njit  # type: ignore


INF = math.inf
_STACK = 128

# layer tags in the per-pixel id buffer
LAYER_MISS = 0
LAYER_SHELL = 1
LAYER_CORE = 2


class FlatScene(NamedTuple):
    """Scene buffers shared read-only by all render workers."""

    # molecules (atom level)
    mol_atom_start: np.ndarray
    mol_atom_count: np.ndarray
    mol_bvh_root: np.ndarray
    mol_color: np.ndarray  # (nmol, 3)
    atom_x: np.ndarray
    atom_y: np.ndarray
    atom_z: np.ndarray
    atom_r: np.ndarray
    # square tiles (tile level, membrane)
    sq_inst_start: np.ndarray
    sq_inst_count: np.ndarray
    sq_bvh_root: np.ndarray
    sqi_mol: np.ndarray
    sqi_pos: np.ndarray  # (n, 3)
    sqi_rot: np.ndarray  # (n, 9)
    sqi_aabb: np.ndarray  # (n, 6)
    sq_box: np.ndarray  # (6,) shared conservative tile box
    # cube tiles (tile level, soluble)
    cu_inst_start: np.ndarray
    cu_inst_count: np.ndarray
    cu_bvh_root: np.ndarray
    cui_mol: np.ndarray
    cui_pos: np.ndarray
    cui_rot: np.ndarray
    cui_aabb: np.ndarray
    # tiling recipes
    rc2_cells: np.ndarray
    rc2_w: int
    rc2_h: int
    tile_uv: float
    sq_size: float
    rc3_cells: np.ndarray
    rc3_w: int
    rc3_h: int
    rc3_d: int
    # meshes: triangles and cached per-triangle tile mapping
    me_tri_start: np.ndarray
    me_tri_count: np.ndarray
    tri_p: np.ndarray  # (ntri, 9) vertex positions
    tri_n: np.ndarray  # (ntri, 9) vertex normals
    tri_uv: np.ndarray  # (ntri, 6)
    tri_ju: np.ndarray  # (ntri, 3) d(position)/du, object space
    tri_jv: np.ndarray  # (ntri, 3)
    tri_iuv: np.ndarray  # (ntri, 4) inverse uv edge matrix
    tri_ent_start: np.ndarray
    tri_ent_count: np.ndarray
    ent_cell_i: np.ndarray
    ent_cell_j: np.ndarray
    ent_gu: np.ndarray
    ent_gv: np.ndarray
    ent_tile: np.ndarray
    # meshes: prisms (scene level, shell)
    me_prism_root: np.ndarray
    pr_tri: np.ndarray  # global triangle slot
    pr_verts: np.ndarray  # (npr, 18)
    pr_planes: np.ndarray  # (npr, 20) up to 5 outward planes
    pr_nplanes: np.ndarray
    pr_aabb: np.ndarray  # (npr, 6)
    # meshes: proxy triangles BVH (core interval) + core grid + rep grid
    me_tri_root: np.ndarray
    me_grid_min: np.ndarray  # (nmesh, 3)
    me_grid_dims: np.ndarray  # (nmesh, 3) int64
    me_grid_box: np.ndarray  # (nmesh, 3)
    me_rep_root: np.ndarray
    me_rep_nu: np.ndarray
    me_rep_nv: np.ndarray
    # shared BVH node pool
    bn_min: np.ndarray  # (n, 3)
    bn_max: np.ndarray
    bn_axis: np.ndarray
    bn_left: np.ndarray
    bn_right: np.ndarray
    bn_start: np.ndarray
    bn_count: np.ndarray
    bp_ids: np.ndarray
    # mesh instances (scene level)
    in_mesh: np.ndarray
    in_M: np.ndarray  # (ninst, 12) row-major linear + translation
    in_Minv: np.ndarray
    in_shell: np.ndarray  # uint8
    in_core: np.ndarray
    in_shell_waabb: np.ndarray  # (ninst, 6) derived world bounds
    in_core_waabb: np.ndarray
    # scene scalars
    eps_scene: float
    eps_interval: float


class Workspace(NamedTuple):
    """Per-frame scratch reused across pixels (single worker each)."""

    stack_a: np.ndarray
    stack_b: np.ndarray
    stack_c: np.ndarray
    stack_d: np.ndarray
    cand_t: np.ndarray
    cand_i: np.ndarray
    winv: np.ndarray  # winner inverse transform (12)
    hit_ids: np.ndarray  # winner ids (5)


def make_workspace(n_instances: int) -> Workspace:
    return Workspace(
        np.empty(_STACK, np.int64),
        np.empty(_STACK, np.int64),
        np.empty(_STACK, np.int64),
        np.empty(_STACK, np.int64),
        np.empty(max(n_instances, 1), np.float64),
        np.empty(max(n_instances, 1), np.int64),
        np.empty(12, np.float64),
        np.empty(5, np.int64),
    )


# ---------------------------------------------------------------------------
# scalar helpers (canonical shapes; see module docstring)


@njit(cache=True)
def _slab(ox, oy, oz, dx, dy, dz, l0, l1, l2, h0, h1, h2):
    t_enter = -INF
    t_exit = INF
    if dx != 0.0:
        inv = 1.0 / dx
        t1 = (l0 - ox) * inv
        t2 = (h0 - ox) * inv
        if t1 > t2:
            t1, t2 = t2, t1
        if t1 > t_enter:
            t_enter = t1
        if t2 < t_exit:
            t_exit = t2
    elif ox < l0 or ox > h0:
        return False, 0.0, 0.0
    if dy != 0.0:
        inv = 1.0 / dy
        t1 = (l1 - oy) * inv
        t2 = (h1 - oy) * inv
        if t1 > t2:
            t1, t2 = t2, t1
        if t1 > t_enter:
            t_enter = t1
        if t2 < t_exit:
            t_exit = t2
    elif oy < l1 or oy > h1:
        return False, 0.0, 0.0
    if dz != 0.0:
        inv = 1.0 / dz
        t1 = (l2 - oz) * inv
        t2 = (h2 - oz) * inv
        if t1 > t2:
            t1, t2 = t2, t1
        if t1 > t_enter:
            t_enter = t1
        if t2 < t_exit:
            t_exit = t2
    elif oz < l2 or oz > h2:
        return False, 0.0, 0.0
    if t_enter > t_exit:
        return False, 0.0, 0.0
    return True, t_enter, t_exit


@njit(cache=True)
def _sphere_t(ox, oy, oz, dx, dy, dz, cx, cy, cz, r, t_min, t_max):
    ocx = ox - cx
    ocy = oy - cy
    ocz = oz - cz
    a = dx * dx + dy * dy + dz * dz
    b = ocx * dx + ocy * dy + ocz * dz
    c = ocx * ocx + ocy * ocy + ocz * ocz - r * r
    disc = b * b - a * c
    if disc < 0.0:
        return False, 0.0
    s = math.sqrt(disc)
    t = (-b - s) / a
    if t < t_min:
        t = (-b + s) / a
    if t_min <= t <= t_max:
        return True, t
    return False, 0.0


@njit(cache=True)
def _tri_t(ox, oy, oz, dx, dy, dz, p, t_min, t_max):
    """Returns (code, t): code 0 = miss, 1 = front-facing, 2 = back-facing."""
    e1x = p[3] - p[0]
    e1y = p[4] - p[1]
    e1z = p[5] - p[2]
    e2x = p[6] - p[0]
    e2y = p[7] - p[1]
    e2z = p[8] - p[2]
    pvx = dy * e2z - dz * e2y
    pvy = dz * e2x - dx * e2z
    pvz = dx * e2y - dy * e2x
    det = e1x * pvx + e1y * pvy + e1z * pvz
    if abs(det) < 1e-14:
        return 0, 0.0
    inv_det = 1.0 / det
    tvx = ox - p[0]
    tvy = oy - p[1]
    tvz = oz - p[2]
    u = (tvx * pvx + tvy * pvy + tvz * pvz) * inv_det
    if u < 0.0 or u > 1.0:
        return 0, 0.0
    qvx = tvy * e1z - tvz * e1y
    qvy = tvz * e1x - tvx * e1z
    qvz = tvx * e1y - tvy * e1x
    v = (dx * qvx + dy * qvy + dz * qvz) * inv_det
    if v < 0.0 or u + v > 1.0:
        return 0, 0.0
    t = (e2x * qvx + e2y * qvy + e2z * qvz) * inv_det
    if t < t_min or t > t_max:
        return 0, 0.0
    if det > 0.0:
        return 1, t
    return 2, t


@njit(cache=True)
def _mat3_inv9(m0, m1, m2, m3, m4, m5, m6, m7, m8):
    det = m0 * (m4 * m8 - m5 * m7) - m1 * (m3 * m8 - m5 * m6) + m2 * (m3 * m7 - m4 * m6)
    if abs(det) <= 1e-12:
        return False, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0
    inv_det = 1.0 / det
    return (
        True,
        (m4 * m8 - m5 * m7) * inv_det,
        (m2 * m7 - m1 * m8) * inv_det,
        (m1 * m5 - m2 * m4) * inv_det,
        (m5 * m6 - m3 * m8) * inv_det,
        (m0 * m8 - m2 * m6) * inv_det,
        (m2 * m3 - m0 * m5) * inv_det,
        (m3 * m7 - m4 * m6) * inv_det,
        (m1 * m6 - m0 * m7) * inv_det,
        (m0 * m4 - m1 * m3) * inv_det,
    )


@njit(cache=True)
def _mix64(z):
    z = (z + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _hash_unit(h):
    return float(h >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def _jitter_mat(mesh_instance, cell, inst_local, time, amplitude):
    """Deterministic small rotation; identical inputs, identical output.

    The phase argument uses (f*time) mod 1 so time and time + 1/f give
    bit-identical angles. f = 1 Hz.
    """
    h1 = _mix64(np.uint64(mesh_instance) ^ _mix64(np.uint64(cell) ^ _mix64(np.uint64(inst_local))))
    h2 = _mix64(h1)
    h3 = _mix64(h2)
    u1 = _hash_unit(h1)
    u2 = _hash_unit(h2)
    u3 = _hash_unit(h3)
    az = 1.0 - 2.0 * u1
    rr = math.sqrt(max(0.0, 1.0 - az * az))
    phi = 6.283185307179586 * u2
    ax = rr * math.cos(phi)
    ay = rr * math.sin(phi)
    phase = 6.283185307179586 * u3
    frac = (1.0 * time) % 1.0
    angle = amplitude * math.sin(6.283185307179586 * frac + phase)
    c = math.cos(angle)
    s = math.sin(angle)
    t = 1.0 - c
    return (
        t * ax * ax + c,
        t * ax * ay - s * az,
        t * ax * az + s * ay,
        t * ax * ay + s * az,
        t * ay * ay + c,
        t * ay * az - s * ax,
        t * ax * az - s * ay,
        t * ay * az + s * ax,
        t * az * az + c,
    )


@njit(cache=True)
def _clip_visible_point(px, py, pz, nx, ny, nz, off):
    return nx * px + ny * py + nz * pz - off >= 0.0


@njit(cache=True)
def _atom_walk(fs, root, ox, oy, oz, dx, dy, dz, t_min, t_max, stack):
    """Closest atom hit of one molecule; ties go to the smaller slot."""
    best_t = INF
    best_slot = -1
    sp = 0
    stack[sp] = root
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        ok, te, tx = _slab(
            ox, oy, oz, dx, dy, dz,
            fs.bn_min[node, 0], fs.bn_min[node, 1], fs.bn_min[node, 2],
            fs.bn_max[node, 0], fs.bn_max[node, 1], fs.bn_max[node, 2],
        )
        if not ok or te > t_max or tx < t_min:
            continue
        left = fs.bn_left[node]
        if left < 0:
            start = fs.bn_start[node]
            for k in range(start, start + fs.bn_count[node]):
                slot = fs.bp_ids[k]
                hit, t = _sphere_t(
                    ox, oy, oz, dx, dy, dz,
                    fs.atom_x[slot], fs.atom_y[slot], fs.atom_z[slot], fs.atom_r[slot],
                    t_min, t_max,
                )
                if hit and (t < best_t or (t == best_t and slot < best_slot)):
                    best_t = t
                    best_slot = slot
                    t_max = t
        else:
            right = fs.bn_right[node]
            axis = fs.bn_axis[node]
            da = dx if axis == 0 else (dy if axis == 1 else dz)
            if da < 0.0:
                stack[sp] = left
                sp += 1
                stack[sp] = right
                sp += 1
            else:
                stack[sp] = right
                sp += 1
                stack[sp] = left
                sp += 1
    return best_t, best_slot


@njit(cache=True)
def _key_less(t1, m1, r1, c1, i1, a1, t2, m2, r2, c2, i2, a2):
    if t1 != t2:
        return t1 < t2
    if m1 != m2:
        return m1 < m2
    if r1 != r2:
        return r1 < r2
    if c1 != c2:
        return c1 < c2
    if i1 != i2:
        return i1 < i2
    return a1 < a2


@njit(cache=True)
def _rotation_between_mat(ax, ay, az, bx, by, bz):
    """Minimal rotation taking unit a onto unit b (Rodrigues)."""
    cx = ay * bz - az * by
    cy = az * bx - ax * bz
    cz = ax * by - ay * bx
    s = math.sqrt(cx * cx + cy * cy + cz * cz)
    c = ax * bx + ay * by + az * bz
    if s < 1e-12:
        if c > 0.0:
            return 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0
        # antiparallel: pi about an axis orthogonal to a
        if abs(ax) < 0.9:
            ox, oy, oz = 1.0, 0.0, 0.0
        else:
            ox, oy, oz = 0.0, 1.0, 0.0
        ux = ay * oz - az * oy
        uy = az * ox - ax * oz
        uz = ax * oy - ay * ox
        n = math.sqrt(ux * ux + uy * uy + uz * uz)
        ux, uy, uz = ux / n, uy / n, uz / n
        angle = math.pi
    else:
        ux, uy, uz = cx / s, cy / s, cz / s
        angle = math.atan2(s, c)
    co = math.cos(angle)
    si = math.sin(angle)
    t = 1.0 - co
    return (
        t * ux * ux + co,
        t * ux * uy - si * uz,
        t * ux * uz + si * uy,
        t * ux * uy + si * uz,
        t * uy * uy + co,
        t * uy * uz - si * ux,
        t * ux * uz - si * uy,
        t * uy * uz + si * ux,
        t * uz * uz + co,
    )


@njit(cache=True)
def _mat3_mul9(a0, a1, a2, a3, a4, a5, a6, a7, a8, b0, b1, b2, b3, b4, b5, b6, b7, b8):
    return (
        a0 * b0 + a1 * b3 + a2 * b6,
        a0 * b1 + a1 * b4 + a2 * b7,
        a0 * b2 + a1 * b5 + a2 * b8,
        a3 * b0 + a4 * b3 + a5 * b6,
        a3 * b1 + a4 * b4 + a5 * b7,
        a3 * b2 + a4 * b5 + a5 * b8,
        a6 * b0 + a7 * b3 + a8 * b6,
        a6 * b1 + a7 * b4 + a8 * b7,
        a6 * b2 + a7 * b5 + a8 * b8,
    )


@njit(cache=True)
def _shell_entry(
    fs,
    ii, pr, tri, e,
    m0, m1, m2, m3, m4, m5, m6, m7, m8, mt0, mt1, mt2,
    i0, i1, i2, i3, i4, i5, i6, i7, i8, it0, it1, it2,
    a0, a1, a2, a3, a4, a5, a6, a7, a8,  # M1 linear
    l0, l1, l2, l3, l4, l5, l6, l7, l8,  # M1 linear inverse
    dtx, dty, dtz,  # tile-space ray direction
    fnx, fny, fnz,  # flat world triangle normal (M1 y column)
    ox, oy, oz, dx, dy, dz,
    t_min,
    smooth, clip_on, cnx, cny, cnz, coff, time, amp,
    bt, bm, br, bc, bi, ba,
    winv, stack_c, stack_d,
):
    """Process one replication-area entry (one candidate tile cell)."""
    gu = fs.ent_gu[e]
    gv = fs.ent_gv[e]
    # barycentric weights of the tile center in the triangle's uv frame
    du = gu - fs.tri_uv[tri, 0]
    dv = gv - fs.tri_uv[tri, 1]
    w1 = fs.tri_iuv[tri, 0] * du + fs.tri_iuv[tri, 1] * dv
    w2 = fs.tri_iuv[tri, 2] * du + fs.tri_iuv[tri, 3] * dv
    w0 = 1.0 - w1 - w2
    gox = fs.tri_p[tri, 0] * w0 + fs.tri_p[tri, 3] * w1 + fs.tri_p[tri, 6] * w2
    goy = fs.tri_p[tri, 1] * w0 + fs.tri_p[tri, 4] * w1 + fs.tri_p[tri, 7] * w2
    goz = fs.tri_p[tri, 2] * w0 + fs.tri_p[tri, 5] * w1 + fs.tri_p[tri, 8] * w2
    gwx = m0 * gox + m1 * goy + m2 * goz + mt0
    gwy = m3 * gox + m4 * goy + m5 * goz + mt1
    gwz = m6 * gox + m7 * goy + m8 * goz + mt2
    # tile-space ray origin via the inverted tile frame
    ti0 = -(l0 * gwx + l1 * gwy + l2 * gwz)
    ti1 = -(l3 * gwx + l4 * gwy + l5 * gwz)
    ti2 = -(l6 * gwx + l7 * gwy + l8 * gwz)
    otx = l0 * ox + l1 * oy + l2 * oz + ti0
    oty = l3 * ox + l4 * oy + l5 * oz + ti1
    otz = l6 * ox + l7 * oy + l8 * oz + ti2
    ok, te, tx = _slab(
        otx, oty, otz, dtx, dty, dtz,
        fs.sq_box[0], fs.sq_box[1], fs.sq_box[2],
        fs.sq_box[3], fs.sq_box[4], fs.sq_box[5],
    )
    if not ok or te > bt or tx < t_min:
        return bt, bm, br, bc, bi, ba
    tile = fs.ent_tile[e]
    root = fs.sq_bvh_root[tile]
    if root < 0:
        return bt, bm, br, bc, bi, ba
    cell_lin = fs.ent_cell_i[e] + fs.ent_cell_j[e] * fs.rc2_w
    sp = 0
    stack_c[sp] = root
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack_c[sp]
        ok, te, tx = _slab(
            otx, oty, otz, dtx, dty, dtz,
            fs.bn_min[node, 0], fs.bn_min[node, 1], fs.bn_min[node, 2],
            fs.bn_max[node, 0], fs.bn_max[node, 1], fs.bn_max[node, 2],
        )
        if not ok or te > bt or tx < t_min:
            continue
        left = fs.bn_left[node]
        if left >= 0:
            axis = fs.bn_axis[node]
            da = dtx if axis == 0 else (dty if axis == 1 else dtz)
            right = fs.bn_right[node]
            if da < 0.0:
                stack_c[sp] = left
                sp += 1
                stack_c[sp] = right
                sp += 1
            else:
                stack_c[sp] = right
                sp += 1
                stack_c[sp] = left
                sp += 1
            continue
        start = fs.bn_start[node]
        for kk in range(start, start + fs.bn_count[node]):
            si = fs.bp_ids[kk]
            ok, te, tx = _slab(
                otx, oty, otz, dtx, dty, dtz,
                fs.sqi_aabb[si, 0], fs.sqi_aabb[si, 1], fs.sqi_aabb[si, 2],
                fs.sqi_aabb[si, 3], fs.sqi_aabb[si, 4], fs.sqi_aabb[si, 5],
            )
            if not ok or te > bt or tx < t_min:
                continue
            px = fs.sqi_pos[si, 0]
            py = fs.sqi_pos[si, 1]
            pz = fs.sqi_pos[si, 2]
            # instance reference point, world then mesh-object space
            rwx = a0 * px + a1 * py + a2 * pz + gwx
            rwy = a3 * px + a4 * py + a5 * pz + gwy
            rwz = a6 * px + a7 * py + a8 * pz + gwz
            rox = i0 * rwx + i1 * rwy + i2 * rwz + it0
            roy = i3 * rwx + i4 * rwy + i5 * rwz + it1
            roz = i6 * rwx + i7 * rwy + i8 * rwz + it2
            inside = True
            for pl in range(fs.pr_nplanes[pr]):
                nx = fs.pr_planes[pr, pl * 4 + 0]
                ny = fs.pr_planes[pr, pl * 4 + 1]
                nz = fs.pr_planes[pr, pl * 4 + 2]
                dd = fs.pr_planes[pr, pl * 4 + 3]
                if nx * rox + ny * roy + nz * roz - dd > fs.eps_scene:
                    inside = False
                    break
            if not inside:
                continue
            if clip_on:
                # reject when the world instance AABB is fully invisible
                visible = False
                for ci in range(8):
                    qx = fs.sqi_aabb[si, 0] if ci & 1 == 0 else fs.sqi_aabb[si, 3]
                    qy = fs.sqi_aabb[si, 1] if ci & 2 == 0 else fs.sqi_aabb[si, 4]
                    qz = fs.sqi_aabb[si, 2] if ci & 4 == 0 else fs.sqi_aabb[si, 5]
                    wx = a0 * qx + a1 * qy + a2 * qz + gwx
                    wy = a3 * qx + a4 * qy + a5 * qz + gwy
                    wz = a6 * qx + a7 * qy + a8 * qz + gwz
                    if _clip_visible_point(wx, wy, wz, cnx, cny, cnz, coff):
                        visible = True
                        break
                if not visible:
                    continue
            # instance-to-world linear: M1 . (jitter . local rotation)
            r0 = fs.sqi_rot[si, 0]
            r1 = fs.sqi_rot[si, 1]
            r2 = fs.sqi_rot[si, 2]
            r3 = fs.sqi_rot[si, 3]
            r4 = fs.sqi_rot[si, 4]
            r5 = fs.sqi_rot[si, 5]
            r6 = fs.sqi_rot[si, 6]
            r7 = fs.sqi_rot[si, 7]
            r8 = fs.sqi_rot[si, 8]
            if amp > 0.0:
                j0, j1, j2, j3, j4, j5, j6, j7, j8 = _jitter_mat(
                    ii, cell_lin, si - fs.sq_inst_start[tile], time, amp
                )
                r0, r1, r2, r3, r4, r5, r6, r7, r8 = _mat3_mul9(
                    j0, j1, j2, j3, j4, j5, j6, j7, j8, r0, r1, r2, r3, r4, r5, r6, r7, r8
                )
            w_0, w_1, w_2, w_3, w_4, w_5, w_6, w_7, w_8 = _mat3_mul9(
                a0, a1, a2, a3, a4, a5, a6, a7, a8, r0, r1, r2, r3, r4, r5, r6, r7, r8
            )
            if smooth:
                # orientation from the interpolated vertex normal at the
                # instance's uv position instead of the flat normal
                nu = gu + px / fs.sq_size * fs.tile_uv
                nv = gv + pz / fs.sq_size * fs.tile_uv
                sdu = nu - fs.tri_uv[tri, 0]
                sdv = nv - fs.tri_uv[tri, 1]
                sw1 = fs.tri_iuv[tri, 0] * sdu + fs.tri_iuv[tri, 1] * sdv
                sw2 = fs.tri_iuv[tri, 2] * sdu + fs.tri_iuv[tri, 3] * sdv
                sw0 = 1.0 - sw1 - sw2
                nox = fs.tri_n[tri, 0] * sw0 + fs.tri_n[tri, 3] * sw1 + fs.tri_n[tri, 6] * sw2
                noy = fs.tri_n[tri, 1] * sw0 + fs.tri_n[tri, 4] * sw1 + fs.tri_n[tri, 7] * sw2
                noz = fs.tri_n[tri, 2] * sw0 + fs.tri_n[tri, 5] * sw1 + fs.tri_n[tri, 8] * sw2
                # world direction via inverse-transpose of the instance linear
                snx = i0 * nox + i3 * noy + i6 * noz
                sny = i1 * nox + i4 * noy + i7 * noz
                snz = i2 * nox + i5 * noy + i8 * noz
                n = math.sqrt(snx * snx + sny * sny + snz * snz)
                if n > 0.0:
                    snx, sny, snz = snx / n, sny / n, snz / n
                    t0, t1, t2, t3, t4, t5, t6, t7, t8 = _rotation_between_mat(
                        fnx, fny, fnz, snx, sny, snz
                    )
                    w_0, w_1, w_2, w_3, w_4, w_5, w_6, w_7, w_8 = _mat3_mul9(
                        t0, t1, t2, t3, t4, t5, t6, t7, t8,
                        w_0, w_1, w_2, w_3, w_4, w_5, w_6, w_7, w_8,
                    )
            okinv, v0, v1, v2, v3, v4, v5, v6, v7, v8 = _mat3_inv9(
                w_0, w_1, w_2, w_3, w_4, w_5, w_6, w_7, w_8
            )
            if not okinv:
                continue
            wt0 = -(v0 * rwx + v1 * rwy + v2 * rwz)
            wt1 = -(v3 * rwx + v4 * rwy + v5 * rwz)
            wt2 = -(v6 * rwx + v7 * rwy + v8 * rwz)
            mox = v0 * ox + v1 * oy + v2 * oz + wt0
            moy = v3 * ox + v4 * oy + v5 * oz + wt1
            moz = v6 * ox + v7 * oy + v8 * oz + wt2
            mdx = v0 * dx + v1 * dy + v2 * dz
            mdy = v3 * dx + v4 * dy + v5 * dz
            mdz = v6 * dx + v7 * dy + v8 * dz
            mol = fs.sqi_mol[si]
            at, aslot = _atom_walk(
                fs, fs.mol_bvh_root[mol], mox, moy, moz, mdx, mdy, mdz, t_min, bt, stack_d
            )
            if aslot >= 0 and _key_less(at, ii, pr, cell_lin, si, aslot, bt, bm, br, bc, bi, ba):
                bt, bm, br, bc, bi, ba = at, ii, pr, cell_lin, si, aslot
                winv[0] = v0
                winv[1] = v1
                winv[2] = v2
                winv[3] = v3
                winv[4] = v4
                winv[5] = v5
                winv[6] = v6
                winv[7] = v7
                winv[8] = v8
                winv[9] = wt0
                winv[10] = wt1
                winv[11] = wt2
    return bt, bm, br, bc, bi, ba


@njit(cache=True)
def _trace_shell(
    fs,
    ox, oy, oz, dx, dy, dz, t_min, t_max0,
    use_rep, smooth, clip_on, cnx, cny, cnz, coff, time, amp,
    stack_a, stack_b, stack_c, stack_d, cand_t, cand_i, winv,
):
    bt = t_max0
    bm = -1
    br = -1
    bc = -1
    bi = -1
    ba = -1
    # mesh instances in closest-entry order (inclusive pruning keeps
    # equal-t candidates alive, so order never changes the winner)
    n_cand = 0
    for ii in range(fs.in_mesh.shape[0]):
        if fs.in_shell[ii] == 0:
            continue
        ok, te, tx = _slab(
            ox, oy, oz, dx, dy, dz,
            fs.in_shell_waabb[ii, 0], fs.in_shell_waabb[ii, 1], fs.in_shell_waabb[ii, 2],
            fs.in_shell_waabb[ii, 3], fs.in_shell_waabb[ii, 4], fs.in_shell_waabb[ii, 5],
        )
        if not ok or te > bt or tx < t_min:
            continue
        cand_t[n_cand] = te if te > t_min else t_min
        cand_i[n_cand] = ii
        n_cand += 1
    for a in range(1, n_cand):
        kt = cand_t[a]
        ki = cand_i[a]
        b = a - 1
        while b >= 0 and (cand_t[b] > kt or (cand_t[b] == kt and cand_i[b] > ki)):
            cand_t[b + 1] = cand_t[b]
            cand_i[b + 1] = cand_i[b]
            b -= 1
        cand_t[b + 1] = kt
        cand_i[b + 1] = ki

    for cidx in range(n_cand):
        if cand_t[cidx] > bt:
            break
        ii = cand_i[cidx]
        mesh = fs.in_mesh[ii]
        proot = fs.me_prism_root[mesh]
        if proot < 0:
            continue
        m0 = fs.in_M[ii, 0]
        m1 = fs.in_M[ii, 1]
        m2 = fs.in_M[ii, 2]
        m3 = fs.in_M[ii, 3]
        m4 = fs.in_M[ii, 4]
        m5 = fs.in_M[ii, 5]
        m6 = fs.in_M[ii, 6]
        m7 = fs.in_M[ii, 7]
        m8 = fs.in_M[ii, 8]
        mt0 = fs.in_M[ii, 9]
        mt1 = fs.in_M[ii, 10]
        mt2 = fs.in_M[ii, 11]
        i0 = fs.in_Minv[ii, 0]
        i1 = fs.in_Minv[ii, 1]
        i2 = fs.in_Minv[ii, 2]
        i3 = fs.in_Minv[ii, 3]
        i4 = fs.in_Minv[ii, 4]
        i5 = fs.in_Minv[ii, 5]
        i6 = fs.in_Minv[ii, 6]
        i7 = fs.in_Minv[ii, 7]
        i8 = fs.in_Minv[ii, 8]
        it0 = fs.in_Minv[ii, 9]
        it1 = fs.in_Minv[ii, 10]
        it2 = fs.in_Minv[ii, 11]
        oox = i0 * ox + i1 * oy + i2 * oz + it0
        ooy = i3 * ox + i4 * oy + i5 * oz + it1
        ooz = i6 * ox + i7 * oy + i8 * oz + it2
        odx = i0 * dx + i1 * dy + i2 * dz
        ody = i3 * dx + i4 * dy + i5 * dz
        odz = i6 * dx + i7 * dy + i8 * dz
        sp = 0
        stack_a[sp] = proot
        sp = 1
        while sp > 0:
            sp -= 1
            node = stack_a[sp]
            ok, te, tx = _slab(
                oox, ooy, ooz, odx, ody, odz,
                fs.bn_min[node, 0], fs.bn_min[node, 1], fs.bn_min[node, 2],
                fs.bn_max[node, 0], fs.bn_max[node, 1], fs.bn_max[node, 2],
            )
            if not ok or te > bt or tx < t_min:
                continue
            left = fs.bn_left[node]
            if left >= 0:
                axis = fs.bn_axis[node]
                da = odx if axis == 0 else (ody if axis == 1 else odz)
                right = fs.bn_right[node]
                if da < 0.0:
                    stack_a[sp] = left
                    sp += 1
                    stack_a[sp] = right
                    sp += 1
                else:
                    stack_a[sp] = right
                    sp += 1
                    stack_a[sp] = left
                    sp += 1
                continue
            start = fs.bn_start[node]
            for kk in range(start, start + fs.bn_count[node]):
                pr = fs.bp_ids[kk]
                ok, te, tx = _slab(
                    oox, ooy, ooz, odx, ody, odz,
                    fs.pr_aabb[pr, 0], fs.pr_aabb[pr, 1], fs.pr_aabb[pr, 2],
                    fs.pr_aabb[pr, 3], fs.pr_aabb[pr, 4], fs.pr_aabb[pr, 5],
                )
                if not ok or te > bt or tx < t_min:
                    continue
                if clip_on:
                    visible = False
                    for vi in range(6):
                        qx = fs.pr_verts[pr, vi * 3 + 0]
                        qy = fs.pr_verts[pr, vi * 3 + 1]
                        qz = fs.pr_verts[pr, vi * 3 + 2]
                        wx = m0 * qx + m1 * qy + m2 * qz + mt0
                        wy = m3 * qx + m4 * qy + m5 * qz + mt1
                        wz = m6 * qx + m7 * qy + m8 * qz + mt2
                        if _clip_visible_point(wx, wy, wz, cnx, cny, cnz, coff):
                            visible = True
                            break
                    if not visible:
                        continue
                tri = fs.pr_tri[pr]
                # world-space tile frame shared by every entry of this triangle
                jux = m0 * fs.tri_ju[tri, 0] + m1 * fs.tri_ju[tri, 1] + m2 * fs.tri_ju[tri, 2]
                juy = m3 * fs.tri_ju[tri, 0] + m4 * fs.tri_ju[tri, 1] + m5 * fs.tri_ju[tri, 2]
                juz = m6 * fs.tri_ju[tri, 0] + m7 * fs.tri_ju[tri, 1] + m8 * fs.tri_ju[tri, 2]
                jvx = m0 * fs.tri_jv[tri, 0] + m1 * fs.tri_jv[tri, 1] + m2 * fs.tri_jv[tri, 2]
                jvy = m3 * fs.tri_jv[tri, 0] + m4 * fs.tri_jv[tri, 1] + m5 * fs.tri_jv[tri, 2]
                jvz = m6 * fs.tri_jv[tri, 0] + m7 * fs.tri_jv[tri, 1] + m8 * fs.tri_jv[tri, 2]
                e1ox = fs.tri_p[tri, 3] - fs.tri_p[tri, 0]
                e1oy = fs.tri_p[tri, 4] - fs.tri_p[tri, 1]
                e1oz = fs.tri_p[tri, 5] - fs.tri_p[tri, 2]
                e2ox = fs.tri_p[tri, 6] - fs.tri_p[tri, 0]
                e2oy = fs.tri_p[tri, 7] - fs.tri_p[tri, 1]
                e2oz = fs.tri_p[tri, 8] - fs.tri_p[tri, 2]
                we1x = m0 * e1ox + m1 * e1oy + m2 * e1oz
                we1y = m3 * e1ox + m4 * e1oy + m5 * e1oz
                we1z = m6 * e1ox + m7 * e1oy + m8 * e1oz
                we2x = m0 * e2ox + m1 * e2oy + m2 * e2oz
                we2y = m3 * e2ox + m4 * e2oy + m5 * e2oz
                we2z = m6 * e2ox + m7 * e2oy + m8 * e2oz
                fnx = we1y * we2z - we1z * we2y
                fny = we1z * we2x - we1x * we2z
                fnz = we1x * we2y - we1y * we2x
                nn = math.sqrt(fnx * fnx + fny * fny + fnz * fnz)
                if nn == 0.0:
                    continue
                fnx, fny, fnz = fnx / nn, fny / nn, fnz / nn
                kk2 = fs.tile_uv / fs.sq_size
                a0 = jux * kk2
                a1 = fnx
                a2 = jvx * kk2
                a3 = juy * kk2
                a4 = fny
                a5 = jvy * kk2
                a6 = juz * kk2
                a7 = fnz
                a8 = jvz * kk2
                okinv, l0, l1, l2, l3, l4, l5, l6, l7, l8 = _mat3_inv9(
                    a0, a1, a2, a3, a4, a5, a6, a7, a8
                )
                if not okinv:
                    continue
                dtx = l0 * dx + l1 * dy + l2 * dz
                dty = l3 * dx + l4 * dy + l5 * dz
                dtz = l6 * dx + l7 * dy + l8 * dz
                est = fs.tri_ent_start[tri]
                rroot = fs.me_rep_root[mesh]
                if use_rep and rroot >= 0:
                    # replication-grid frame: same linear part, translated
                    # to the window center; used only to enumerate cells
                    nu = fs.me_rep_nu[mesh]
                    nv = fs.me_rep_nv[mesh]
                    cu = (fs.ent_cell_i[est] + nu * 0.5) * fs.tile_uv
                    cv = (fs.ent_cell_j[est] + nv * 0.5) * fs.tile_uv
                    rdu = cu - fs.tri_uv[tri, 0]
                    rdv = cv - fs.tri_uv[tri, 1]
                    rw1 = fs.tri_iuv[tri, 0] * rdu + fs.tri_iuv[tri, 1] * rdv
                    rw2 = fs.tri_iuv[tri, 2] * rdu + fs.tri_iuv[tri, 3] * rdv
                    rw0 = 1.0 - rw1 - rw2
                    cox = fs.tri_p[tri, 0] * rw0 + fs.tri_p[tri, 3] * rw1 + fs.tri_p[tri, 6] * rw2
                    coy = fs.tri_p[tri, 1] * rw0 + fs.tri_p[tri, 4] * rw1 + fs.tri_p[tri, 7] * rw2
                    coz = fs.tri_p[tri, 2] * rw0 + fs.tri_p[tri, 5] * rw1 + fs.tri_p[tri, 8] * rw2
                    cwx = m0 * cox + m1 * coy + m2 * coz + mt0
                    cwy = m3 * cox + m4 * coy + m5 * coz + mt1
                    cwz = m6 * cox + m7 * coy + m8 * coz + mt2
                    rt0 = -(l0 * cwx + l1 * cwy + l2 * cwz)
                    rt1 = -(l3 * cwx + l4 * cwy + l5 * cwz)
                    rt2 = -(l6 * cwx + l7 * cwy + l8 * cwz)
                    orx = l0 * ox + l1 * oy + l2 * oz + rt0
                    ory = l3 * ox + l4 * oy + l5 * oz + rt1
                    orz = l6 * ox + l7 * oy + l8 * oz + rt2
                    rp = 0
                    stack_b[rp] = rroot
                    rp = 1
                    while rp > 0:
                        rp -= 1
                        rnode = stack_b[rp]
                        ok, te, tx = _slab(
                            orx, ory, orz, dtx, dty, dtz,
                            fs.bn_min[rnode, 0], fs.bn_min[rnode, 1], fs.bn_min[rnode, 2],
                            fs.bn_max[rnode, 0], fs.bn_max[rnode, 1], fs.bn_max[rnode, 2],
                        )
                        if not ok or te > bt or tx < t_min:
                            continue
                        rleft = fs.bn_left[rnode]
                        if rleft >= 0:
                            axis = fs.bn_axis[rnode]
                            da = dtx if axis == 0 else (dty if axis == 1 else dtz)
                            rright = fs.bn_right[rnode]
                            if da < 0.0:
                                stack_b[rp] = rleft
                                rp += 1
                                stack_b[rp] = rright
                                rp += 1
                            else:
                                stack_b[rp] = rright
                                rp += 1
                                stack_b[rp] = rleft
                                rp += 1
                            continue
                        rstart = fs.bn_start[rnode]
                        for rk in range(rstart, rstart + fs.bn_count[rnode]):
                            e = est + fs.bp_ids[rk]
                            bt, bm, br, bc, bi, ba = _shell_entry(
                                fs, ii, pr, tri, e,
                                m0, m1, m2, m3, m4, m5, m6, m7, m8, mt0, mt1, mt2,
                                i0, i1, i2, i3, i4, i5, i6, i7, i8, it0, it1, it2,
                                a0, a1, a2, a3, a4, a5, a6, a7, a8,
                                l0, l1, l2, l3, l4, l5, l6, l7, l8,
                                dtx, dty, dtz, fnx, fny, fnz,
                                ox, oy, oz, dx, dy, dz, t_min,
                                smooth, clip_on, cnx, cny, cnz, coff, time, amp,
                                bt, bm, br, bc, bi, ba,
                                winv, stack_c, stack_d,
                            )
                else:
                    for e in range(est, est + fs.tri_ent_count[tri]):
                        bt, bm, br, bc, bi, ba = _shell_entry(
                            fs, ii, pr, tri, e,
                            m0, m1, m2, m3, m4, m5, m6, m7, m8, mt0, mt1, mt2,
                            i0, i1, i2, i3, i4, i5, i6, i7, i8, it0, it1, it2,
                            a0, a1, a2, a3, a4, a5, a6, a7, a8,
                            l0, l1, l2, l3, l4, l5, l6, l7, l8,
                            dtx, dty, dtz, fnx, fny, fnz,
                            ox, oy, oz, dx, dy, dz, t_min,
                            smooth, clip_on, cnx, cny, cnz, coff, time, amp,
                            bt, bm, br, bc, bi, ba,
                            winv, stack_c, stack_d,
                        )
    return bt, bm, br, bc, bi, ba


@njit(cache=True)
def _trace_core(
    fs,
    ox, oy, oz, dx, dy, dz, t_min, t_max0,
    clip_on, cnx, cny, cnz, coff, time, amp,
    stack_a, stack_c, stack_d, cand_t, cand_i, winv,
):
    bt = t_max0
    bm = -1
    br = -1
    bc = -1
    bi = -1
    ba = -1
    n_cand = 0
    for ii in range(fs.in_mesh.shape[0]):
        if fs.in_core[ii] == 0:
            continue
        ok, te, tx = _slab(
            ox, oy, oz, dx, dy, dz,
            fs.in_core_waabb[ii, 0], fs.in_core_waabb[ii, 1], fs.in_core_waabb[ii, 2],
            fs.in_core_waabb[ii, 3], fs.in_core_waabb[ii, 4], fs.in_core_waabb[ii, 5],
        )
        if not ok or te > bt or tx < t_min:
            continue
        cand_t[n_cand] = te if te > t_min else t_min
        cand_i[n_cand] = ii
        n_cand += 1
    for a in range(1, n_cand):
        kt = cand_t[a]
        ki = cand_i[a]
        b = a - 1
        while b >= 0 and (cand_t[b] > kt or (cand_t[b] == kt and cand_i[b] > ki)):
            cand_t[b + 1] = cand_t[b]
            cand_i[b + 1] = cand_i[b]
            b -= 1
        cand_t[b + 1] = kt
        cand_i[b + 1] = ki

    for cidx in range(n_cand):
        if cand_t[cidx] > bt:
            break
        ii = cand_i[cidx]
        mesh = fs.in_mesh[ii]
        troot = fs.me_tri_root[mesh]
        if troot < 0:
            continue
        m0 = fs.in_M[ii, 0]
        m1 = fs.in_M[ii, 1]
        m2 = fs.in_M[ii, 2]
        m3 = fs.in_M[ii, 3]
        m4 = fs.in_M[ii, 4]
        m5 = fs.in_M[ii, 5]
        m6 = fs.in_M[ii, 6]
        m7 = fs.in_M[ii, 7]
        m8 = fs.in_M[ii, 8]
        mt0 = fs.in_M[ii, 9]
        mt1 = fs.in_M[ii, 10]
        mt2 = fs.in_M[ii, 11]
        i0 = fs.in_Minv[ii, 0]
        i1 = fs.in_Minv[ii, 1]
        i2 = fs.in_Minv[ii, 2]
        i3 = fs.in_Minv[ii, 3]
        i4 = fs.in_Minv[ii, 4]
        i5 = fs.in_Minv[ii, 5]
        i6 = fs.in_Minv[ii, 6]
        i7 = fs.in_Minv[ii, 7]
        i8 = fs.in_Minv[ii, 8]
        it0 = fs.in_Minv[ii, 9]
        it1 = fs.in_Minv[ii, 10]
        it2 = fs.in_Minv[ii, 11]
        oox = i0 * ox + i1 * oy + i2 * oz + it0
        ooy = i3 * ox + i4 * oy + i5 * oz + it1
        ooz = i6 * ox + i7 * oy + i8 * oz + it2
        odx = i0 * dx + i1 * dy + i2 * dz
        ody = i3 * dx + i4 * dy + i5 * dz
        odz = i6 * dx + i7 * dy + i8 * dz

        # ray interval from closest front- and back-facing proxy triangles
        t_front = INF
        t_back = INF
        sp = 0
        stack_a[sp] = troot
        sp = 1
        while sp > 0:
            sp -= 1
            node = stack_a[sp]
            needed = t_front if t_front > t_back else t_back
            ok, te, tx = _slab(
                oox, ooy, ooz, odx, ody, odz,
                fs.bn_min[node, 0], fs.bn_min[node, 1], fs.bn_min[node, 2],
                fs.bn_max[node, 0], fs.bn_max[node, 1], fs.bn_max[node, 2],
            )
            if not ok or te > needed or tx < t_min:
                continue
            left = fs.bn_left[node]
            if left >= 0:
                axis = fs.bn_axis[node]
                da = odx if axis == 0 else (ody if axis == 1 else odz)
                right = fs.bn_right[node]
                if da < 0.0:
                    stack_a[sp] = left
                    sp += 1
                    stack_a[sp] = right
                    sp += 1
                else:
                    stack_a[sp] = right
                    sp += 1
                    stack_a[sp] = left
                    sp += 1
                continue
            start = fs.bn_start[node]
            for kk in range(start, start + fs.bn_count[node]):
                ts = fs.bp_ids[kk]
                code, t = _tri_t(oox, ooy, ooz, odx, ody, odz, fs.tri_p[ts], t_min, INF)
                if code == 1:
                    if t < t_front:
                        t_front = t
                elif code == 2:
                    if t < t_back:
                        t_back = t
        if t_back == INF:
            continue  # no back-face exit: no interior segment
        if t_front < t_back:
            lo = t_front
        elif t_front == t_back:
            continue
        else:
            lo = fs.eps_interval
            if lo >= t_back:
                continue
        hi = t_back

        # sequential grid walk over [lo, hi]
        g0 = fs.me_grid_min[mesh, 0]
        g1 = fs.me_grid_min[mesh, 1]
        g2 = fs.me_grid_min[mesh, 2]
        n0 = fs.me_grid_dims[mesh, 0]
        n1 = fs.me_grid_dims[mesh, 1]
        n2 = fs.me_grid_dims[mesh, 2]
        s0 = fs.me_grid_box[mesh, 0]
        s1 = fs.me_grid_box[mesh, 1]
        s2 = fs.me_grid_box[mesh, 2]
        span = hi - lo
        if span <= 0.0:
            continue
        sx = oox + (lo + span * 1e-9) * odx
        sy = ooy + (lo + span * 1e-9) * ody
        sz = ooz + (lo + span * 1e-9) * odz
        bx = int(math.floor((sx - g0) / s0))
        by = int(math.floor((sy - g1) / s1))
        bz = int(math.floor((sz - g2) / s2))
        bx = min(max(bx, 0), n0 - 1)
        by = min(max(by, 0), n1 - 1)
        bz = min(max(bz, 0), n2 - 1)
        stepx = 0
        stepy = 0
        stepz = 0
        tnx = INF
        tny = INF
        tnz = INF
        tdx = INF
        tdy = INF
        tdz = INF
        if odx > 0.0:
            stepx = 1
            tnx = (g0 + (bx + 1) * s0 - oox) / odx
            tdx = s0 / odx
        elif odx < 0.0:
            stepx = -1
            tnx = (g0 + bx * s0 - oox) / odx
            tdx = -s0 / odx
        if ody > 0.0:
            stepy = 1
            tny = (g1 + (by + 1) * s1 - ooy) / ody
            tdy = s1 / ody
        elif ody < 0.0:
            stepy = -1
            tny = (g1 + by * s1 - ooy) / ody
            tdy = -s1 / ody
        if odz > 0.0:
            stepz = 1
            tnz = (g2 + (bz + 1) * s2 - ooz) / odz
            tdz = s2 / odz
        elif odz < 0.0:
            stepz = -1
            tnz = (g2 + bz * s2 - ooz) / odz
            tdz = -s2 / odz

        t_entry = lo
        while True:
            if t_entry > bt:
                break
            # ---- process box (bx, by, bz)
            box_ok = True
            if clip_on:
                visible = False
                blox = g0 + bx * s0
                bloy = g1 + by * s1
                bloz = g2 + bz * s2
                for ci in range(8):
                    qx = blox if ci & 1 == 0 else blox + s0
                    qy = bloy if ci & 2 == 0 else bloy + s1
                    qz = bloz if ci & 4 == 0 else bloz + s2
                    wx = m0 * qx + m1 * qy + m2 * qz + mt0
                    wy = m3 * qx + m4 * qy + m5 * qz + mt1
                    wz = m6 * qx + m7 * qy + m8 * qz + mt2
                    if _clip_visible_point(wx, wy, wz, cnx, cny, cnz, coff):
                        visible = True
                        break
                if not visible:
                    box_ok = False
            if box_ok:
                tile = fs.rc3_cells[bx + by * fs.rc3_w + bz * fs.rc3_w * fs.rc3_h]
                root = fs.cu_bvh_root[tile]
                if root >= 0:
                    box_lin = bx + n0 * (by + n1 * bz)
                    rc3_lin = bx + by * fs.rc3_w + bz * fs.rc3_w * fs.rc3_h
                    # box center, then the cube-tile frame M1 = M . T(center)
                    blx = bx * s0 + g0
                    bly = by * s1 + g1
                    blz = bz * s2 + g2
                    ccx = blx + s0 * 0.5
                    ccy = bly + s1 * 0.5
                    ccz = blz + s2 * 0.5
                    gwx = m0 * ccx + m1 * ccy + m2 * ccz + mt0
                    gwy = m3 * ccx + m4 * ccy + m5 * ccz + mt1
                    gwz = m6 * ccx + m7 * ccy + m8 * ccz + mt2
                    ti0 = -(i0 * gwx + i1 * gwy + i2 * gwz)
                    ti1 = -(i3 * gwx + i4 * gwy + i5 * gwz)
                    ti2 = -(i6 * gwx + i7 * gwy + i8 * gwz)
                    otx = i0 * ox + i1 * oy + i2 * oz + ti0
                    oty = i3 * ox + i4 * oy + i5 * oz + ti1
                    otz = i6 * ox + i7 * oy + i8 * oz + ti2
                    # t bounds for content in this instance: the interval
                    t_hi_eff = bt if bt < hi else hi
                    sp2 = 0
                    stack_c[sp2] = root
                    sp2 = 1
                    while sp2 > 0:
                        sp2 -= 1
                        node = stack_c[sp2]
                        ok, te, tx = _slab(
                            otx, oty, otz, odx, ody, odz,
                            fs.bn_min[node, 0], fs.bn_min[node, 1], fs.bn_min[node, 2],
                            fs.bn_max[node, 0], fs.bn_max[node, 1], fs.bn_max[node, 2],
                        )
                        if not ok or te > t_hi_eff or tx < lo:
                            continue
                        left = fs.bn_left[node]
                        if left >= 0:
                            axis = fs.bn_axis[node]
                            da = odx if axis == 0 else (ody if axis == 1 else odz)
                            right = fs.bn_right[node]
                            if da < 0.0:
                                stack_c[sp2] = left
                                sp2 += 1
                                stack_c[sp2] = right
                                sp2 += 1
                            else:
                                stack_c[sp2] = right
                                sp2 += 1
                                stack_c[sp2] = left
                                sp2 += 1
                            continue
                        start = fs.bn_start[node]
                        for kk in range(start, start + fs.bn_count[node]):
                            si = fs.bp_ids[kk]
                            ok, te, tx = _slab(
                                otx, oty, otz, odx, ody, odz,
                                fs.cui_aabb[si, 0], fs.cui_aabb[si, 1], fs.cui_aabb[si, 2],
                                fs.cui_aabb[si, 3], fs.cui_aabb[si, 4], fs.cui_aabb[si, 5],
                            )
                            if not ok or te > t_hi_eff or tx < lo:
                                continue
                            if clip_on:
                                visible = False
                                for ci in range(8):
                                    qx = fs.cui_aabb[si, 0] if ci & 1 == 0 else fs.cui_aabb[si, 3]
                                    qy = fs.cui_aabb[si, 1] if ci & 2 == 0 else fs.cui_aabb[si, 4]
                                    qz = fs.cui_aabb[si, 2] if ci & 4 == 0 else fs.cui_aabb[si, 5]
                                    wx = m0 * qx + m1 * qy + m2 * qz + gwx
                                    wy = m3 * qx + m4 * qy + m5 * qz + gwy
                                    wz = m6 * qx + m7 * qy + m8 * qz + gwz
                                    if _clip_visible_point(wx, wy, wz, cnx, cny, cnz, coff):
                                        visible = True
                                        break
                                if not visible:
                                    continue
                            px = fs.cui_pos[si, 0]
                            py = fs.cui_pos[si, 1]
                            pz = fs.cui_pos[si, 2]
                            rwx = m0 * px + m1 * py + m2 * pz + gwx
                            rwy = m3 * px + m4 * py + m5 * pz + gwy
                            rwz = m6 * px + m7 * py + m8 * pz + gwz
                            r0 = fs.cui_rot[si, 0]
                            r1 = fs.cui_rot[si, 1]
                            r2 = fs.cui_rot[si, 2]
                            r3 = fs.cui_rot[si, 3]
                            r4 = fs.cui_rot[si, 4]
                            r5 = fs.cui_rot[si, 5]
                            r6 = fs.cui_rot[si, 6]
                            r7 = fs.cui_rot[si, 7]
                            r8 = fs.cui_rot[si, 8]
                            if amp > 0.0:
                                j0, j1, j2, j3, j4, j5, j6, j7, j8 = _jitter_mat(
                                    ii, box_lin, si - fs.cu_inst_start[tile], time, amp
                                )
                                r0, r1, r2, r3, r4, r5, r6, r7, r8 = _mat3_mul9(
                                    j0, j1, j2, j3, j4, j5, j6, j7, j8,
                                    r0, r1, r2, r3, r4, r5, r6, r7, r8,
                                )
                            w_0, w_1, w_2, w_3, w_4, w_5, w_6, w_7, w_8 = _mat3_mul9(
                                m0, m1, m2, m3, m4, m5, m6, m7, m8,
                                r0, r1, r2, r3, r4, r5, r6, r7, r8,
                            )
                            okinv, v0, v1, v2, v3, v4, v5, v6, v7, v8 = _mat3_inv9(
                                w_0, w_1, w_2, w_3, w_4, w_5, w_6, w_7, w_8
                            )
                            if not okinv:
                                continue
                            wt0 = -(v0 * rwx + v1 * rwy + v2 * rwz)
                            wt1 = -(v3 * rwx + v4 * rwy + v5 * rwz)
                            wt2 = -(v6 * rwx + v7 * rwy + v8 * rwz)
                            mox = v0 * ox + v1 * oy + v2 * oz + wt0
                            moy = v3 * ox + v4 * oy + v5 * oz + wt1
                            moz = v6 * ox + v7 * oy + v8 * oz + wt2
                            mdx = v0 * dx + v1 * dy + v2 * dz
                            mdy = v3 * dx + v4 * dy + v5 * dz
                            mdz = v6 * dx + v7 * dy + v8 * dz
                            mol = fs.cui_mol[si]
                            at, aslot = _atom_walk(
                                fs, fs.mol_bvh_root[mol],
                                mox, moy, moz, mdx, mdy, mdz, lo, t_hi_eff, stack_d,
                            )
                            if aslot >= 0 and _key_less(
                                at, ii, box_lin, rc3_lin, si, aslot, bt, bm, br, bc, bi, ba
                            ):
                                bt, bm, br, bc, bi, ba = at, ii, box_lin, rc3_lin, si, aslot
                                winv[0] = v0
                                winv[1] = v1
                                winv[2] = v2
                                winv[3] = v3
                                winv[4] = v4
                                winv[5] = v5
                                winv[6] = v6
                                winv[7] = v7
                                winv[8] = v8
                                winv[9] = wt0
                                winv[10] = wt1
                                winv[11] = wt2
            # ---- step to the next box (x, y, z tie priority)
            if tnx <= tny and tnx <= tnz:
                if tnx > hi:
                    break
                bx += stepx
                if bx < 0 or bx >= n0:
                    break
                t_entry = tnx
                tnx += tdx
            elif tny <= tnz:
                if tny > hi:
                    break
                by += stepy
                if by < 0 or by >= n1:
                    break
                t_entry = tny
                tny += tdy
            else:
                if tnz > hi:
                    break
                bz += stepz
                if bz < 0 or bz >= n2:
                    break
                t_entry = tnz
                tnz += tdz
    return bt, bm, br, bc, bi, ba


@njit(cache=True)
def fill_camera_rays(w, h, px, py, pz, rx, ry, rz, ux, uy, uz, fx, fy, fz, sx, sy, out_o, out_d):
    for j in range(h):
        ndc_y = (1.0 - 2.0 * (j + 0.5) / h) * sy
        for i in range(w):
            ndc_x = (2.0 * (i + 0.5) / w - 1.0) * sx
            dx = fx + ndc_x * rx + ndc_y * ux
            dy = fy + ndc_x * ry + ndc_y * uy
            dz = fz + ndc_x * rz + ndc_y * uz
            n = math.sqrt(dx * dx + dy * dy + dz * dz)
            idx = j * w + i
            out_o[idx, 0] = px
            out_o[idx, 1] = py
            out_o[idx, 2] = pz
            out_d[idx, 0] = dx / n
            out_d[idx, 1] = dy / n
            out_d[idx, 2] = dz / n


@njit(cache=True)
def render_kernel(
    fs,
    rays_o, rays_d, cam_px, cam_py, cam_pz,
    shell_on, core_on, use_rep, smooth, clip_on, cnx, cny, cnz, coff,
    time, amp, bg_r, bg_g, bg_b,
    stack_a, stack_b, stack_c, stack_d, cand_t, cand_i, winv_s, winv_c,
    out_rgb, out_t, out_ids,
):
    n = rays_o.shape[0]
    for idx in range(n):
        ox = rays_o[idx, 0]
        oy = rays_o[idx, 1]
        oz = rays_o[idx, 2]
        dx = rays_d[idx, 0]
        dy = rays_d[idx, 1]
        dz = rays_d[idx, 2]
        st = INF
        sm = -1
        sr = -1
        sc = -1
        si = -1
        sa = -1
        if shell_on:
            st, sm, sr, sc, si, sa = _trace_shell(
                fs, ox, oy, oz, dx, dy, dz, 0.0, INF,
                use_rep, smooth, clip_on, cnx, cny, cnz, coff, time, amp,
                stack_a, stack_b, stack_c, stack_d, cand_t, cand_i, winv_s,
            )
        ct = INF
        cm = -1
        cr = -1
        cc = -1
        ci_ = -1
        ca = -1
        if core_on:
            seed = st if sm >= 0 else INF
            ct, cm, cr, cc, ci_, ca = _trace_core(
                fs, ox, oy, oz, dx, dy, dz, 0.0, seed,
                clip_on, cnx, cny, cnz, coff, time, amp,
                stack_a, stack_c, stack_d, cand_t, cand_i, winv_c,
            )
        # composite on depth; exact ties go to the shell layer
        layer = LAYER_MISS
        if cm >= 0 and (sm < 0 or ct < st):
            layer = LAYER_CORE
            t = ct
            m_i, r_i, c_i, i_i, a_i = cm, cr, cc, ci_, ca
            wv = winv_c
            mol = fs.cui_mol[i_i]
        elif sm >= 0:
            layer = LAYER_SHELL
            t = st
            m_i, r_i, c_i, i_i, a_i = sm, sr, sc, si, sa
            wv = winv_s
            mol = fs.sqi_mol[i_i]
        if layer == LAYER_MISS:
            out_rgb[idx, 0] = _quantize(bg_r)
            out_rgb[idx, 1] = _quantize(bg_g)
            out_rgb[idx, 2] = _quantize(bg_b)
            out_t[idx] = INF
            out_ids[idx, 0] = LAYER_MISS
            for q in range(1, 7):
                out_ids[idx, q] = -1
            continue
        # shade: headlight lambert on the atom normal, 15% ambient floor
        wx = ox + t * dx
        wy = oy + t * dy
        wz = oz + t * dz
        mox = wv[0] * ox + wv[1] * oy + wv[2] * oz + wv[9]
        moy = wv[3] * ox + wv[4] * oy + wv[5] * oz + wv[10]
        moz = wv[6] * ox + wv[7] * oy + wv[8] * oz + wv[11]
        mdx = wv[0] * dx + wv[1] * dy + wv[2] * dz
        mdy = wv[3] * dx + wv[4] * dy + wv[5] * dz
        mdz = wv[6] * dx + wv[7] * dy + wv[8] * dz
        pmx = mox + t * mdx
        pmy = moy + t * mdy
        pmz = moz + t * mdz
        nmx = (pmx - fs.atom_x[a_i]) / fs.atom_r[a_i]
        nmy = (pmy - fs.atom_y[a_i]) / fs.atom_r[a_i]
        nmz = (pmz - fs.atom_z[a_i]) / fs.atom_r[a_i]
        # world normal via inverse-transpose of the composed linear part
        nwx = wv[0] * nmx + wv[3] * nmy + wv[6] * nmz
        nwy = wv[1] * nmx + wv[4] * nmy + wv[7] * nmz
        nwz = wv[2] * nmx + wv[5] * nmy + wv[8] * nmz
        nn = math.sqrt(nwx * nwx + nwy * nwy + nwz * nwz)
        if nn > 0.0:
            nwx, nwy, nwz = nwx / nn, nwy / nn, nwz / nn
        tcx = cam_px - wx
        tcy = cam_py - wy
        tcz = cam_pz - wz
        tn = math.sqrt(tcx * tcx + tcy * tcy + tcz * tcz)
        if tn > 0.0:
            tcx, tcy, tcz = tcx / tn, tcy / tn, tcz / tn
        dcos = nwx * tcx + nwy * tcy + nwz * tcz
        if dcos < 0.0:
            dcos = 0.0
        inten = dcos if dcos > 0.15 else 0.15
        out_rgb[idx, 0] = _quantize(fs.mol_color[mol, 0] * inten)
        out_rgb[idx, 1] = _quantize(fs.mol_color[mol, 1] * inten)
        out_rgb[idx, 2] = _quantize(fs.mol_color[mol, 2] * inten)
        out_t[idx] = t
        out_ids[idx, 0] = layer
        out_ids[idx, 1] = m_i
        out_ids[idx, 2] = r_i
        out_ids[idx, 3] = c_i
        out_ids[idx, 4] = i_i
        out_ids[idx, 5] = a_i
        out_ids[idx, 6] = mol


@njit(cache=True)
def _quantize(c):
    v = int(c * 255.0 + 0.5)
    if v < 0:
        v = 0
    elif v > 255:
        v = 255
    return v


@njit(cache=True)
def trace_single(
    fs, which,
    ox, oy, oz, dx, dy, dz, t_min, t_max,
    use_rep, smooth, clip_on, cnx, cny, cnz, coff, time, amp,
    stack_a, stack_b, stack_c, stack_d, cand_t, cand_i, winv,
):
    if which == LAYER_SHELL:
        return _trace_shell(
            fs, ox, oy, oz, dx, dy, dz, t_min, t_max,
            use_rep, smooth, clip_on, cnx, cny, cnz, coff, time, amp,
            stack_a, stack_b, stack_c, stack_d, cand_t, cand_i, winv,
        )
    return _trace_core(
        fs, ox, oy, oz, dx, dy, dz, t_min, t_max,
        clip_on, cnx, cny, cnz, coff, time, amp,
        stack_a, stack_c, stack_d, cand_t, cand_i, winv,
    )
