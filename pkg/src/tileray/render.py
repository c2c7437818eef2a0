"""Rendering surface: cameras, clip planes, transform chain ops, and the
per-frame entry points wrapping the compiled kernels.

The transform helpers here are the reference implementations of the
on-the-fly instancing chain (tile-to-world, instance-in-tile, jitter).
kernels.py mirrors their arithmetic term by term; keep both in sync.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from . import kernels
from .geometry import (
    Aabb,
    Affine,
    Mat3,
    Ray,
    Vec2,
    Vec3,
    affine_invert,
    mat3_mul,
    rotation_between,
    vcross,
    vdot,
    vnormalize,
    vsub,
)
from .tiling import MoleculeInstance


class DegenerateUvError(ValueError):
    """The uv triangle has no area; the tile frame Jacobian is undefined."""


@dataclass
class ClipPlane:
    """Visible half-space is { p : normal . p - offset >= 0 }."""

    normal: Vec3
    offset: float
    enabled: bool = True

    def __post_init__(self):
        self.normal = vnormalize(self.normal)

    def visible(self, p: Vec3) -> bool:
        return vdot(self.normal, p) - self.offset >= 0.0


@dataclass
class Camera:
    position: Vec3
    forward: Vec3
    up: Vec3
    fov: float  # vertical field of view, radians
    width: int
    height: int

    def __post_init__(self):
        if not (0.0 < self.fov < math.pi):
            raise ValueError(f"fov {self.fov} outside (0, pi)")
        if self.width < 1 or self.height < 1:
            raise ValueError("image dims must be positive")
        self.forward = vnormalize(self.forward)
        right = vcross(self.forward, self.up)
        if vdot(right, right) < 1e-16:
            # up is collinear with forward; fall back to another axis
            alt = (0.0, 0.0, 1.0) if abs(self.forward[2]) < 0.9 else (1.0, 0.0, 0.0)
            right = vcross(self.forward, alt)
        self.right = vnormalize(right)
        self.up = vcross(self.right, self.forward)

    def rays(self) -> Tuple[np.ndarray, np.ndarray]:
        """Primary ray origins/directions (unit length), row-major."""
        n = self.width * self.height
        out_o = np.empty((n, 3), np.float64)
        out_d = np.empty((n, 3), np.float64)
        sy = math.tan(self.fov * 0.5)
        sx = sy * self.width / self.height
        kernels.fill_camera_rays(
            self.width, self.height,
            self.position[0], self.position[1], self.position[2],
            self.right[0], self.right[1], self.right[2],
            self.up[0], self.up[1], self.up[2],
            self.forward[0], self.forward[1], self.forward[2],
            sx, sy, out_o, out_d,
        )
        return out_o, out_d


@dataclass
class RenderConfig:
    clip: Optional[ClipPlane] = None
    time: float = 0.0
    jitter_amplitude: float = 0.0
    use_rep_grid: bool = True
    smooth_normals: bool = False
    background: Tuple[float, float, float] = (0.05, 0.05, 0.08)
    mode: str = "both"  # shell | core | both

    def __post_init__(self):
        if self.jitter_amplitude < 0.0:
            raise ValueError("jitter amplitude must be >= 0")
        if self.mode not in ("shell", "core", "both"):
            raise ValueError(f"unknown render mode {self.mode!r}")

    def kernel_args(self):
        clip_on = self.clip is not None and self.clip.enabled
        cn = self.clip.normal if clip_on else (0.0, 0.0, 1.0)
        coff = self.clip.offset if clip_on else 0.0
        return (
            self.mode in ("shell", "both"),
            self.mode in ("core", "both"),
            self.use_rep_grid,
            self.smooth_normals,
            clip_on,
            cn[0], cn[1], cn[2], coff,
            self.time,
            self.jitter_amplitude,
        )


@dataclass
class Framebuffer:
    width: int
    height: int
    rgb: np.ndarray  # (h, w, 3) uint8
    depth: np.ndarray  # (h, w) float64, +inf for misses
    ids: Optional[np.ndarray] = None  # (h, w, 7) int64 hit identities


@dataclass(frozen=True)
class HitRecord:
    t: float
    world_point: Vec3
    world_normal: Vec3
    mesh_instance_id: int
    tile_id: int
    instance_index: int
    molecule_type_id: int
    atom_index: int
    composed: Affine  # full instance chain at the hit (atom frame to world)
    layer: str  # "shell" | "core"


# ---------------------------------------------------------------------------
# transform chain (reference implementations; kernels mirror these)


def uv_basis_inverse(uv0: Vec2, uv1: Vec2, uv2: Vec2) -> Tuple[float, float, float, float]:
    """Inverse of the uv edge matrix, used to turn uv points into
    barycentric weights (weights may leave [0,1]: extrapolation)."""
    du1 = uv1[0] - uv0[0]
    dv1 = uv1[1] - uv0[1]
    du2 = uv2[0] - uv0[0]
    dv2 = uv2[1] - uv0[1]
    det = du1 * dv2 - du2 * dv1
    if abs(det) < 1e-14:
        raise DegenerateUvError(f"uv triangle {uv0}, {uv1}, {uv2} has no area")
    inv_det = 1.0 / det
    return (dv2 * inv_det, -du2 * inv_det, -dv1 * inv_det, du1 * inv_det)


def uv_jacobian(p0: Vec3, p1: Vec3, p2: Vec3, uv0: Vec2, uv1: Vec2, uv2: Vec2) -> Tuple[Vec3, Vec3]:
    """Constant per-triangle partials of object position w.r.t. u and v."""
    i0, i1, i2, i3 = uv_basis_inverse(uv0, uv1, uv2)
    d1 = vsub(p1, p0)
    d2 = vsub(p2, p0)
    ju = (
        d1[0] * i0 + d2[0] * i2,
        d1[1] * i0 + d2[1] * i2,
        d1[2] * i0 + d2[2] * i2,
    )
    jv = (
        d1[0] * i1 + d2[0] * i3,
        d1[1] * i1 + d2[1] * i3,
        d1[2] * i1 + d2[2] * i3,
    )
    return ju, jv


def uv_weights(iuv: Tuple[float, float, float, float], uv0: Vec2, p: Vec2) -> Tuple[float, float, float]:
    du = p[0] - uv0[0]
    dv = p[1] - uv0[1]
    w1 = iuv[0] * du + iuv[1] * dv
    w2 = iuv[2] * du + iuv[3] * dv
    return (1.0 - w1 - w2, w1, w2)


def tile_frame_transform_shell(
    positions: Tuple[Vec3, Vec3, Vec3],
    uvs: Tuple[Vec2, Vec2, Vec2],
    world_transform: Affine,
    g_uv: Vec2,
    tile_world_size: float,
    tile_uv_size: float,
) -> Affine:
    """Tile-to-world frame for one replication-area entry.

    Translation is the interpolated world position of the tile center;
    the linear columns are the scaled world uv-Jacobian (x, z) and the
    unit world triangle normal (y). One Jacobian realizes rotation,
    scaling, and shearing together; all tiles of a triangle share the
    linear part and differ only in translation.
    """
    p0, p1, p2 = positions
    uv0, uv1, uv2 = uvs
    iuv = uv_basis_inverse(uv0, uv1, uv2)
    w0, w1, w2 = uv_weights(iuv, uv0, g_uv)
    m = world_transform.linear
    mt = world_transform.translation
    gox = p0[0] * w0 + p1[0] * w1 + p2[0] * w2
    goy = p0[1] * w0 + p1[1] * w1 + p2[1] * w2
    goz = p0[2] * w0 + p1[2] * w1 + p2[2] * w2
    gwx = m[0] * gox + m[1] * goy + m[2] * goz + mt[0]
    gwy = m[3] * gox + m[4] * goy + m[5] * goz + mt[1]
    gwz = m[6] * gox + m[7] * goy + m[8] * goz + mt[2]
    ju, jv = uv_jacobian(p0, p1, p2, uv0, uv1, uv2)
    juw = world_transform.apply_vector(ju)
    jvw = world_transform.apply_vector(jv)
    e1 = vsub(p1, p0)
    e2 = vsub(p2, p0)
    we1 = world_transform.apply_vector(e1)
    we2 = world_transform.apply_vector(e2)
    n = vcross(we1, we2)
    nn = math.sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2])
    if nn == 0.0:
        raise DegenerateUvError("triangle has no world-space area")
    fnx, fny, fnz = n[0] / nn, n[1] / nn, n[2] / nn
    k = tile_uv_size / tile_world_size
    linear: Mat3 = (
        juw[0] * k, fnx, jvw[0] * k,
        juw[1] * k, fny, jvw[1] * k,
        juw[2] * k, fnz, jvw[2] * k,
    )
    return Affine(linear, (gwx, gwy, gwz))


def instance_transform(
    m1: Affine,
    inst: MoleculeInstance,
    smooth_normal: Optional[Vec3] = None,
    jitter: Optional[Mat3] = None,
) -> Affine:
    """World transform of one molecule instance: M1 . T(local) . R.

    With a smooth normal, the orientation aligning the molecule's up
    axis comes from that normal instead of the tile frame's flat normal
    (a minimal tilt rotation applied on top); positions are unchanged.
    """
    rot = inst.rotation_matrix()
    if jitter is not None:
        rot = mat3_mul(jitter, rot)
    linear = mat3_mul(m1.linear, rot)
    if smooth_normal is not None:
        flat_n = (m1.linear[1], m1.linear[4], m1.linear[7])
        tilt = rotation_between(vnormalize(flat_n), vnormalize(smooth_normal))
        linear = mat3_mul(tilt, linear)
    return Affine(linear, m1.apply_point(inst.local_position))


_U64 = (1 << 64) - 1


def _mix64_py(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _U64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _U64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _U64
    return z ^ (z >> 31)


def jitter_rotation(
    mesh_instance_id: int,
    tile_cell: int,
    instance_index: int,
    time: float,
    amplitude: float,
) -> Mat3:
    """Deterministic per-instance wobble; no structure is rebuilt.

    Axis and phase come from a hash of the placement identity; the angle
    is amplitude * sin(2*pi*((f*t) mod 1) + phase) with f = 1 Hz, so the
    rotation is exactly periodic in 1/f and exactly identity at
    amplitude 0.
    """
    if amplitude == 0.0:
        return (1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0)
    h1 = _mix64_py(mesh_instance_id ^ _mix64_py(tile_cell ^ _mix64_py(instance_index)))
    h2 = _mix64_py(h1)
    h3 = _mix64_py(h2)
    u1 = (h1 >> 11) * (1.0 / 9007199254740992.0)
    u2 = (h2 >> 11) * (1.0 / 9007199254740992.0)
    u3 = (h3 >> 11) * (1.0 / 9007199254740992.0)
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


def clip_reject(points, plane: ClipPlane) -> bool:
    """True when every point is in the invisible half-space. Traversal
    terminates there; straddling sets continue to the finer level.
    Atom-level geometry is never passed to this test."""
    for p in points:
        if plane.visible(p):
            return False
    return True


# ---------------------------------------------------------------------------
# tracing and frames


def _decode_hit(scene, ray_o, ray_d, t, mesh_inst, inst_slot, atom_slot, winv, layer: str) -> HitRecord:
    f = scene.flat
    if layer == "shell":
        tile_pos = int(scene.sqi_tile[inst_slot])
        tile_id = scene.square_tiles[tile_pos].id
        local_inst = int(inst_slot - f.sq_inst_start[tile_pos])
        mol_pos = int(f.sqi_mol[inst_slot])
    else:
        tile_pos = int(scene.cui_tile[inst_slot])
        tile_id = scene.cube_tiles[tile_pos].id
        local_inst = int(inst_slot - f.cu_inst_start[tile_pos])
        mol_pos = int(f.cui_mol[inst_slot])
    mol = scene.molecules[mol_pos]
    atom_local = int(atom_slot - f.mol_atom_start[mol_pos])
    winv_aff = Affine(tuple(winv[:9]), tuple(winv[9:]))
    w = affine_invert(winv_aff)
    center = (f.atom_x[atom_slot], f.atom_y[atom_slot], f.atom_z[atom_slot])
    composed = Affine(w.linear, w.apply_point(center))
    wp = (
        ray_o[0] + t * ray_d[0],
        ray_o[1] + t * ray_d[1],
        ray_o[2] + t * ray_d[2],
    )
    mo = winv_aff.apply_point(ray_o)
    md = winv_aff.apply_vector(ray_d)
    pm = (mo[0] + t * md[0], mo[1] + t * md[1], mo[2] + t * md[2])
    r = f.atom_r[atom_slot]
    nm = ((pm[0] - center[0]) / r, (pm[1] - center[1]) / r, (pm[2] - center[2]) / r)
    v = winv_aff.linear
    nw = vnormalize((
        v[0] * nm[0] + v[3] * nm[1] + v[6] * nm[2],
        v[1] * nm[0] + v[4] * nm[1] + v[7] * nm[2],
        v[2] * nm[0] + v[5] * nm[1] + v[8] * nm[2],
    ))
    return HitRecord(
        t=float(t),
        world_point=wp,
        world_normal=nw,
        mesh_instance_id=int(mesh_inst),
        tile_id=tile_id,
        instance_index=local_inst,
        molecule_type_id=mol.id,
        atom_index=atom_local,
        composed=composed,
        layer=layer,
    )


def _trace(scene, ray: Ray, config: RenderConfig, which: int) -> Optional[HitRecord]:
    ws = kernels.make_workspace(len(scene.instances))
    (_, _, use_rep, smooth, clip_on, cnx, cny, cnz, coff, time, amp) = config.kernel_args()
    bt, bm, br, bc, bi, ba = kernels.trace_single(
        scene.flat, which,
        ray.origin[0], ray.origin[1], ray.origin[2],
        ray.direction[0], ray.direction[1], ray.direction[2],
        ray.t_min, ray.t_max,
        use_rep, smooth, clip_on, cnx, cny, cnz, coff, time, amp,
        ws.stack_a, ws.stack_b, ws.stack_c, ws.stack_d, ws.cand_t, ws.cand_i, ws.winv,
    )
    if bm < 0:
        return None
    layer = "shell" if which == kernels.LAYER_SHELL else "core"
    return _decode_hit(scene, ray.origin, ray.direction, bt, bm, bi, ba, ws.winv, layer)


def trace_shell(ray: Ray, scene, config: Optional[RenderConfig] = None) -> Optional[HitRecord]:
    return _trace(scene, ray, config or RenderConfig(), kernels.LAYER_SHELL)


def trace_core(ray: Ray, scene, config: Optional[RenderConfig] = None) -> Optional[HitRecord]:
    return _trace(scene, ray, config or RenderConfig(), kernels.LAYER_CORE)


def render_frame(
    scene,
    camera: Camera,
    config: Optional[RenderConfig] = None,
    with_ids: bool = False,
) -> Framebuffer:
    """Trace both renderers per pixel and composite on depth (exact ties
    go to the shell layer); shade with a headlight lambert model and a
    15% ambient floor on the molecule base color."""
    config = config or RenderConfig()
    rays_o, rays_d = camera.rays()
    n = camera.width * camera.height
    out_rgb = np.empty((n, 3), np.uint8)
    out_t = np.empty(n, np.float64)
    out_ids = np.empty((n, 7), np.int64)
    ws = kernels.make_workspace(len(scene.instances))
    winv_c = np.empty(12, np.float64)
    (shell_on, core_on, use_rep, smooth, clip_on, cnx, cny, cnz, coff, time, amp) = (
        config.kernel_args()
    )
    bg = config.background
    kernels.render_kernel(
        scene.flat,
        rays_o, rays_d,
        camera.position[0], camera.position[1], camera.position[2],
        shell_on, core_on, use_rep, smooth, clip_on, cnx, cny, cnz, coff,
        time, amp, bg[0], bg[1], bg[2],
        ws.stack_a, ws.stack_b, ws.stack_c, ws.stack_d, ws.cand_t, ws.cand_i,
        ws.winv, winv_c,
        out_rgb, out_t, out_ids,
    )
    h, w = camera.height, camera.width
    return Framebuffer(
        width=w,
        height=h,
        rgb=out_rgb.reshape(h, w, 3),
        depth=out_t.reshape(h, w),
        ids=out_ids.reshape(h, w, 7) if with_ids else None,
    )
