"""Vectors, affine transforms, rays, and primitive intersection kernels.

Vectors are plain ``(x, y, z)`` float tuples; affine transforms keep a
row-major 3x3 linear part plus a translation. Everything here is an
immutable value and every function is pure, so all of it is safe to call
from any number of workers.

The arithmetic in the intersection kernels is written in a fixed,
canonical expression order. The compiled render kernels and the
vectorized test oracles mirror these expressions term by term so that
all three paths produce bit-identical IEEE doubles; edit them together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Tuple

Vec3 = Tuple[float, float, float]
Vec2 = Tuple[float, float]

#: Relative epsilon applied to scene-scale quantities (fraction of the
#: scene AABB diagonal) when callers do not pass their own tolerance.
SCENE_EPS_REL = 1e-6

_SINGULAR_DET = 1e-12


class SingularMatrixError(ValueError):
    """Raised when inverting an affine whose linear part is degenerate."""


# ---------------------------------------------------------------------------
# vector helpers


def vadd(a: Vec3, b: Vec3) -> Vec3:
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


def vsub(a: Vec3, b: Vec3) -> Vec3:
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def vscale(a: Vec3, s: float) -> Vec3:
    return (a[0] * s, a[1] * s, a[2] * s)


def vdot(a: Vec3, b: Vec3) -> float:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def vcross(a: Vec3, b: Vec3) -> Vec3:
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


def vnorm(a: Vec3) -> float:
    return math.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])


def vnormalize(a: Vec3) -> Vec3:
    n = vnorm(a)
    if n == 0.0:
        raise ValueError("cannot normalize zero vector")
    return (a[0] / n, a[1] / n, a[2] / n)


def vmin(a: Vec3, b: Vec3) -> Vec3:
    return (min(a[0], b[0]), min(a[1], b[1]), min(a[2], b[2]))


def vmax(a: Vec3, b: Vec3) -> Vec3:
    return (max(a[0], b[0]), max(a[1], b[1]), max(a[2], b[2]))


# ---------------------------------------------------------------------------
# core value types


class Interval(NamedTuple):
    t_enter: float
    t_exit: float


@dataclass(frozen=True)
class Aabb:
    min: Vec3
    max: Vec3

    def __post_init__(self):
        if not all(self.min[i] <= self.max[i] for i in range(3)):
            raise ValueError(f"Aabb min {self.min} exceeds max {self.max}")

    def union(self, other: "Aabb") -> "Aabb":
        return Aabb(vmin(self.min, other.min), vmax(self.max, other.max))

    def expand(self, margin: float) -> "Aabb":
        m = (margin, margin, margin)
        return Aabb(vsub(self.min, m), vadd(self.max, m))

    def diagonal(self) -> float:
        return vnorm(vsub(self.max, self.min))

    def center(self) -> Vec3:
        return (
            (self.min[0] + self.max[0]) * 0.5,
            (self.min[1] + self.max[1]) * 0.5,
            (self.min[2] + self.max[2]) * 0.5,
        )

    def corners(self) -> list[Vec3]:
        (x0, y0, z0), (x1, y1, z1) = self.min, self.max
        return [
            (x, y, z)
            for x in (x0, x1)
            for y in (y0, y1)
            for z in (z0, z1)
        ]

    def contains(self, p: Vec3, eps: float = 0.0) -> bool:
        return all(self.min[i] - eps <= p[i] <= self.max[i] + eps for i in range(3))

    @staticmethod
    def of_points(points) -> "Aabb":
        pts = list(points)
        lo, hi = pts[0], pts[0]
        for p in pts[1:]:
            lo, hi = vmin(lo, p), vmax(hi, p)
        return Aabb(lo, hi)


@dataclass(frozen=True)
class Ray:
    """Ray origin + t*direction, valid over [t_min, t_max].

    The direction is not required to be unit length and is never
    renormalized by transforms: the same t parameter must stay valid in
    every space of an instance chain.
    """

    origin: Vec3
    direction: Vec3
    t_min: float = 0.0
    t_max: float = math.inf

    def __post_init__(self):
        if not (self.t_min < self.t_max):
            raise ValueError(f"ray interval [{self.t_min}, {self.t_max}] is empty")
        if self.direction == (0.0, 0.0, 0.0):
            raise ValueError("ray direction is zero")

    def at(self, t: float) -> Vec3:
        o, d = self.origin, self.direction
        return (o[0] + t * d[0], o[1] + t * d[1], o[2] + t * d[2])


# row-major 3x3 as a flat 9-tuple
Mat3 = Tuple[float, float, float, float, float, float, float, float, float]

IDENTITY3: Mat3 = (1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0)


@dataclass(frozen=True)
class Affine:
    """Affine map p -> linear @ p + translation (linear is row-major)."""

    linear: Mat3 = IDENTITY3
    translation: Vec3 = (0.0, 0.0, 0.0)

    def apply_point(self, p: Vec3) -> Vec3:
        m, t = self.linear, self.translation
        return (
            m[0] * p[0] + m[1] * p[1] + m[2] * p[2] + t[0],
            m[3] * p[0] + m[4] * p[1] + m[5] * p[2] + t[1],
            m[6] * p[0] + m[7] * p[1] + m[8] * p[2] + t[2],
        )

    def apply_vector(self, v: Vec3) -> Vec3:
        m = self.linear
        return (
            m[0] * v[0] + m[1] * v[1] + m[2] * v[2],
            m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
            m[6] * v[0] + m[7] * v[1] + m[8] * v[2],
        )

    def det(self) -> float:
        return mat3_det(self.linear)

    @staticmethod
    def identity() -> "Affine":
        return Affine()

    @staticmethod
    def translate(v: Vec3) -> "Affine":
        return Affine(IDENTITY3, v)

    @staticmethod
    def rotate(m: Mat3) -> "Affine":
        return Affine(m, (0.0, 0.0, 0.0))


def mat3_det(m: Mat3) -> float:
    return (
        m[0] * (m[4] * m[8] - m[5] * m[7])
        - m[1] * (m[3] * m[8] - m[5] * m[6])
        + m[2] * (m[3] * m[7] - m[4] * m[6])
    )


def mat3_mul(a: Mat3, b: Mat3) -> Mat3:
    return (
        a[0] * b[0] + a[1] * b[3] + a[2] * b[6],
        a[0] * b[1] + a[1] * b[4] + a[2] * b[7],
        a[0] * b[2] + a[1] * b[5] + a[2] * b[8],
        a[3] * b[0] + a[4] * b[3] + a[5] * b[6],
        a[3] * b[1] + a[4] * b[4] + a[5] * b[7],
        a[3] * b[2] + a[4] * b[5] + a[5] * b[8],
        a[6] * b[0] + a[7] * b[3] + a[8] * b[6],
        a[6] * b[1] + a[7] * b[4] + a[8] * b[7],
        a[6] * b[2] + a[7] * b[5] + a[8] * b[8],
    )


def mat3_inv(m: Mat3) -> Mat3:
    det = mat3_det(m)
    if abs(det) <= _SINGULAR_DET:
        raise SingularMatrixError(f"matrix determinant {det} too small to invert")
    inv_det = 1.0 / det
    return (
        (m[4] * m[8] - m[5] * m[7]) * inv_det,
        (m[2] * m[7] - m[1] * m[8]) * inv_det,
        (m[1] * m[5] - m[2] * m[4]) * inv_det,
        (m[5] * m[6] - m[3] * m[8]) * inv_det,
        (m[0] * m[8] - m[2] * m[6]) * inv_det,
        (m[2] * m[3] - m[0] * m[5]) * inv_det,
        (m[3] * m[7] - m[4] * m[6]) * inv_det,
        (m[1] * m[6] - m[0] * m[7]) * inv_det,
        (m[0] * m[4] - m[1] * m[3]) * inv_det,
    )


def mat3_transpose(m: Mat3) -> Mat3:
    return (m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8])


def quat_to_mat3(w: float, x: float, y: float, z: float) -> Mat3:
    """Unit quaternion (w, x, y, z) to a row-major rotation matrix."""
    n = math.sqrt(w * w + x * x + y * y + z * z)
    if n == 0.0:
        raise ValueError("zero quaternion")
    w, x, y, z = w / n, x / n, y / n, z / n
    return (
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )


def axis_angle_mat3(axis: Vec3, angle: float) -> Mat3:
    """Rodrigues rotation about a unit axis."""
    c = math.cos(angle)
    s = math.sin(angle)
    t = 1.0 - c
    x, y, z = axis
    return (
        t * x * x + c,
        t * x * y - s * z,
        t * x * z + s * y,
        t * x * y + s * z,
        t * y * y + c,
        t * y * z - s * x,
        t * x * z - s * y,
        t * y * z + s * x,
        t * z * z + c,
    )


def rotation_between(a: Vec3, b: Vec3) -> Mat3:
    """Minimal rotation taking unit vector a onto unit vector b."""
    axis = vcross(a, b)
    s = vnorm(axis)
    c = vdot(a, b)
    if s < 1e-12:
        if c > 0.0:
            return IDENTITY3
        # opposite vectors: rotate pi about any axis orthogonal to a
        ortho = (1.0, 0.0, 0.0) if abs(a[0]) < 0.9 else (0.0, 1.0, 0.0)
        axis = vnormalize(vcross(a, ortho))
        return axis_angle_mat3(axis, math.pi)
    return axis_angle_mat3((axis[0] / s, axis[1] / s, axis[2] / s), math.atan2(s, c))


def affine_compose(a: Affine, b: Affine) -> Affine:
    """a after b: (a o b)(p) = a(b(p))."""
    return Affine(mat3_mul(a.linear, b.linear), a.apply_point(b.translation))


def affine_invert(a: Affine) -> Affine:
    inv = mat3_inv(a.linear)
    t = a.translation
    return Affine(
        inv,
        (
            -(inv[0] * t[0] + inv[1] * t[1] + inv[2] * t[2]),
            -(inv[3] * t[0] + inv[4] * t[1] + inv[5] * t[2]),
            -(inv[6] * t[0] + inv[7] * t[1] + inv[8] * t[2]),
        ),
    )


def transform_ray(inv: Affine, ray: Ray) -> Ray:
    """Map a ray by an (already inverted) affine.

    The origin maps as a point, the direction by the linear part only and
    without renormalization, so a hit at parameter t in the target space
    corresponds to the same t in the source space.
    """
    return Ray(
        inv.apply_point(ray.origin),
        inv.apply_vector(ray.direction),
        ray.t_min,
        ray.t_max,
    )


# ---------------------------------------------------------------------------
# intersection kernels


def ray_aabb(ray: Ray, box: Aabb) -> Optional[Interval]:
    """Slab-method interval, before clamping to the ray's [t_min, t_max].

    Returns None when the slabs are disjoint; the caller intersects the
    result with its own ray interval. A raw interval may straddle zero
    when the origin is inside the box.
    """
    o, d = ray.origin, ray.direction
    t_enter = -math.inf
    t_exit = math.inf
    for i in range(3):
        if d[i] != 0.0:
            inv_d = 1.0 / d[i]
            t1 = (box.min[i] - o[i]) * inv_d
            t2 = (box.max[i] - o[i]) * inv_d
            if t1 > t2:
                t1, t2 = t2, t1
            if t1 > t_enter:
                t_enter = t1
            if t2 < t_exit:
                t_exit = t2
        elif o[i] < box.min[i] or o[i] > box.max[i]:
            return None
    if t_enter > t_exit:
        return None
    return Interval(t_enter, t_exit)


def ray_sphere(ray: Ray, center: Vec3, radius: float) -> Optional[float]:
    """Smallest t in [t_min, t_max] with |origin + t*dir - center| = radius."""
    o, d = ray.origin, ray.direction
    ocx = o[0] - center[0]
    ocy = o[1] - center[1]
    ocz = o[2] - center[2]
    a = d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
    b = ocx * d[0] + ocy * d[1] + ocz * d[2]
    c = ocx * ocx + ocy * ocy + ocz * ocz - radius * radius
    disc = b * b - a * c
    if disc < 0.0:
        return None
    s = math.sqrt(disc)
    t = (-b - s) / a
    if t < ray.t_min:
        t = (-b + s) / a
    if ray.t_min <= t <= ray.t_max:
        return t
    return None


class TriangleHit(NamedTuple):
    t: float
    weights: Tuple[float, float, float]  # barycentric (w0, w1, w2)
    front_facing: bool


def ray_triangle(
    ray: Ray,
    v0: Vec3,
    v1: Vec3,
    v2: Vec3,
    bounded: bool = True,
) -> Optional[TriangleHit]:
    """Moller-Trumbore with inclusive edge acceptance.

    front_facing is dir . n < 0 with n from counter-clockwise winding.
    Hits exactly on shared edges register on both triangles; callers
    de-duplicate with the smaller-primitive-index rule. With
    bounded=False the t range is unrestricted (used for boundary
    crossings of closed solids).
    """
    e1 = vsub(v1, v0)
    e2 = vsub(v2, v0)
    pvec = vcross(ray.direction, e2)
    det = vdot(e1, pvec)
    if abs(det) < 1e-14:
        return None
    inv_det = 1.0 / det
    tvec = vsub(ray.origin, v0)
    u = vdot(tvec, pvec) * inv_det
    if u < 0.0 or u > 1.0:
        return None
    qvec = vcross(tvec, e1)
    v = vdot(ray.direction, qvec) * inv_det
    if v < 0.0 or u + v > 1.0:
        return None
    t = vdot(e2, qvec) * inv_det
    if bounded and not (ray.t_min <= t <= ray.t_max):
        return None
    # det = e1 . (d x e2) = -(d . (e1 x e2)), so front faces have det > 0
    return TriangleHit(t, (1.0 - u - v, u, v), det > 0.0)


def barycentric_interp(weights: Tuple[float, float, float], a: Vec3, b: Vec3, c: Vec3) -> Vec3:
    w0, w1, w2 = weights
    return (
        a[0] * w0 + b[0] * w1 + c[0] * w2,
        a[1] * w0 + b[1] * w1 + c[1] * w2,
        a[2] * w0 + b[2] * w1 + c[2] * w2,
    )


def closest_triangle_hit(ray: Ray, triangles) -> Optional[Tuple[int, TriangleHit]]:
    """Closest hit over (v0, v1, v2) triples.

    Ties at exactly equal t go to the smaller primitive index, so a ray
    through a shared edge reports exactly one hit.
    """
    best: Optional[Tuple[int, TriangleHit]] = None
    for idx, (v0, v1, v2) in enumerate(triangles):
        hit = ray_triangle(ray, v0, v1, v2)
        if hit is None:
            continue
        if best is None or hit.t < best[1].t:
            best = (idx, hit)
    return best
