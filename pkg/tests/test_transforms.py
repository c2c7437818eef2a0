import math

import numpy as np
import pytest

from tileray.geometry import Affine, mat3_mul, quat_to_mat3, vnorm, vnormalize, vsub
from tileray.render import (
    ClipPlane,
    DegenerateUvError,
    clip_reject,
    instance_transform,
    jitter_rotation,
    tile_frame_transform_shell,
    uv_basis_inverse,
    uv_weights,
)
from tileray.tiling import MoleculeInstance


def column(m, k):
    return (m[k], m[k + 3], m[k + 6])


class TestTileFrame:
    def isometric_triangle(self, s=2.0, t=0.25):
        # uv spans exactly t where the world spans s: tiles land unscaled
        positions = ((0, 0, 0), (s / t, 0, 0), (0, 0, s / t))
        uvs = ((0, 0), (1, 0), (0, 1))
        return positions, uvs

    def test_isometry_gives_rotation_columns(self):
        positions, uvs = self.isometric_triangle()
        m1 = tile_frame_transform_shell(positions, uvs, Affine.identity(), (0.1, 0.1), 2.0, 0.25)
        cx, cy, cz = (column(m1.linear, k) for k in range(3))
        assert vnorm(cx) == pytest.approx(1.0)
        assert vnorm(cz) == pytest.approx(1.0)
        assert vnorm(cy) == pytest.approx(1.0)
        assert np.dot(cx, cz) == pytest.approx(0.0, abs=1e-12)

    def test_uv_stretch_scales_x_column(self):
        # u covers twice the world distance: tiles appear stretched x2
        positions = ((0, 0, 0), (16, 0, 0), (0, 0, 8))
        uvs = ((0, 0), (1, 0), (0, 1))
        m1 = tile_frame_transform_shell(positions, uvs, Affine.identity(), (0.1, 0.1), 2.0, 0.25)
        assert vnorm(column(m1.linear, 0)) == pytest.approx(2.0)
        assert vnorm(column(m1.linear, 2)) == pytest.approx(1.0)

    def test_translation_is_interpolated_center(self):
        positions, uvs = self.isometric_triangle()
        g_uv = (0.125, 0.0625)
        m1 = tile_frame_transform_shell(positions, uvs, Affine.identity(), g_uv, 2.0, 0.25)
        assert m1.translation == pytest.approx((0.125 * 8, 0.0, 0.0625 * 8))

    def test_footprint_corners_match_barycentric_oracle(self):
        rng = np.random.RandomState(61)
        for _ in range(50):
            positions = tuple(tuple(rng.uniform(-4, 4, 3)) for _ in range(3))
            uvs = tuple(tuple(rng.uniform(0, 1, 2)) for _ in range(3))
            iuv_ok = True
            try:
                iuv = uv_basis_inverse(*uvs)
            except DegenerateUvError:
                continue
            s, t = 2.0, 0.2
            g_uv = tuple(rng.uniform(0.2, 0.8, 2))
            world = Affine.identity()
            m1 = tile_frame_transform_shell(positions, uvs, world, g_uv, s, t)
            # the four tile footprint corners must land where direct uv
            # interpolation puts them
            for cx, cz in ((-s / 2, -s / 2), (s / 2, -s / 2), (s / 2, s / 2), (-s / 2, s / 2)):
                corner_uv = (g_uv[0] + cx / s * t, g_uv[1] + cz / s * t)
                w = uv_weights(iuv, uvs[0], corner_uv)
                expected = tuple(
                    positions[0][i] * w[0] + positions[1][i] * w[1] + positions[2][i] * w[2]
                    for i in range(3)
                )
                got = m1.apply_point((cx, 0.0, cz))
                assert got == pytest.approx(expected, abs=1e-6)

    def test_shared_linear_distinct_translation(self):
        positions, uvs = self.isometric_triangle()
        a = tile_frame_transform_shell(positions, uvs, Affine.identity(), (0.1, 0.1), 2.0, 0.25)
        b = tile_frame_transform_shell(positions, uvs, Affine.identity(), (0.35, 0.6), 2.0, 0.25)
        assert a.linear == b.linear
        assert a.translation != b.translation

    def test_degenerate_uv_raises(self):
        positions = ((0, 0, 0), (1, 0, 0), (0, 1, 0))
        uvs = ((0.2, 0.2), (0.2, 0.2), (0.2, 0.2))
        with pytest.raises(DegenerateUvError):
            tile_frame_transform_shell(positions, uvs, Affine.identity(), (0.1, 0.1), 1.0, 0.1)


class TestInstanceTransform:
    def test_identity_frame_pure_translation(self):
        inst = MoleculeInstance(0, (1.0, 0.0, 0.0))
        w = instance_transform(Affine.identity(), inst)
        assert w.linear == pytest.approx((1, 0, 0, 0, 1, 0, 0, 0, 1))
        assert w.translation == (1.0, 0.0, 0.0)

    def test_zero_jitter_matches_static(self):
        inst = MoleculeInstance(0, (0.5, 0.2, -0.1), (0.9, 0.1, 0.3, 0.1))
        m1 = Affine((1.2, 0, 0, 0, 1.0, 0, 0, 0, 0.8), (3, 4, 5))
        static = instance_transform(m1, inst)
        jittered = instance_transform(m1, inst, jitter=jitter_rotation(1, 2, 3, 0.5, 0.0))
        assert static.linear == jittered.linear
        assert static.translation == jittered.translation

    def test_local_rotation_applied(self):
        quat = (math.cos(math.pi / 4), 0.0, math.sin(math.pi / 4), 0.0)  # 90 deg about y
        inst = MoleculeInstance(0, (0.0, 0.0, 0.0), quat)
        w = instance_transform(Affine.identity(), inst)
        assert w.apply_vector((1, 0, 0)) == pytest.approx((0, 0, -1), abs=1e-12)

    def test_smooth_mode_agrees_on_flat_frame(self):
        # flat carrier: the interpolated normal equals the frame normal,
        # so both placement modes coincide
        inst = MoleculeInstance(0, (0.4, 0.1, 0.2), (0.8, 0.0, 0.6, 0.0))
        m1 = Affine((1.5, 0, 0, 0, 1.0, 0, 0, 0, 0.7), (1, 2, 3))
        flat_normal = (0.0, 1.0, 0.0)
        default = instance_transform(m1, inst)
        smooth = instance_transform(m1, inst, smooth_normal=flat_normal)
        assert np.allclose(default.linear, smooth.linear, atol=1e-6)
        assert default.translation == smooth.translation

    def test_smooth_mode_tilts_orientation(self):
        inst = MoleculeInstance(0, (0.0, 0.0, 0.0))
        tilted = vnormalize((0.3, 1.0, 0.0))
        w = instance_transform(Affine.identity(), inst, smooth_normal=tilted)
        up_world = w.apply_vector((0.0, 1.0, 0.0))
        assert up_world == pytest.approx(tilted, abs=1e-9)


class TestJitter:
    def test_amplitude_zero_identity(self):
        assert jitter_rotation(3, 14, 2, 1.23, 0.0) == (1, 0, 0, 0, 1, 0, 0, 0, 1)

    def test_deterministic(self):
        a = jitter_rotation(3, 14, 2, 1.23, 0.2)
        b = jitter_rotation(3, 14, 2, 1.23, 0.2)
        assert a == b

    def test_periodic_in_one_over_f(self):
        a = jitter_rotation(3, 14, 2, 0.37, 0.2)
        b = jitter_rotation(3, 14, 2, 1.37, 0.2)
        assert a == b  # bit-identical

    def test_distinct_placements_distinct_axes(self):
        a = jitter_rotation(0, 0, 0, 0.25, 0.3)
        b = jitter_rotation(0, 1, 0, 0.25, 0.3)
        assert a != b

    def test_is_a_rotation(self):
        m = jitter_rotation(7, 99, 4, 0.8, 0.5)
        mm = np.array(m).reshape(3, 3)
        assert np.allclose(mm @ mm.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(mm) == pytest.approx(1.0)


class TestClipReject:
    PLANE = ClipPlane(normal=(0.0, 0.0, 1.0), offset=0.0)

    def test_all_visible_keeps(self):
        assert clip_reject([(0, 0, 1.0), (1, 1, 1.0)], self.PLANE) is False

    def test_all_invisible_rejects(self):
        assert clip_reject([(0, 0, -1.0), (1, 1, -1.0)], self.PLANE) is True

    def test_straddling_continues(self):
        assert clip_reject([(0, 0, -1.0), (0, 0, 1.0)], self.PLANE) is False

    def test_boundary_counts_as_visible(self):
        assert clip_reject([(5, 5, 0.0)], self.PLANE) is False
