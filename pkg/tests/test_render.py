import math

import numpy as np
import pytest

from helpers import (
    blob_molecule,
    box_core_scene,
    closed_box_mesh,
    flat_quad_mesh,
    quad_shell_scene,
    single_atom_molecule,
)
from tileray.geometry import Affine, Ray, ray_sphere, vnorm
from tileray.molecules import Atom, MoleculeType
from tileray.render import Camera, ClipPlane, RenderConfig, render_frame, trace_core, trace_shell
from tileray.scene import build_scene
from tileray.tiling import MoleculeInstance, WangCubeTile, WangSquareTile


def isometric_quad_scene(local_y=0.5, radius=1.0):
    """8x8 quad, uv tile 0.25 <-> world tile 2.0: tiles land unscaled, so
    sphere positions are hand-computable."""
    mol = single_atom_molecule(radius)
    sq = WangSquareTile(0, (0, 0, 0, 0), [MoleculeInstance(0, (0.0, local_y, 0.0))], 2.0)
    cu = WangCubeTile(0, (0,) * 6, [MoleculeInstance(0, (0.0, 0.0, 0.0))], 2.0)
    mesh = flat_quad_mesh(8.0)
    return build_scene(
        molecules=[mol], square_tiles=[sq], cube_tiles=[cu],
        meshes=[(mesh, True, False)], instances=[(0, Affine.identity())],
        tile_uv_size=0.25,
    )


def tile_centers_world(size=8.0, t=0.25):
    # recipe covers uv [0, 1.25); tile centers in world units
    n = int(1.0 / t) + 1
    return [(size * (k + 0.5) * t) for k in range(n)]


class TestTraceShell:
    def test_single_atom_matches_hand_placed_sphere(self):
        scene = isometric_quad_scene()
        # tile covering uv cell (1,1): center world (3.0, 0, 3.0), instance
        # sits 0.5 above the plane
        ray = Ray((3.0, 10.0, 3.0), (0.0, -1.0, 0.0))
        hit = trace_shell(ray, scene)
        expected_t = ray_sphere(ray, (3.0, 0.5, 3.0), 1.0)
        assert hit is not None
        assert hit.t == pytest.approx(expected_t, rel=1e-12)
        assert hit.molecule_type_id == 0
        assert hit.layer == "shell"
        assert hit.mesh_instance_id == 0

    def test_miss_all_prisms(self):
        scene = isometric_quad_scene()
        assert trace_shell(Ray((50.0, 10.0, 50.0), (0.0, -1.0, 0.0)), scene) is None

    def test_two_candidates_closest_wins(self):
        scene = isometric_quad_scene()
        # ray flying along -x at sphere height: crosses every tile's
        # sphere; the closest materialized sphere must win
        ray = Ray((20.0, 0.5, 3.0), (-1.0, 0.0, 0.0))
        hit = trace_shell(ray, scene)
        # cells beyond the quad edge extrapolate their reference point
        # outside every prism and are rejected; keep on-mesh cells only
        centers = [(cx, 0.5, 3.0) for cx in tile_centers_world() if cx < 8.0]
        ts = [t for c in centers if (t := ray_sphere(ray, c, 1.0)) is not None]
        assert hit is not None
        assert hit.t == pytest.approx(min(ts), rel=1e-12)

    def test_hit_record_invariants(self):
        scene = isometric_quad_scene()
        ray = Ray((3.2, 10.0, 2.9), (0.0, -1.0, 0.0))
        hit = trace_shell(ray, scene)
        assert hit is not None
        expected_point = ray.at(hit.t)
        assert vnorm(np.subtract(hit.world_point, expected_point)) <= 1e-6 * max(1.0, hit.t)
        assert vnorm(hit.world_normal) == pytest.approx(1.0, abs=1e-9)
        # the composed transform places the atom center where the sphere is
        center_world = hit.composed.apply_point((0.0, 0.0, 0.0))
        assert vnorm(np.subtract(center_world, (3.0, 0.5, 3.0))) <= 1e-6


class TestTraceCore:
    def test_camera_inside_hits_first_box(self):
        scene = box_core_scene(extent=6.0, cube_world=2.0)
        hit = trace_core(Ray((0.0, 0.0, 0.0), (1.0, 0.0, 0.0)), scene)
        # instance at every box center; camera sits in the middle box and
        # the first hit is the sphere centered there (exit side)
        assert hit is not None
        assert hit.t == pytest.approx(1.0)
        assert hit.layer == "core"

    def test_empty_tile_gives_none(self):
        mol = single_atom_molecule()
        cu = WangCubeTile(0, (0,) * 6, [], 2.0)
        scene = build_scene(
            molecules=[mol], square_tiles=[], cube_tiles=[cu],
            meshes=[(closed_box_mesh(6.0), False, True)],
            instances=[(0, Affine.identity())], tile_uv_size=0.25,
        )
        assert trace_core(Ray((0.0, 0.0, 0.0), (1.0, 0.0, 0.0)), scene) is None

    def test_ray_missing_mesh_gives_none(self):
        scene = box_core_scene(extent=6.0)
        assert trace_core(Ray((-10.0, 20.0, 0.0), (1.0, 0.0, 0.0)), scene) is None

    def test_outside_enters_through_surface(self):
        scene = box_core_scene(extent=6.0, cube_world=2.0)
        hit = trace_core(Ray((-10.0, 0.0, 0.0), (1.0, 0.0, 0.0)), scene)
        assert hit is not None
        # first sphere along +x sits at box center (-2, 0, 0)
        expected = ray_sphere(Ray((-10.0, 0.0, 0.0), (1.0, 0.0, 0.0)), (-2.0, 0.0, 0.0), 1.0)
        assert hit.t == pytest.approx(expected, rel=1e-12)

    def test_content_outside_interval_ignored(self):
        # ray that clips the box corner region without entering: no hit
        scene = box_core_scene(extent=6.0)
        assert trace_core(Ray((-10.0, 3.5, 0.0), (1.0, 0.0, 0.0)), scene) is None


def small_camera(position, forward, n=32):
    return Camera(position=position, forward=forward, up=(0, 1, 0), fov=0.9, width=n, height=n)


class TestRenderFrame:
    def test_empty_scene_uniform_background(self):
        mol = single_atom_molecule()
        scene = build_scene(
            molecules=[mol], square_tiles=[], cube_tiles=[],
            meshes=[(closed_box_mesh(4.0), False, False)],
            instances=[(0, Affine.identity())], tile_uv_size=0.25,
        )
        cfg = RenderConfig(background=(0.2, 0.3, 0.4))
        fb = render_frame(scene, small_camera((0, 0, 20), (0, 0, -1)), cfg)
        expected = np.array(
            [int(0.2 * 255 + 0.5), int(0.3 * 255 + 0.5), int(0.4 * 255 + 0.5)], np.uint8
        )
        assert (fb.rgb == expected[None, None, :]).all()
        assert np.isinf(fb.depth).all()

    def test_depth_compositing_core_wins_when_closer(self):
        # a shell quad behind a core box along the same rays
        mol = single_atom_molecule()
        sq = WangSquareTile(0, (0, 0, 0, 0), [MoleculeInstance(0, (0.0, 0.5, 0.0))], 2.0)
        cu = WangCubeTile(0, (0,) * 6, [MoleculeInstance(0, (0.0, 0.0, 0.0))], 2.0)
        quad = flat_quad_mesh(8.0)
        box = closed_box_mesh(4.0, center=(4.0, 6.0, 4.0))
        scene = build_scene(
            molecules=[mol], square_tiles=[sq], cube_tiles=[cu],
            meshes=[(quad, True, False), (box, False, True)],
            instances=[(0, Affine.identity()), (1, Affine.identity())],
            tile_uv_size=0.25,
        )
        ray = Ray((3.0, 20.0, 3.0), (0.0, -1.0, 0.0))
        shell_hit = trace_shell(ray, scene)
        core_hit = trace_core(ray, scene)
        assert shell_hit is not None and core_hit is not None
        assert core_hit.t < shell_hit.t
        cam = small_camera((3.0, 20.0, 3.0), (0, -1, 0), n=3)
        fb = render_frame(scene, cam, RenderConfig(), with_ids=True)
        assert fb.ids[1, 1, 0] == 2  # center pixel comes from the core layer
        assert fb.depth[1, 1] == pytest.approx(core_hit.t, rel=1e-6)

    def test_shading_scales_with_base_color(self):
        def scene_with_color(c):
            mol = single_atom_molecule()
            mol.color = c
            sq = WangSquareTile(0, (0, 0, 0, 0), [MoleculeInstance(0, (0.0, 0.5, 0.0))], 2.0)
            cu = WangCubeTile(0, (0,) * 6, [MoleculeInstance(0, (0.0, 0.0, 0.0))], 2.0)
            return build_scene(
                molecules=[mol], square_tiles=[sq], cube_tiles=[cu],
                meshes=[(flat_quad_mesh(8.0), True, False)],
                instances=[(0, Affine.identity())], tile_uv_size=0.25,
            )

        cam = small_camera((4.0, 12.0, 4.0), (0, -1, 0))
        cfg = RenderConfig(background=(0.0, 0.0, 0.0))
        full = render_frame(scene_with_color((0.9, 0.9, 0.9)), cam, cfg, with_ids=True)
        half = render_frame(scene_with_color((0.45, 0.45, 0.45)), cam, cfg, with_ids=True)
        hitpx = full.ids[:, :, 0] > 0
        assert hitpx.any()
        assert (half.ids == full.ids).all()
        a = full.rgb[hitpx].astype(np.int32)
        b = half.rgb[hitpx].astype(np.int32)
        assert np.abs(b - (a + 1) // 2).max() <= 1  # quantization slack

    def test_rep_grid_toggle_bit_identical(self):
        scene = isometric_quad_scene()
        cam = small_camera((4.0, 12.0, 4.0), (0, -1, 0), n=48)
        a = render_frame(scene, cam, RenderConfig(use_rep_grid=True), with_ids=True)
        b = render_frame(scene, cam, RenderConfig(use_rep_grid=False), with_ids=True)
        assert (a.rgb == b.rgb).all()
        assert (a.ids == b.ids).all()
        finite = np.isfinite(a.depth)
        assert (a.depth[finite] == b.depth[finite]).all()

    def test_depth_channel_matches_traces(self):
        scene = isometric_quad_scene()
        cam = small_camera((4.0, 12.0, 4.0), (0, -1, 0), n=16)
        fb = render_frame(scene, cam, RenderConfig(), with_ids=True)
        rays_o, rays_d = cam.rays()
        for idx in (0, 37, 120, 255):
            ray = Ray(tuple(rays_o[idx]), tuple(rays_d[idx]))
            hits = [h for h in (trace_shell(ray, scene), trace_core(ray, scene)) if h]
            y, x = divmod(idx, 16)
            if hits:
                assert fb.depth[y, x] == pytest.approx(min(h.t for h in hits), rel=1e-12)
            else:
                assert np.isinf(fb.depth[y, x])


class TestSceneEdits:
    def test_identity_update_is_bit_identical_and_counts(self):
        scene = isometric_quad_scene()
        cam = small_camera((4.0, 12.0, 4.0), (0, -1, 0))
        before = render_frame(scene, cam, RenderConfig())
        counts0 = dict(scene.build_counts)
        scene.set_mesh_transform(0, Affine.identity())
        after = render_frame(scene, cam, RenderConfig())
        assert (before.rgb == after.rgb).all()
        assert scene.build_counts["scene"] == counts0["scene"] + 1
        assert scene.build_counts["tiles"] == counts0["tiles"]
        assert scene.build_counts["molecules"] == counts0["molecules"]

    def test_translation_moves_hits_rigidly(self):
        scene = isometric_quad_scene()
        ray = Ray((3.0, 10.0, 3.0), (0.0, -1.0, 0.0))
        before = trace_shell(ray, scene)
        scene.set_mesh_transform(0, Affine.translate((10.0, 0.0, 0.0)))
        moved = trace_shell(Ray((13.0, 10.0, 3.0), (0.0, -1.0, 0.0)), scene)
        assert before is not None and moved is not None
        delta = np.subtract(moved.world_point, before.world_point)
        assert delta == pytest.approx((10.0, 0.0, 0.0), abs=1e-9)

    def test_singular_transform_rejected(self):
        from tileray.geometry import SingularMatrixError

        scene = isometric_quad_scene()
        with pytest.raises(SingularMatrixError):
            scene.set_mesh_transform(0, Affine((1, 0, 0, 2, 0, 0, 0, 0, 1)))

    def test_jitter_zero_bit_identical_and_no_rebuilds(self):
        # the atom must sit off the instance origin or rotations are
        # invisible on a sphere
        mol = MoleculeType(id=0, name="off", atoms=[Atom((0.8, 0.0, 0.0), 0.7, "C")])
        sq = WangSquareTile(0, (0, 0, 0, 0), [MoleculeInstance(0, (0.0, 0.5, 0.0))], 2.0)
        cu = WangCubeTile(0, (0,) * 6, [MoleculeInstance(0, (0.0, 0.0, 0.0))], 2.0)
        scene = build_scene(
            molecules=[mol], square_tiles=[sq], cube_tiles=[cu],
            meshes=[(flat_quad_mesh(8.0), True, False)],
            instances=[(0, Affine.identity())], tile_uv_size=0.25,
        )
        cam = small_camera((4.0, 12.0, 4.0), (0, -1, 0))
        counts0 = dict(scene.build_counts)
        static = render_frame(scene, cam, RenderConfig())
        frozen = render_frame(scene, cam, RenderConfig(jitter_amplitude=0.0, time=5.0))
        assert (static.rgb == frozen.rgb).all()
        moving = render_frame(scene, cam, RenderConfig(jitter_amplitude=0.4, time=0.3))
        assert scene.build_counts == counts0
        assert (moving.rgb != static.rgb).any()


class TestVirtualAtomCount:
    def test_explicit_enumeration_matches(self):
        mol = blob_molecule(10, seed=1)
        scene = quad_shell_scene(molecule=mol)
        f = scene.flat
        total = 0
        for tri in range(f.tri_p.shape[0]):
            for e in range(f.tri_ent_start[tri], f.tri_ent_start[tri] + f.tri_ent_count[tri]):
                tile = f.ent_tile[e]
                for si in range(f.sq_inst_start[tile], f.sq_inst_start[tile] + f.sq_inst_count[tile]):
                    total += int(f.mol_atom_count[f.sqi_mol[si]])
        assert scene.virtual_atom_count() == total
        assert total > 0

    def test_grid_512_boxes_100_atoms(self):
        mol = blob_molecule(100, seed=2)
        scene = box_core_scene(molecule=mol, extent=16.0, cube_world=2.0)
        assert scene.meshes[0].grid.dims == (8, 8, 8)
        assert scene.virtual_atom_count() == 512 * 100

    def test_scales_exactly_with_instances(self):
        mol = blob_molecule(10, seed=3)
        one = quad_shell_scene(molecule=mol)
        many = quad_shell_scene(
            molecule=mol,
            instances=[(0, Affine.translate((40.0 * k, 0.0, 0.0))) for k in range(7)],
        )
        assert many.virtual_atom_count() == 7 * one.virtual_atom_count()


class TestClipAtRenderLevel:
    def test_clipped_side_empty_straddlers_survive(self):
        scene = isometric_quad_scene()
        cam = small_camera((4.0, 12.0, 4.0), (0, -1, 0), n=48)
        plane = ClipPlane(normal=(1.0, 0.0, 0.0), offset=4.0)
        fb = render_frame(scene, cam, RenderConfig(clip=plane), with_ids=True)
        clear = render_frame(scene, cam, RenderConfig(), with_ids=True)
        rays_o, rays_d = cam.rays()
        wp = rays_o + rays_d * fb.depth.reshape(-1)[:, None]
        hit = fb.ids.reshape(-1, 7)[:, 0] > 0
        # hits on the invisible side exist only for straddling instances
        invisible = hit & (wp[:, 0] - 4.0 < 0)
        assert invisible.any()
        # and the clipped image loses some pixels the clear image had
        assert (clear.ids.reshape(-1, 7)[:, 0] > 0).sum() > hit.sum()


class TestSmoothNormals:
    def test_flat_mesh_modes_agree(self):
        scene = isometric_quad_scene()
        cam = small_camera((4.0, 12.0, 4.0), (0, -1, 0), n=32)
        flat = render_frame(scene, cam, RenderConfig(smooth_normals=False), with_ids=True)
        smooth = render_frame(scene, cam, RenderConfig(smooth_normals=True), with_ids=True)
        assert (flat.ids == smooth.ids).all()
        finite = np.isfinite(flat.depth)
        assert np.allclose(flat.depth[finite], smooth.depth[finite], rtol=1e-6)

    def test_curved_mesh_modes_differ(self, micro_cell):
        from tileray.sceneio import camera_from_defaults

        cam = camera_from_defaults(micro_cell, width=48, height=48)
        flat = render_frame(micro_cell, cam, RenderConfig(smooth_normals=False))
        smooth = render_frame(micro_cell, cam, RenderConfig(smooth_normals=True))
        assert (flat.rgb != smooth.rgb).any()


def test_config_validation():
    with pytest.raises(ValueError):
        RenderConfig(jitter_amplitude=-0.1)
    with pytest.raises(ValueError):
        RenderConfig(mode="wireframe")
