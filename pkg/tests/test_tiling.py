import math

import numpy as np
import pytest

from helpers import complete_cube_set, complete_square_set
from tileray.tiling import (
    MoleculeInstance,
    TilingError,
    WangCubeTile,
    WangSquareTile,
    generate_recipe_2d,
    generate_recipe_3d,
    map_triangle,
    recipe_lookup_2d,
    recipe_lookup_3d,
    replication_area_dims,
)


class FakeMesh:
    def __init__(self, uv_tris):
        self._uv = uv_tris

    def uv_triangles(self):
        return iter(self._uv)


class TestRecipe2D:
    def test_single_uniform_tile_fills_everything(self):
        tiles = [WangSquareTile(0, (0, 0, 0, 0), [], 1.0)]
        recipe = generate_recipe_2d(tiles, (4, 4), seed=1)
        assert (recipe.cells == 0).all()

    def test_complete_set_has_no_adjacency_violations(self):
        tiles = complete_square_set()
        recipe = generate_recipe_2d(tiles, (32, 32), seed=9)
        assert recipe.validate(tiles) == []

    def test_deterministic_under_seed(self):
        tiles = complete_square_set()
        a = generate_recipe_2d(tiles, (16, 16), seed=5)
        b = generate_recipe_2d(tiles, (16, 16), seed=5)
        assert (a.cells == b.cells).all()
        c = generate_recipe_2d(tiles, (16, 16), seed=6)
        assert (a.cells != c.cells).any()

    def test_unsatisfiable_names_first_cell(self):
        # the only tile with W=0 has E=1 and no tile has W=1
        tiles = [WangSquareTile(0, (0, 1, 0, 0), [], 1.0)]
        with pytest.raises(TilingError, match=r"\(1, 0\)"):
            generate_recipe_2d(tiles, (3, 1), seed=0)

    def test_empty_set_rejected(self):
        with pytest.raises(TilingError):
            generate_recipe_2d([], (2, 2), seed=0)


class TestRecipe3D:
    def test_single_cube_fills(self):
        tiles = [WangCubeTile(0, (0,) * 6, [], 1.0)]
        recipe = generate_recipe_3d(tiles, (2, 2, 2), seed=1)
        assert (recipe.cells == 0).all()

    def test_complete_cube_set_valid(self):
        tiles = complete_cube_set()
        recipe = generate_recipe_3d(tiles, (8, 8, 8), seed=4)
        assert recipe.validate(tiles) == []

    def test_deterministic(self):
        tiles = complete_cube_set()
        a = generate_recipe_3d(tiles, (4, 4, 4), seed=2)
        b = generate_recipe_3d(tiles, (4, 4, 4), seed=2)
        assert (a.cells == b.cells).all()


class TestReplicationDims:
    def test_ceil_plus_one(self):
        mesh = FakeMesh([(((0.0, 0.2), (0.3, 0.2), (0.0, 0.32)))])
        assert replication_area_dims(mesh, 0.1) == (4, 3)

    def test_degenerate_point_triangle(self):
        mesh = FakeMesh([(((0.5, 0.5), (0.5, 0.5), (0.5, 0.5)))])
        assert replication_area_dims(mesh, 0.1) == (1, 1)

    def test_windows_cover_every_triangle(self):
        rng = np.random.RandomState(8)
        t = 0.13
        for _ in range(1000):
            uv = rng.uniform(0, 1, (3, 2))
            mesh = FakeMesh([tuple(map(tuple, uv))])
            nu, nv = replication_area_dims(mesh, t)
            # cells geometrically touched by the triangle's bounding box
            lo = uv.min(axis=0)
            hi = uv.max(axis=0)
            first = (math.floor(lo[0] / t), math.floor(lo[1] / t))
            last = (math.floor(hi[0] / t), math.floor(hi[1] / t))
            assert last[0] - first[0] + 1 <= nu
            assert last[1] - first[1] + 1 <= nv


class TestMapTriangle:
    def recipe(self, w=8, h=8, t=0.125):
        tiles = [WangSquareTile(0, (0, 0, 0, 0), [], 1.0)]
        return generate_recipe_2d(tiles, (w, h), seed=0, tile_uv_size=t)

    def test_exact_cell(self):
        recipe = self.recipe()
        t = recipe.tile_uv_size
        tri = ((2 * t + 0.01, 3 * t + 0.01), (3 * t - 0.01, 3 * t + 0.01), (2 * t + 0.01, 4 * t - 0.01))
        area = map_triangle(tri, recipe, (1, 1))
        assert area.origin_cell == (2, 3)
        assert area.entries[0][0] == (2, 3)
        assert area.entries[0][1] == pytest.approx((2.5 * t, 3.5 * t))

    def test_corner_anchor(self):
        recipe = self.recipe()
        area = map_triangle(((0, 0), (0.2, 0), (0, 0.2)), recipe, (3, 3))
        assert area.origin_cell == (0, 0)

    def test_every_overlapped_cell_is_an_entry(self):
        rng = np.random.RandomState(12)
        recipe = self.recipe(w=16, h=16)
        t = recipe.tile_uv_size
        mesh_dims = None
        for _ in range(300):
            uv = rng.uniform(0, 1, (3, 2))
            mesh = FakeMesh([tuple(map(tuple, uv))])
            dims = replication_area_dims(mesh, t)
            area = map_triangle(tuple(map(tuple, uv)), recipe, dims)
            cells = {c for c, _ in area.entries}
            # rasterize the triangle at tile resolution: a cell overlaps
            # when any of a dense grid of triangle samples falls in it
            for w1 in np.linspace(0, 1, 15):
                for w2 in np.linspace(0, 1 - w1, 15):
                    p = (1 - w1 - w2) * uv[0] + w1 * uv[1] + w2 * uv[2]
                    ci = min(max(int(p[0] / t), 0), recipe.dims[0] - 1)
                    cj = min(max(int(p[1] / t), 0), recipe.dims[1] - 1)
                    assert (ci, cj) in cells

    def test_entry_centers_follow_origin(self):
        recipe = self.recipe()
        t = recipe.tile_uv_size
        area = map_triangle(((0.3, 0.4), (0.45, 0.4), (0.3, 0.55)), recipe, (3, 3))
        oi, oj = area.origin_cell
        for k, ((ci, cj), (gu, gv)) in enumerate(area.entries):
            iu, iv = divmod(k, 3)
            assert (ci, cj) == (oi + iu, oj + iv)
            assert gu == pytest.approx((ci + 0.5) * t)
            assert gv == pytest.approx((cj + 0.5) * t)


class TestLookups:
    def test_lookup_2d_and_3d(self):
        tiles = [WangSquareTile(0, (0, 0, 0, 0), [], 1.0)]
        recipe = generate_recipe_2d(tiles, (4, 4), seed=0)
        assert recipe_lookup_2d(recipe, (0, 0)) == 0
        assert recipe_lookup_2d(recipe, (3, 3)) == 0
        with pytest.raises(TilingError):
            recipe_lookup_2d(recipe, (4, 0))
        cubes = [WangCubeTile(0, (0,) * 6, [], 1.0)]
        r3 = generate_recipe_3d(cubes, (2, 2, 2), seed=0)
        assert recipe_lookup_3d(r3, (0, 0, 0)) == 0
        assert recipe_lookup_3d(r3, (1, 1, 1)) == 0
        with pytest.raises(TilingError):
            recipe_lookup_3d(r3, (0, 0, 2))
