"""Scene assembly: build every static structure once, then render.

A built scene owns, per content *type* (never per instance copy):
  * molecule atom arrays and their BVHs          (molecule level)
  * tile instance arrays and per-tile BVHs       (tile level)
  * tiling recipes                               (lookup tables)
  * per-mesh prisms, triangle BVHs, core grids,
    replication grids                            (scene level)

Mesh instances are only (mesh id + transform) rows plus derived world
bounds; all per-copy geometry is computed during traversal. Everything
is flattened into FlatScene numpy buffers for the compiled kernels --
the software analogue of uploading immutable buffers before the
interactive stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .bvh import Bvh, RepGrid, build_bvh, build_rep_grid, validate_bvh
from .coregrid import CoreGridMeta
from .geometry import (
    Aabb,
    Affine,
    SingularMatrixError,
    Vec3,
    affine_invert,
    vdot,
)
from .molecules import MoleculeType, build_atom_bvh, atom_bounds
from .render import uv_basis_inverse, uv_jacobian
from .shell import Prism, ProxyMesh, build_adaptive_prisms
from .tiling import (
    TilingRecipe2D,
    TilingRecipe3D,
    WangCubeTile,
    WangSquareTile,
    default_recipe_dims_2d,
    generate_recipe_2d,
    generate_recipe_3d,
    instance_tile_bounds,
    replication_area_dims,
    map_triangle,
    tile_content_bounds,
)


class SceneBuildError(ValueError):
    pass


@dataclass
class SceneMesh:
    id: int
    mesh: ProxyMesh
    shell: bool
    core: bool
    prisms: list[Prism] = field(default_factory=list)
    live_prisms: list[int] = field(default_factory=list)  # non-degenerate prism indices
    prism_bvh: Optional[Bvh] = None
    tri_bvh: Optional[Bvh] = None
    grid: Optional[CoreGridMeta] = None
    rep_dims: Tuple[int, int] = (1, 1)
    rep_grid: Optional[RepGrid] = None
    content_pad: float = 0.0
    shell_bounds: Optional[Aabb] = None  # union of padded prism AABBs, object space
    shell_virtual_atoms: int = 0
    core_virtual_atoms: int = 0


@dataclass
class SceneInstance:
    id: int
    mesh_id: int
    transform: Affine


@dataclass
class Scene:
    molecules: list[MoleculeType]
    atom_bvhs: list[Bvh]
    square_tiles: list[WangSquareTile]
    cube_tiles: list[WangCubeTile]
    sq_inst_bvhs: list[Bvh]
    cu_inst_bvhs: list[Bvh]
    recipe2d: Optional[TilingRecipe2D]
    recipe3d: Optional[TilingRecipe3D]
    meshes: list[SceneMesh]
    instances: list[SceneInstance]
    tile_uv_size: float
    sq_world_size: float
    cu_world_size: float
    eps_scene: float
    eps_interval: float
    world_bounds: Aabb
    flat: kernels.FlatScene
    sqi_tile: np.ndarray  # square-instance slot -> tile index (decode only)
    cui_tile: np.ndarray
    build_counts: dict = field(default_factory=lambda: {"scene": 0, "tiles": 0, "molecules": 0})
    defaults: dict = field(default_factory=dict)  # camera/render defaults from the scene file

    # -- queries ----------------------------------------------------------

    def molecule_index(self, mol_id: int) -> int:
        for i, m in enumerate(self.molecules):
            if m.id == mol_id:
                return i
        raise KeyError(f"unknown molecule id {mol_id}")

    def virtual_atom_count(self) -> int:
        """Total atoms the traversal can reach, computed from recipes and
        replication areas alone -- nothing is instanced."""
        total = 0
        for inst in self.instances:
            sm = self.meshes[inst.mesh_id]
            if sm.shell:
                total += sm.shell_virtual_atoms
            if sm.core:
                total += sm.core_virtual_atoms
        return total

    def geometry_bytes(self) -> dict:
        """Bytes of resident geometry by category (per content type).

        The mesh-instance table is scene configuration, not geometry;
        it is reported separately by build_report.
        """
        f = self.flat
        atoms = sum(a.nbytes for a in (f.atom_x, f.atom_y, f.atom_z, f.atom_r,
                                       f.mol_atom_start, f.mol_atom_count,
                                       f.mol_bvh_root, f.mol_color))
        tiles = sum(a.nbytes for a in (f.sq_inst_start, f.sq_inst_count, f.sq_bvh_root,
                                       f.sqi_mol, f.sqi_pos, f.sqi_rot, f.sqi_aabb, f.sq_box,
                                       f.cu_inst_start, f.cu_inst_count, f.cu_bvh_root,
                                       f.cui_mol, f.cui_pos, f.cui_rot, f.cui_aabb))
        recipes = f.rc2_cells.nbytes + f.rc3_cells.nbytes
        meshes = sum(a.nbytes for a in (f.me_tri_start, f.me_tri_count, f.tri_p, f.tri_n,
                                        f.tri_uv, f.tri_ju, f.tri_jv, f.tri_iuv,
                                        f.tri_ent_start, f.tri_ent_count,
                                        f.ent_cell_i, f.ent_cell_j, f.ent_gu, f.ent_gv,
                                        f.ent_tile, f.me_grid_min, f.me_grid_dims,
                                        f.me_grid_box, f.me_rep_nu, f.me_rep_nv))
        prisms = sum(a.nbytes for a in (f.me_prism_root, f.pr_tri, f.pr_verts,
                                        f.pr_planes, f.pr_nplanes, f.pr_aabb))
        bvhs = sum(a.nbytes for a in (f.bn_min, f.bn_max, f.bn_axis, f.bn_left,
                                      f.bn_right, f.bn_start, f.bn_count, f.bp_ids,
                                      f.me_tri_root, f.me_rep_root))
        total = atoms + tiles + recipes + meshes + prisms + bvhs
        return {
            "atoms": atoms,
            "tiles": tiles,
            "recipes": recipes,
            "meshes": meshes,
            "prisms": prisms,
            "bvhs": bvhs,
            "total": total,
        }

    def instance_table_bytes(self) -> int:
        f = self.flat
        return sum(a.nbytes for a in (f.in_mesh, f.in_M, f.in_Minv, f.in_shell,
                                      f.in_core, f.in_shell_waabb, f.in_core_waabb))

    def build_report(self) -> dict:
        return {
            "counts": {
                "molecules": len(self.molecules),
                "atoms": int(self.flat.atom_x.shape[0]),
                "square_tiles": len(self.square_tiles),
                "cube_tiles": len(self.cube_tiles),
                "meshes": len(self.meshes),
                "triangles": int(self.flat.tri_p.shape[0]),
                "prisms": int(self.flat.pr_tri.shape[0]),
                "prisms_degenerate": sum(
                    len(sm.prisms) - len(sm.live_prisms) for sm in self.meshes
                ),
                "mesh_instances": len(self.instances),
                "grid_boxes": sum(
                    sm.grid.box_count() if sm.grid else 0 for sm in self.meshes
                ),
            },
            "grid_dims": {sm.id: (sm.grid.dims if sm.grid else None) for sm in self.meshes},
            "geometry_bytes": self.geometry_bytes(),
            "instance_table_bytes": self.instance_table_bytes(),
            "virtual_atom_count": self.virtual_atom_count(),
            "build_counts": dict(self.build_counts),
        }

    # -- edits -------------------------------------------------------------

    def set_mesh_transform(self, instance_id: int, transform: Affine) -> None:
        """Move a mesh instance; rebuilds only the scene-level bounds
        (one scene-level rebuild, tile/molecule structures untouched)."""
        inv = affine_invert(transform)  # raises SingularMatrixError if degenerate
        inst = self.instances[instance_id]
        inst.transform = transform
        self.flat.in_M[instance_id, :9] = transform.linear
        self.flat.in_M[instance_id, 9:] = transform.translation
        self.flat.in_Minv[instance_id, :9] = inv.linear
        self.flat.in_Minv[instance_id, 9:] = inv.translation
        _refresh_instance_bounds(self)
        self.build_counts["scene"] += 1

    # -- validation ---------------------------------------------------------

    def validate(self) -> list[str]:
        problems: list[str] = []
        if self.recipe2d is not None:
            w, h = self.recipe2d.dims
            t = self.recipe2d.tile_uv_size
            if w * t < 1.0 or h * t < 1.0:
                problems.append(
                    f"recipe2d: dims {self.recipe2d.dims} x tile size {t} do not cover uv space"
                )
            problems += [f"recipe2d: {p}" for p in self.recipe2d.validate(self.square_tiles)]
        if self.recipe3d is not None:
            problems += [f"recipe3d: {p}" for p in self.recipe3d.validate(self.cube_tiles)]
        from scipy.spatial import ConvexHull, QhullError

        for sm in self.meshes:
            for pi in sm.live_prisms:
                prism = sm.prisms[pi]
                verts = np.array(prism.vertices())
                try:
                    hull = ConvexHull(verts)
                except QhullError:
                    problems.append(f"mesh {sm.id} prism {pi}: degenerate (flat) solid")
                    continue
                if len(set(hull.vertices.tolist())) != 6:
                    problems.append(
                        f"mesh {sm.id} prism {pi}: vertex inside the hull of the others"
                    )
        for mol, tree in zip(self.molecules, self.atom_bvhs):
            problems += [
                f"molecule {mol.id} atom bvh: {p}"
                for p in validate_bvh(tree, [atom_bounds(a) for a in mol.atoms])
            ]
        for tile, tree in zip(self.square_tiles, self.sq_inst_bvhs):
            bounds = [
                instance_tile_bounds(i, self.molecules[self.molecule_index(i.molecule_type_id)].aabb)
                for i in tile.instances
            ]
            problems += [f"square tile {tile.id} bvh: {p}" for p in validate_bvh(tree, bounds)]
        for tile, tree in zip(self.cube_tiles, self.cu_inst_bvhs):
            bounds = [
                instance_tile_bounds(i, self.molecules[self.molecule_index(i.molecule_type_id)].aabb)
                for i in tile.instances
            ]
            problems += [f"cube tile {tile.id} bvh: {p}" for p in validate_bvh(tree, bounds)]
        for sm in self.meshes:
            if sm.prism_bvh is not None:
                bounds = [sm.prisms[i].aabb().expand(sm.content_pad) for i in sm.live_prisms]
                problems += [f"mesh {sm.id} prism bvh: {p}" for p in validate_bvh(sm.prism_bvh, bounds)]
        return problems


# ---------------------------------------------------------------------------
# building


def build_scene(
    molecules: Sequence[MoleculeType],
    square_tiles: Sequence[WangSquareTile],
    cube_tiles: Sequence[WangCubeTile],
    meshes: Sequence[Tuple[ProxyMesh, bool, bool]],  # (mesh, shell, core)
    instances: Sequence[Tuple[int, Affine]],  # (mesh index, world transform)
    tile_uv_size: float,
    recipe_seed_2d: int = 1,
    recipe_seed_3d: int = 2,
    recipe_dims_2d: Optional[Tuple[int, int]] = None,
    recipe_cells_2d: Optional[np.ndarray] = None,
    defaults: Optional[dict] = None,
) -> Scene:
    molecules = list(molecules)
    ids = [m.id for m in molecules]
    if len(set(ids)) != len(ids):
        raise SceneBuildError("molecule ids must be unique")
    mol_by_id = {m.id: m for m in molecules}

    any_shell = any(shell for _, shell, _ in meshes)
    any_core = any(core for _, _, core in meshes)
    if any_shell and not square_tiles:
        raise SceneBuildError("shell-enabled meshes require a square tile set")
    if any_core and not cube_tiles:
        raise SceneBuildError("core-enabled meshes require a cube tile set")

    for tile in list(square_tiles) + list(cube_tiles):
        for inst in tile.instances:
            if inst.molecule_type_id not in mol_by_id:
                raise SceneBuildError(
                    f"tile {tile.id} references unknown molecule {inst.molecule_type_id}"
                )

    sq_world = square_tiles[0].world_size if square_tiles else 1.0
    for t in square_tiles:
        if t.world_size != sq_world:
            raise SceneBuildError("square tiles must share one world size")
    cu_world = cube_tiles[0].world_size if cube_tiles else 1.0
    for t in cube_tiles:
        if t.world_size != cu_world:
            raise SceneBuildError("cube tiles must share one world size")

    atom_bvhs = [build_atom_bvh(m) for m in molecules]
    sq_inst_bvhs = [
        build_bvh([instance_tile_bounds(i, mol_by_id[i.molecule_type_id].aabb) for i in t.instances])
        for t in square_tiles
    ]
    cu_inst_bvhs = [
        build_bvh([instance_tile_bounds(i, mol_by_id[i.molecule_type_id].aabb) for i in t.instances])
        for t in cube_tiles
    ]
    sq_box, cu_box = tile_content_bounds(square_tiles, cube_tiles, mol_by_id)

    scene_meshes: list[SceneMesh] = []
    for mid, (mesh, shell_on, core_on) in enumerate(meshes):
        sm = SceneMesh(mid, mesh, shell_on and bool(square_tiles), core_on and bool(cube_tiles))
        if sm.shell:
            sm.rep_dims = replication_area_dims(mesh, tile_uv_size)
        if sm.core:
            lo, hi = mesh.aabb().min, mesh.aabb().max
            sm.grid = CoreGridMeta.for_bounds(lo, hi, cu_world)
        scene_meshes.append(sm)

    recipe2d = None
    if square_tiles:
        # the recipe must cover uv space and the largest replication window
        dims2 = recipe_dims_2d or default_recipe_dims_2d(tile_uv_size)
        for sm in scene_meshes:
            if sm.shell:
                dims2 = (max(dims2[0], sm.rep_dims[0]), max(dims2[1], sm.rep_dims[1]))
        if recipe_cells_2d is not None:
            recipe2d = TilingRecipe2D(dims2, np.asarray(recipe_cells_2d, np.int32), tile_uv_size)
        else:
            recipe2d = generate_recipe_2d(square_tiles, dims2, recipe_seed_2d, tile_uv_size)

    recipe3d = None
    if cube_tiles and any(sm.core for sm in scene_meshes):
        gd = [sm.grid.dims for sm in scene_meshes if sm.grid is not None]
        dims3 = (
            max(d[0] for d in gd),
            max(d[1] for d in gd),
            max(d[2] for d in gd),
        )
        recipe3d = generate_recipe_3d(cube_tiles, dims3, recipe_seed_3d)

    for sm in scene_meshes:
        sm.tri_bvh = build_bvh(
            [Aabb.of_points(sm.mesh.tri_positions(t)) for t in range(len(sm.mesh.triangles))]
        )
        if sm.shell:
            sm.prisms = build_adaptive_prisms(sm.mesh, recipe2d, square_tiles, mol_by_id)
            sm.live_prisms = [i for i, p in enumerate(sm.prisms) if not p.is_degenerate()]
            # atoms of an accepted instance can protrude past the prism
            # solid (only the reference point is containment-tested), so
            # the prism gate boxes grow by the maximum content reach
            sm.content_pad = _shell_content_pad(sm.mesh, square_tiles, mol_by_id, tile_uv_size, sq_world)
            live_bounds = [sm.prisms[i].aabb().expand(sm.content_pad) for i in sm.live_prisms]
            sm.prism_bvh = build_bvh(live_bounds)
            if live_bounds:
                b = live_bounds[0]
                for extra in live_bounds[1:]:
                    b = b.union(extra)
                sm.shell_bounds = b
            if sq_box is not None:
                sm.rep_grid = build_rep_grid(
                    sm.rep_dims, sq_world, 0.0, cell_bounds=sq_box, margin=1e-9 * sq_world
                )

    scene = _flatten(
        molecules, atom_bvhs, list(square_tiles), list(cube_tiles),
        sq_inst_bvhs, cu_inst_bvhs, sq_box, cu_box,
        recipe2d, recipe3d, scene_meshes,
        [SceneInstance(i, m, t) for i, (m, t) in enumerate(instances)],
        tile_uv_size, sq_world, cu_world, defaults or {},
    )
    scene.build_counts["scene"] += 1
    scene.build_counts["tiles"] += 1
    scene.build_counts["molecules"] += 1
    return scene


def _shell_content_pad(mesh, square_tiles, mol_by_id, tile_uv_size, sq_world) -> float:
    """Upper bound on how far shell content can reach beyond the prism
    containing its reference point, in mesh object units."""
    reach = 0.0
    for tile in square_tiles:
        for inst in tile.instances:
            b = instance_tile_bounds(inst, mol_by_id[inst.molecule_type_id].aabb)
            p = inst.local_position
            for c in b.corners():
                d = math.sqrt(
                    (c[0] - p[0]) ** 2 + (c[1] - p[1]) ** 2 + (c[2] - p[2]) ** 2
                )
                reach = max(reach, d)
    scale = 1.0  # the normal column has unit length
    k = tile_uv_size / sq_world
    for t in range(len(mesh.triangles)):
        ju, jv = uv_jacobian(*mesh.tri_positions(t), *mesh.tri_uvs(t))
        scale = max(
            scale,
            math.sqrt(ju[0] ** 2 + ju[1] ** 2 + ju[2] ** 2) * k,
            math.sqrt(jv[0] ** 2 + jv[1] ** 2 + jv[2] ** 2) * k,
        )
    # columns are not orthogonal in general; sqrt(3) bounds the mix
    return reach * scale * math.sqrt(3.0) * 1.001


def _append_pool(pool: dict, tree: Bvh, prim_base: int) -> int:
    """Append one BVH into the shared node pool; returns its root index."""
    if tree.n_nodes == 0:
        return -1
    node_base = len(pool["axis"])
    prim_pool_base = len(pool["prims"])
    for i in range(tree.n_nodes):
        pool["min"].append(tree.node_min[i])
        pool["max"].append(tree.node_max[i])
        pool["axis"].append(int(tree.node_axis[i]))
        left = int(tree.node_left[i])
        right = int(tree.node_right[i])
        pool["left"].append(left + node_base if left >= 0 else -1)
        pool["right"].append(right + node_base if right >= 0 else -1)
        pool["start"].append(int(tree.node_start[i]) + prim_pool_base)
        pool["count"].append(int(tree.node_count[i]))
    pool["prims"].extend(int(p) + prim_base for p in tree.prim_ids)
    return node_base


def _flatten(
    molecules, atom_bvhs, square_tiles, cube_tiles, sq_inst_bvhs, cu_inst_bvhs,
    sq_box, cu_box, recipe2d, recipe3d, scene_meshes, instances,
    tile_uv_size, sq_world, cu_world, defaults,
) -> Scene:
    mol_index = {m.id: i for i, m in enumerate(molecules)}
    sq_index = {t.id: i for i, t in enumerate(square_tiles)}
    cu_index = {t.id: i for i, t in enumerate(cube_tiles)}

    pool = {"min": [], "max": [], "axis": [], "left": [], "right": [], "start": [],
            "count": [], "prims": []}

    # molecules
    n_mol = len(molecules)
    mol_atom_start = np.zeros(n_mol, np.int64)
    mol_atom_count = np.zeros(n_mol, np.int64)
    mol_bvh_root = np.full(n_mol, -1, np.int64)
    mol_color = np.zeros((n_mol, 3), np.float64)
    ax, ay, az, ar = [], [], [], []
    for i, m in enumerate(molecules):
        mol_atom_start[i] = len(ax)
        mol_atom_count[i] = m.atom_count
        mol_color[i] = m.color
        for a in m.atoms:
            ax.append(a.center[0])
            ay.append(a.center[1])
            az.append(a.center[2])
            ar.append(a.radius)
        mol_bvh_root[i] = _append_pool(pool, atom_bvhs[i], int(mol_atom_start[i]))

    def flatten_tiles(tiles, trees):
        n = len(tiles)
        start = np.zeros(n, np.int64)
        count = np.zeros(n, np.int64)
        root = np.full(n, -1, np.int64)
        mol, pos, rot, box, owner = [], [], [], [], []
        for i, t in enumerate(tiles):
            start[i] = len(mol)
            count[i] = len(t.instances)
            for inst in t.instances:
                mol.append(mol_index[inst.molecule_type_id])
                pos.append(inst.local_position)
                rot.append(inst.rotation_matrix())
                b = instance_tile_bounds(inst, molecules[mol[-1]].aabb)
                box.append((*b.min, *b.max))
                owner.append(i)
            root[i] = _append_pool(pool, trees[i], int(start[i]))
        return (
            start, count, root,
            np.array(mol, np.int64) if mol else np.zeros(0, np.int64),
            np.array(pos, np.float64).reshape(-1, 3),
            np.array(rot, np.float64).reshape(-1, 9),
            np.array(box, np.float64).reshape(-1, 6),
            np.array(owner, np.int64) if owner else np.zeros(0, np.int64),
        )

    (sq_start, sq_count, sq_root, sqi_mol, sqi_pos, sqi_rot, sqi_aabb, sqi_tile) = flatten_tiles(
        square_tiles, sq_inst_bvhs
    )
    (cu_start, cu_count, cu_root, cui_mol, cui_pos, cui_rot, cui_aabb, cui_tile) = flatten_tiles(
        cube_tiles, cu_inst_bvhs
    )
    sq_box_arr = (
        np.array([*sq_box.min, *sq_box.max], np.float64)
        if sq_box is not None
        else np.zeros(6, np.float64)
    )

    sq_atoms = np.array(
        [sum(molecules[mol_index[i.molecule_type_id]].atom_count for i in t.instances)
         for t in square_tiles],
        np.int64,
    ) if square_tiles else np.zeros(0, np.int64)
    cu_atoms = np.array(
        [sum(molecules[mol_index[i.molecule_type_id]].atom_count for i in t.instances)
         for t in cube_tiles],
        np.int64,
    ) if cube_tiles else np.zeros(0, np.int64)

    # recipes (cells remapped from tile ids to positional indices)
    if recipe2d is not None:
        rc2_cells = np.array([sq_index[int(c)] for c in recipe2d.cells], np.int64)
        rc2_w, rc2_h = recipe2d.dims
    else:
        rc2_cells = np.zeros(1, np.int64)
        rc2_w = rc2_h = 1
    if recipe3d is not None:
        rc3_cells = np.array([cu_index[int(c)] for c in recipe3d.cells], np.int64)
        rc3_w, rc3_h, rc3_d = recipe3d.dims
    else:
        rc3_cells = np.zeros(1, np.int64)
        rc3_w = rc3_h = rc3_d = 1

    # meshes
    n_mesh = len(scene_meshes)
    me_tri_start = np.zeros(n_mesh, np.int64)
    me_tri_count = np.zeros(n_mesh, np.int64)
    me_prism_root = np.full(n_mesh, -1, np.int64)
    me_tri_root = np.full(n_mesh, -1, np.int64)
    me_rep_root = np.full(n_mesh, -1, np.int64)
    me_rep_nu = np.ones(n_mesh, np.int64)
    me_rep_nv = np.ones(n_mesh, np.int64)
    me_grid_min = np.zeros((n_mesh, 3), np.float64)
    me_grid_dims = np.ones((n_mesh, 3), np.int64)
    me_grid_box = np.ones((n_mesh, 3), np.float64)

    tri_p, tri_n, tri_uv, tri_ju, tri_jv, tri_iuv = [], [], [], [], [], []
    tri_ent_start, tri_ent_count = [], []
    ent_ci, ent_cj, ent_gu, ent_gv, ent_tile = [], [], [], [], []
    pr_tri, pr_verts, pr_planes, pr_nplanes, pr_aabb = [], [], [], [], []

    for sm in scene_meshes:
        mesh = sm.mesh
        tri_base = len(tri_p)
        me_tri_start[sm.id] = tri_base
        me_tri_count[sm.id] = len(mesh.triangles)
        for t in range(len(mesh.triangles)):
            p0, p1, p2 = mesh.tri_positions(t)
            n0, n1, n2 = mesh.tri_normals(t)
            uv0, uv1, uv2 = mesh.tri_uvs(t)
            tri_p.append((*p0, *p1, *p2))
            tri_n.append((*n0, *n1, *n2))
            tri_uv.append((*uv0, *uv1, *uv2))
            if sm.shell:
                ju, jv = uv_jacobian(p0, p1, p2, uv0, uv1, uv2)
                iuv = uv_basis_inverse(uv0, uv1, uv2)
            else:
                ju, jv, iuv = (0.0, 0.0, 0.0), (0.0, 0.0, 0.0), (0.0, 0.0, 0.0, 0.0)
            tri_ju.append(ju)
            tri_jv.append(jv)
            tri_iuv.append(iuv)
            tri_ent_start.append(len(ent_ci))
            if sm.shell and recipe2d is not None:
                area = map_triangle((uv0, uv1, uv2), recipe2d, sm.rep_dims)
                tri_ent_count.append(len(area.entries))
                n_entry_atoms = 0
                for (ci, cj), (gu, gv) in area.entries:
                    tile_pos = sq_index[recipe2d.lookup(ci, cj)]
                    ent_ci.append(ci)
                    ent_cj.append(cj)
                    ent_gu.append(gu)
                    ent_gv.append(gv)
                    ent_tile.append(tile_pos)
                    n_entry_atoms += int(sq_atoms[tile_pos])
                if not sm.prisms[t].is_degenerate():
                    sm.shell_virtual_atoms += n_entry_atoms
            else:
                tri_ent_count.append(0)

        if sm.shell and sm.prism_bvh is not None:
            pr_base = len(pr_tri)
            for pi in sm.live_prisms:
                prism = sm.prisms[pi]
                pr_tri.append(tri_base + prism.triangle_index)
                pr_verts.append(tuple(c for v in prism.vertices() for c in v))
                planes = list(prism.planes)[:5]
                flat_planes = []
                for n, d in planes:
                    flat_planes.extend((n[0], n[1], n[2], d))
                while len(flat_planes) < 20:
                    flat_planes.append(0.0)
                pr_planes.append(tuple(flat_planes))
                pr_nplanes.append(len(planes))
                b = prism.aabb().expand(sm.content_pad)
                pr_aabb.append((*b.min, *b.max))
            me_prism_root[sm.id] = _append_pool(pool, sm.prism_bvh, pr_base)
        me_tri_root[sm.id] = _append_pool(pool, sm.tri_bvh, tri_base)
        if sm.rep_grid is not None:
            me_rep_root[sm.id] = _append_pool(pool, sm.rep_grid.tree, 0)
            me_rep_nu[sm.id] = sm.rep_dims[0]
            me_rep_nv[sm.id] = sm.rep_dims[1]
        if sm.grid is not None:
            me_grid_min[sm.id] = sm.grid.aabb_min
            me_grid_dims[sm.id] = sm.grid.dims
            me_grid_box[sm.id] = sm.grid.box_size
            nx, ny, nz = sm.grid.dims
            grid_cells = np.asarray(rc3_cells).reshape((rc3_w, rc3_h, rc3_d), order="F")
            sub = grid_cells[:nx, :ny, :nz].ravel()
            counts = np.bincount(sub, minlength=max(len(cube_tiles), 1))
            sm.core_virtual_atoms = int(np.dot(counts[: len(cu_atoms)], cu_atoms)) if len(cu_atoms) else 0

    n_inst = len(instances)
    in_mesh = np.zeros(n_inst, np.int64)
    in_M = np.zeros((n_inst, 12), np.float64)
    in_Minv = np.zeros((n_inst, 12), np.float64)
    in_shell = np.zeros(n_inst, np.uint8)
    in_core = np.zeros(n_inst, np.uint8)
    for inst in instances:
        in_mesh[inst.id] = inst.mesh_id
        in_M[inst.id, :9] = inst.transform.linear
        in_M[inst.id, 9:] = inst.transform.translation
        inv = affine_invert(inst.transform)
        in_Minv[inst.id, :9] = inv.linear
        in_Minv[inst.id, 9:] = inv.translation

    def arr2(v, w):
        a = np.array(v, np.float64)
        return a.reshape(-1, w) if a.size else np.zeros((0, w), np.float64)

    flat = kernels.FlatScene(
        mol_atom_start=mol_atom_start,
        mol_atom_count=mol_atom_count,
        mol_bvh_root=mol_bvh_root,
        mol_color=mol_color,
        atom_x=np.array(ax, np.float64),
        atom_y=np.array(ay, np.float64),
        atom_z=np.array(az, np.float64),
        atom_r=np.array(ar, np.float64),
        sq_inst_start=sq_start,
        sq_inst_count=sq_count,
        sq_bvh_root=sq_root,
        sqi_mol=sqi_mol,
        sqi_pos=sqi_pos,
        sqi_rot=sqi_rot,
        sqi_aabb=sqi_aabb,
        sq_box=sq_box_arr,
        cu_inst_start=cu_start,
        cu_inst_count=cu_count,
        cu_bvh_root=cu_root,
        cui_mol=cui_mol,
        cui_pos=cui_pos,
        cui_rot=cui_rot,
        cui_aabb=cui_aabb,
        rc2_cells=rc2_cells,
        rc2_w=int(rc2_w),
        rc2_h=int(rc2_h),
        tile_uv=float(tile_uv_size),
        sq_size=float(sq_world),
        rc3_cells=rc3_cells,
        rc3_w=int(rc3_w),
        rc3_h=int(rc3_h),
        rc3_d=int(rc3_d),
        me_tri_start=me_tri_start,
        me_tri_count=me_tri_count,
        tri_p=arr2(tri_p, 9),
        tri_n=arr2(tri_n, 9),
        tri_uv=arr2(tri_uv, 6),
        tri_ju=arr2(tri_ju, 3),
        tri_jv=arr2(tri_jv, 3),
        tri_iuv=arr2(tri_iuv, 4),
        tri_ent_start=np.array(tri_ent_start, np.int64),
        tri_ent_count=np.array(tri_ent_count, np.int64),
        ent_cell_i=np.array(ent_ci, np.int64),
        ent_cell_j=np.array(ent_cj, np.int64),
        ent_gu=np.array(ent_gu, np.float64),
        ent_gv=np.array(ent_gv, np.float64),
        ent_tile=np.array(ent_tile, np.int64),
        me_prism_root=me_prism_root,
        pr_tri=np.array(pr_tri, np.int64),
        pr_verts=arr2(pr_verts, 18),
        pr_planes=arr2(pr_planes, 20),
        pr_nplanes=np.array(pr_nplanes, np.int64),
        pr_aabb=arr2(pr_aabb, 6),
        me_tri_root=me_tri_root,
        me_grid_min=me_grid_min,
        me_grid_dims=me_grid_dims,
        me_grid_box=me_grid_box,
        me_rep_root=me_rep_root,
        me_rep_nu=me_rep_nu,
        me_rep_nv=me_rep_nv,
        bn_min=arr2(pool["min"], 3),
        bn_max=arr2(pool["max"], 3),
        bn_axis=np.array(pool["axis"], np.int64),
        bn_left=np.array(pool["left"], np.int64),
        bn_right=np.array(pool["right"], np.int64),
        bn_start=np.array(pool["start"], np.int64),
        bn_count=np.array(pool["count"], np.int64),
        bp_ids=np.array(pool["prims"], np.int64),
        in_mesh=in_mesh,
        in_M=in_M,
        in_Minv=in_Minv,
        in_shell=in_shell,
        in_core=in_core,
        in_shell_waabb=np.zeros((n_inst, 6), np.float64),
        in_core_waabb=np.zeros((n_inst, 6), np.float64),
        eps_scene=0.0,
        eps_interval=0.0,
    )

    scene = Scene(
        molecules=molecules,
        atom_bvhs=atom_bvhs,
        square_tiles=square_tiles,
        cube_tiles=cube_tiles,
        sq_inst_bvhs=sq_inst_bvhs,
        cu_inst_bvhs=cu_inst_bvhs,
        recipe2d=recipe2d,
        recipe3d=recipe3d,
        meshes=scene_meshes,
        instances=instances,
        tile_uv_size=tile_uv_size,
        sq_world_size=sq_world,
        cu_world_size=cu_world,
        eps_scene=0.0,
        eps_interval=0.0,
        world_bounds=Aabb((0, 0, 0), (1, 1, 1)),
        flat=flat,
        sqi_tile=sqi_tile,
        cui_tile=cui_tile,
        defaults=defaults,
    )
    _refresh_instance_bounds(scene)
    world = None
    for inst in scene.instances:
        sm = scene.meshes[inst.mesh_id]
        for box in (sm.shell_bounds, Aabb(sm.grid.aabb_min, sm.grid.aabb_max()) if sm.grid else None,
                    sm.mesh.aabb()):
            if box is None:
                continue
            w = Aabb.of_points([inst.transform.apply_point(c) for c in box.corners()])
            world = w if world is None else world.union(w)
    if world is None:
        world = Aabb((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
    diag = world.diagonal() or 1.0
    scene.world_bounds = world
    scene.eps_scene = 1e-6 * diag
    scene.eps_interval = 1e-4 * diag
    scene.flat = scene.flat._replace(eps_scene=scene.eps_scene, eps_interval=scene.eps_interval)
    return scene


def _refresh_instance_bounds(scene: Scene) -> None:
    """Derive per-instance world AABBs (the scene-level rebuild step)."""
    f = scene.flat
    for inst in scene.instances:
        sm = scene.meshes[inst.mesh_id]
        i = inst.id
        if sm.shell and sm.shell_bounds is not None:
            w = Aabb.of_points(
                [inst.transform.apply_point(c) for c in sm.shell_bounds.corners()]
            )
            f.in_shell[i] = 1
            f.in_shell_waabb[i, :3] = w.min
            f.in_shell_waabb[i, 3:] = w.max
        else:
            f.in_shell[i] = 0
        if sm.core and sm.grid is not None:
            box = Aabb(sm.grid.aabb_min, sm.grid.aabb_max())
            w = Aabb.of_points([inst.transform.apply_point(c) for c in box.corners()])
            f.in_core[i] = 1
            f.in_core_waabb[i, :3] = w.min
            f.in_core_waabb[i, 3:] = w.max
        else:
            f.in_core[i] = 0
