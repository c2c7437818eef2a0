"""Shared scene-construction helpers for the test suite."""

from __future__ import annotations

import math

import numpy as np

from tileray.geometry import Affine
from tileray.molecules import Atom, MoleculeType
from tileray.scene import build_scene
from tileray.shell import ProxyMesh
from tileray.tiling import MoleculeInstance, WangCubeTile, WangSquareTile


def flat_quad_mesh(size: float = 10.0) -> ProxyMesh:
    """Quad in the xz plane at y = 0, CCW from +y, uv covering [0,1]^2."""
    positions = [(0, 0, 0), (size, 0, 0), (size, 0, size), (0, 0, size)]
    normals = [(0.0, 1.0, 0.0)] * 4
    uvs = [(0, 0), (1, 0), (1, 1), (0, 1)]
    return ProxyMesh(positions, normals, uvs, [(0, 2, 1), (0, 3, 2)])


def closed_box_mesh(extent: float = 6.0, center=(0.0, 0.0, 0.0)) -> ProxyMesh:
    from tileray.demoscene import box_mesh

    return box_mesh(extent=extent, center=center)


def single_atom_molecule(radius: float = 1.0, mol_id: int = 0) -> MoleculeType:
    return MoleculeType(id=mol_id, name="one", atoms=[Atom((0.0, 0.0, 0.0), radius, "C")],
                        color=(1.0, 0.3, 0.2))


def blob_molecule(n: int, seed: int, mol_id: int = 0, spread: float = 2.0) -> MoleculeType:
    rng = np.random.RandomState(seed)
    atoms = []
    for _ in range(n):
        c = rng.uniform(-spread, spread, 3)
        atoms.append(Atom((float(c[0]), float(c[1]), float(c[2])),
                          float(rng.uniform(0.6, 1.6)), "C"))
    return MoleculeType(id=mol_id, name=f"blob{seed}", atoms=atoms)


def quad_shell_scene(
    molecule: MoleculeType = None,
    tile_world: float = 2.0,
    tile_uv: float = 0.25,
    local_y: float = 0.5,
    instances=None,
):
    """One flat quad carrying a single-tile shell; the simplest scene
    whose virtual content can be checked by hand."""
    mol = molecule or single_atom_molecule()
    sq = WangSquareTile(0, (0, 0, 0, 0), [MoleculeInstance(0, (0.0, local_y, 0.0))], tile_world)
    cu = WangCubeTile(0, (0, 0, 0, 0, 0, 0), [MoleculeInstance(0, (0.0, 0.0, 0.0))], tile_world)
    return build_scene(
        molecules=[mol],
        square_tiles=[sq],
        cube_tiles=[cu],
        meshes=[(flat_quad_mesh(), True, False)],
        instances=instances or [(0, Affine.identity())],
        tile_uv_size=tile_uv,
    )


def box_core_scene(
    molecule: MoleculeType = None,
    extent: float = 6.0,
    cube_world: float = 2.0,
    instances=None,
    inst_positions=None,
):
    """Closed box filled with one cube tile of soluble content."""
    mol = molecule or single_atom_molecule()
    cube_instances = [MoleculeInstance(0, p) for p in (inst_positions or [(0.0, 0.0, 0.0)])]
    cu = WangCubeTile(0, (0, 0, 0, 0, 0, 0), cube_instances, cube_world)
    return build_scene(
        molecules=[mol],
        square_tiles=[],
        cube_tiles=[cu],
        meshes=[(closed_box_mesh(extent=extent), False, True)],
        instances=instances or [(0, Affine.identity())],
        tile_uv_size=0.25,
    )


def complete_square_set(world_size: float = 2.0, colors: int = 2):
    """One tile per (N, E, S, W) color combination (empty content)."""
    tiles = []
    tid = 0
    for n in range(colors):
        for e in range(colors):
            for s in range(colors):
                for w in range(colors):
                    tiles.append(WangSquareTile(tid, (n, e, s, w), [], world_size))
                    tid += 1
    return tiles


def complete_cube_set(world_size: float = 2.0, colors: int = 2):
    """One cube per face-color combination (64 tiles for 2 colors)."""
    tiles = []
    tid = 0
    for xp in range(colors):
        for xm in range(colors):
            for yp in range(colors):
                for ym in range(colors):
                    for zp in range(colors):
                        for zm in range(colors):
                            tiles.append(
                                WangCubeTile(tid, (xp, xm, yp, ym, zp, zm), [], world_size)
                            )
                            tid += 1
    return tiles
