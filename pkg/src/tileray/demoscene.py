"""Deterministic demo scene generation.

Builds a small self-contained molecular scene on disk: blob-style PDB
molecules, a spherified-cube proxy mesh with a per-face uv atlas,
square/cube tile sets, and the scene document wiring them together.
The same generator parameterizes the test fixtures (one mesh instance
or a grid of many).
"""

from __future__ import annotations

import json
import math
import os
from typing import Optional, Sequence

import numpy as np

from .molecules import parse_pdb
from .shell import ProxyMesh

_FACES = [
    # (normal, tangent_a, tangent_b) with ta x tb = n (outward CCW)
    ((1, 0, 0), (0, 0, -1), (0, 1, 0)),
    ((-1, 0, 0), (0, 0, 1), (0, 1, 0)),
    ((0, 1, 0), (1, 0, 0), (0, 0, -1)),
    ((0, -1, 0), (1, 0, 0), (0, 0, 1)),
    ((0, 0, 1), (1, 0, 0), (0, 1, 0)),
    ((0, 0, -1), (-1, 0, 0), (0, 1, 0)),
]

_UV_GUTTER = 0.02


def sphere_mesh(radius: float = 20.0, patches: int = 2) -> ProxyMesh:
    """Spherified cube: 6 faces x patches^2 quads x 2 triangles.

    Each face maps to its own patch of the uv atlas (3 x 2 layout with a
    small gutter), so uvs stay in [0,1] with no seam wrapping.
    """
    positions = []
    normals = []
    uvs = []
    triangles = []
    for fi, (n, ta, tb) in enumerate(_FACES):
        col, row = fi % 3, fi // 3
        base = len(positions)
        steps = patches + 1
        for ia in range(steps):
            for ib in range(steps):
                a = -1.0 + 2.0 * ia / patches
                b = -1.0 + 2.0 * ib / patches
                p = tuple(n[k] + a * ta[k] + b * tb[k] for k in range(3))
                ln = math.sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2])
                unit = (p[0] / ln, p[1] / ln, p[2] / ln)
                positions.append((unit[0] * radius, unit[1] * radius, unit[2] * radius))
                normals.append(unit)
                fu = _UV_GUTTER + (1.0 - 2.0 * _UV_GUTTER) * ia / patches
                fv = _UV_GUTTER + (1.0 - 2.0 * _UV_GUTTER) * ib / patches
                uvs.append(((col + fu) / 3.0, (row + fv) / 2.0))
        for ia in range(patches):
            for ib in range(patches):
                v00 = base + ia * steps + ib
                v10 = v00 + steps
                v01 = v00 + 1
                v11 = v10 + 1
                triangles.append((v00, v10, v11))
                triangles.append((v00, v11, v01))
    return ProxyMesh(positions, normals, uvs, triangles)


def box_mesh(extent: float = 10.0, center=(0.0, 0.0, 0.0)) -> ProxyMesh:
    """Closed axis-aligned box (outward CCW); uvs are placeholders, so
    this mesh is for core-only scenes."""
    h = extent * 0.5
    positions = []
    normals = []
    uvs = []
    triangles = []
    for n, ta, tb in _FACES:
        base = len(positions)
        for a, b in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
            p = tuple(center[k] + h * (n[k] + a * ta[k] + b * tb[k]) for k in range(3))
            positions.append(p)
            ln = 1.0
            normals.append((float(n[0]), float(n[1]), float(n[2])))
            uvs.append((0.0, 0.0))
        triangles.append((base, base + 1, base + 2))
        triangles.append((base, base + 2, base + 3))
    return ProxyMesh(positions, normals, uvs, triangles)


def mesh_to_obj(mesh: ProxyMesh) -> str:
    lines = []
    for p in mesh.positions:
        lines.append(f"v {p[0]!r} {p[1]!r} {p[2]!r}")
    for u, v in mesh.uvs:
        lines.append(f"vt {u!r} {v!r}")
    for n in mesh.normals:
        lines.append(f"vn {n[0]!r} {n[1]!r} {n[2]!r}")
    for a, b, c in mesh.triangles:
        lines.append(f"f {a+1}/{a+1}/{a+1} {b+1}/{b+1}/{b+1} {c+1}/{c+1}/{c+1}")
    return "\n".join(lines) + "\n"


_ELEMENTS = ["C", "C", "C", "N", "O", "S", "H", "P"]


def blob_pdb(n_atoms: int, radius: float, seed: int, name: str = "MOL") -> str:
    """Synthetic PDB: a blob of atoms inside a ball."""
    rng = np.random.RandomState(seed)
    lines = []
    for i in range(n_atoms):
        while True:
            p = rng.uniform(-radius, radius, 3)
            if float(p @ p) <= radius * radius:
                break
        el = _ELEMENTS[int(rng.randint(len(_ELEMENTS)))]
        atom_name = f"{el}{(i % 99) + 1}"
        lines.append(
            f"ATOM  {i + 1:5d} {atom_name:<4s} {name:<3s} A{1:4d}    "
            f"{p[0]:8.3f}{p[1]:8.3f}{p[2]:8.3f}{1.0:6.2f}{0.0:6.2f}          {el:>2s}"
        )
    lines.append("END")
    return "\n".join(lines) + "\n"


def demo_square_tileset(
    molecules: Sequence,  # parsed MoleculeType (for extents)
    world_size: float,
    seed: int,
    per_tile: int = 4,
    edge_straddle: bool = True,
) -> dict:
    """Four square tiles whose (W, S) colors cover {0,1}^2, so scanline
    tiling never dead-ends; content is placed on a jittered grid with
    optional edge-straddling instances."""
    rng = np.random.RandomState(seed)
    s = world_size
    tiles = []
    combos = [(0, 0), (0, 1), (1, 0), (1, 1)]
    spots = [(-s / 3, -s / 3), (-s / 3, s / 3), (s / 3, -s / 3), (s / 3, s / 3), (0.0, 0.0)]
    for tid, (w, so) in enumerate(combos):
        instances = []
        order = rng.permutation(len(spots))
        for k in range(per_tile):
            mol = molecules[(tid + k) % len(molecules)]
            gx, gz = spots[order[k % len(spots)]]
            jx = float(rng.uniform(-s * 0.05, s * 0.05))
            jz = float(rng.uniform(-s * 0.05, s * 0.05))
            x, z = gx + jx, gz + jz
            if edge_straddle and k == per_tile - 1:
                x = s / 2  # center sits on the tile edge
            y = float(rng.uniform(-0.25, 0.45)) * mol.height
            angle = float(rng.uniform(0.0, 2.0 * math.pi))
            quat = (math.cos(angle / 2), 0.0, math.sin(angle / 2), 0.0)
            instances.append(
                {"molecule": mol.id, "position": [x, y, z], "rotation": list(quat)}
            )
        tiles.append(
            {
                "id": tid,
                "edge_colors": [1 - so, 1 - w, so, w],  # (N, E, S, W)
                "instances": instances,
            }
        )
    return {"type": "square", "world_size": world_size, "tiles": tiles}


def demo_cube_tileset(
    molecules: Sequence,
    world_size: float,
    seed: int,
    per_tile: int = 3,
) -> dict:
    """Four single-color cube tiles; instances stay strictly inside the
    cube (margin = half the molecule AABB diagonal) so renderers find
    every placement from its home box."""
    rng = np.random.RandomState(seed)
    s = world_size
    tiles = []
    for tid in range(4):
        instances = []
        for k in range(per_tile):
            mol = molecules[(tid * per_tile + k) % len(molecules)]
            # rotations are about y, so the horizontal reach is the xz
            # half-diagonal and the vertical reach the y half-extent
            ex = mol.aabb.max[0] - mol.aabb.min[0]
            ey = mol.aabb.max[1] - mol.aabb.min[1]
            ez = mol.aabb.max[2] - mol.aabb.min[2]
            lim_xz = s / 2 - math.hypot(ex, ez) * 0.5
            lim_y = s / 2 - ey * 0.5
            if lim_xz <= 0 or lim_y <= 0:
                raise ValueError(f"cube tiles too small for molecule {mol.id}")
            pos = (
                float(rng.uniform(-lim_xz, lim_xz)),
                float(rng.uniform(-lim_y, lim_y)),
                float(rng.uniform(-lim_xz, lim_xz)),
            )
            angle = float(rng.uniform(0.0, 2.0 * math.pi))
            quat = (math.cos(angle / 2), 0.0, math.sin(angle / 2), 0.0)
            instances.append(
                {
                    "molecule": mol.id,
                    "position": [float(pos[0]), float(pos[1]), float(pos[2])],
                    "rotation": list(quat),
                }
            )
        tiles.append({"id": tid, "face_colors": [0, 0, 0, 0, 0, 0], "instances": instances})
    return {"type": "cube", "world_size": world_size, "tiles": tiles}


def write_demo_scene(
    directory,
    mesh_instances: int = 1,
    radius: float = 20.0,
    patches: int = 2,
    tile_uv: float = 0.06,
    sq_size: float = 6.0,
    cu_size: float = 12.0,
    atom_counts: Sequence[int] = (50, 30, 12),
    per_square: int = 4,
    per_cube: int = 3,
    seed: int = 7,
    width: int = 256,
    height: int = 256,
    shell: bool = True,
    core: bool = True,
    clip: Optional[dict] = None,
) -> str:
    """Write a complete scene into ``directory``; returns the scene path.

    With mesh_instances > 1 the same proxy mesh is laid out on a square
    grid of translated instances (identical per-type geometry).
    """
    os.makedirs(directory, exist_ok=True)
    colors = [(0.85, 0.25, 0.2), (0.2, 0.55, 0.85), (0.9, 0.8, 0.25)]
    mol_docs = []
    parsed = []
    for i, n_atoms in enumerate(atom_counts):
        pdb = blob_pdb(n_atoms, radius=1.9 - 0.4 * i, seed=seed + 11 * i, name=f"M{i}")
        pdb_path = os.path.join(directory, f"mol{i}.pdb")
        with open(pdb_path, "w", encoding="utf-8") as fh:
            fh.write(pdb)
        mol = parse_pdb(pdb, mol_id=i, name=f"blob{i}")
        parsed.append(mol)
        mol_docs.append(
            {
                "id": i,
                "name": f"blob{i}",
                "path": f"mol{i}.pdb",
                "color": list(colors[i % len(colors)]),
            }
        )

    mesh = sphere_mesh(radius=radius, patches=patches)
    with open(os.path.join(directory, "proxy.obj"), "w", encoding="utf-8") as fh:
        fh.write(mesh_to_obj(mesh))

    squares = demo_square_tileset(parsed, sq_size, seed + 101, per_tile=per_square)
    with open(os.path.join(directory, "squares.json"), "w", encoding="utf-8") as fh:
        json.dump(squares, fh, indent=1)
    cubes = demo_cube_tileset(parsed, cu_size, seed + 202, per_tile=per_cube)
    with open(os.path.join(directory, "cubes.json"), "w", encoding="utf-8") as fh:
        json.dump(cubes, fh, indent=1)

    side = max(1, math.ceil(math.sqrt(mesh_instances)))
    spacing = radius * 2.6
    instances = []
    for k in range(mesh_instances):
        gx, gz = k % side, k // side
        instances.append(
            {
                "translation": [
                    (gx - (side - 1) / 2) * spacing,
                    0.0,
                    (gz - (side - 1) / 2) * spacing,
                ]
            }
        )

    extent = max(1.0, (side - 1)) * spacing if mesh_instances > 1 else 0.0
    cam_dist = (extent * 0.5 + radius) * 2.9
    scene = {
        "schema_version": 1,
        "molecules": mol_docs,
        "square_tiles": "squares.json",
        "cube_tiles": "cubes.json",
        "tile_uv_size": tile_uv,
        "recipe_2d": {"seed": seed + 301},
        "recipe_3d": {"seed": seed + 302},
        "meshes": [
            {"path": "proxy.obj", "shell": shell, "core": core, "instances": instances}
        ],
        "camera": {
            "position": [cam_dist * 0.33, cam_dist * 0.28, cam_dist * 0.9],
            "forward": [-0.33, -0.28, -0.9],
            "up": [0, 1, 0],
            "fov": 0.8,
            "width": width,
            "height": height,
        },
        "render": {
            "background": [0.04, 0.045, 0.07],
            "use_replas": True,
        },
    }
    if clip is not None:
        scene["render"]["clip"] = clip
    path = os.path.join(directory, "scene.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scene, fh, indent=1)
    return path


def write_grid_scene(directory, grid: int = 8, cube_atoms: int = 100, cube_size: float = 10.0) -> str:
    """Core-only scene with an exact grid x grid x grid core grid and one
    cube tile whose content has ``cube_atoms`` atoms."""
    os.makedirs(directory, exist_ok=True)
    pdb = blob_pdb(cube_atoms, radius=2.5, seed=3)
    with open(os.path.join(directory, "mol0.pdb"), "w", encoding="utf-8") as fh:
        fh.write(pdb)
    mesh = box_mesh(extent=grid * cube_size)
    with open(os.path.join(directory, "box.obj"), "w", encoding="utf-8") as fh:
        fh.write(mesh_to_obj(mesh))
    cubes = {
        "type": "cube",
        "world_size": cube_size,
        "tiles": [
            {
                "id": 0,
                "face_colors": [0, 0, 0, 0, 0, 0],
                "instances": [{"molecule": 0, "position": [0.0, 0.0, 0.0]}],
            }
        ],
    }
    with open(os.path.join(directory, "cubes.json"), "w", encoding="utf-8") as fh:
        json.dump(cubes, fh)
    scene = {
        "schema_version": 1,
        "molecules": [{"id": 0, "name": "blob", "path": "mol0.pdb", "color": [0.4, 0.7, 0.4]}],
        "cube_tiles": "cubes.json",
        "meshes": [{"path": "box.obj", "shell": False, "core": True, "instances": [{}]}],
    }
    path = os.path.join(directory, "scene.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scene, fh)
    return path
