"""Scene, tile-set, and recipe documents (versioned JSON schemas).

A scene document references molecule PDB files, square/cube tile sets,
proxy meshes with world transforms and shell/core switches, plus camera
and render defaults. Loading builds the full scene: molecules parsed,
recipes generated, prisms built, every hierarchy constructed.
"""

from __future__ import annotations

import json
import math
import os
from typing import Optional

import numpy as np

from .geometry import Affine, vnormalize
from .meshio import load_obj
from .molecules import MoleculeType, parse_pdb
from .render import Camera, ClipPlane, RenderConfig
from .scene import Scene, SceneBuildError, build_scene
from .tiling import MoleculeInstance, WangCubeTile, WangSquareTile

SCHEMA_VERSION = 1


class SceneFormatError(ValueError):
    """Schema violation; the message carries the offending field path."""


def _need(obj: dict, key: str, path: str, kind=None):
    if key not in obj:
        raise SceneFormatError(f"{path}.{key}: required field missing")
    value = obj[key]
    if kind is not None and not isinstance(value, kind):
        raise SceneFormatError(f"{path}.{key}: expected {kind}, got {type(value).__name__}")
    return value


def _vec3(value, path: str):
    if not (isinstance(value, (list, tuple)) and len(value) == 3):
        raise SceneFormatError(f"{path}: expected a 3-vector")
    return tuple(float(v) for v in value)


def _instances(items, path: str) -> list[MoleculeInstance]:
    out = []
    for k, item in enumerate(items):
        p = f"{path}[{k}]"
        mol = _need(item, "molecule", p, int)
        pos = _vec3(_need(item, "position", p), f"{p}.position")
        rot = item.get("rotation", [1.0, 0.0, 0.0, 0.0])
        if len(rot) != 4:
            raise SceneFormatError(f"{p}.rotation: expected a quaternion [w, x, y, z]")
        out.append(MoleculeInstance(mol, pos, tuple(float(v) for v in rot)))
    return out


def load_tileset(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return parse_tileset(doc, path=str(path))


def parse_tileset(doc: dict, path: str = "tileset") -> dict:
    kind = _need(doc, "type", path, str)
    if kind not in ("square", "cube"):
        raise SceneFormatError(f"{path}.type: expected 'square' or 'cube'")
    world = float(_need(doc, "world_size", path, (int, float)))
    tiles = []
    for i, td in enumerate(_need(doc, "tiles", path, list)):
        p = f"{path}.tiles[{i}]"
        tid = _need(td, "id", p, int)
        insts = _instances(td.get("instances", []), f"{p}.instances")
        if kind == "square":
            colors = _need(td, "edge_colors", p, list)
            if len(colors) != 4:
                raise SceneFormatError(f"{p}.edge_colors: expected 4 colors (N, E, S, W)")
            tiles.append(WangSquareTile(tid, tuple(int(c) for c in colors), insts, world))
        else:
            colors = _need(td, "face_colors", p, list)
            if len(colors) != 6:
                raise SceneFormatError(f"{p}.face_colors: expected 6 colors (+x,-x,+y,-y,+z,-z)")
            tiles.append(WangCubeTile(tid, tuple(int(c) for c in colors), insts, world))
    return {"type": kind, "world_size": world, "tiles": tiles}


def write_recipe(path, recipe) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "dims": list(recipe.dims),
        "cells": [int(c) for c in recipe.cells],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_scene(path) -> Scene:
    """Parse and fully build a scene: after this, everything is
    immutable apart from per-instance transforms."""
    scene_dir = os.path.dirname(os.path.abspath(path))

    def resolve(rel):
        return rel if os.path.isabs(rel) else os.path.join(scene_dir, rel)

    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise SceneFormatError(f"scene file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"scene: invalid JSON ({exc})") from None

    version = _need(doc, "schema_version", "scene", int)
    if version != SCHEMA_VERSION:
        raise SceneFormatError(f"scene.schema_version: unsupported version {version}")

    molecules: list[MoleculeType] = []
    for i, md in enumerate(_need(doc, "molecules", "scene", list)):
        p = f"scene.molecules[{i}]"
        mol_path = resolve(_need(md, "path", p, str))
        if not os.path.exists(mol_path):
            raise SceneFormatError(f"{p}.path: file not found: {mol_path}")
        with open(mol_path, "r", encoding="utf-8") as fh:
            mol = parse_pdb(fh.read(), mol_id=_need(md, "id", p, int), name=md.get("name", ""))
        if "color" in md:
            mol.color = _vec3(md["color"], f"{p}.color")
        if "up" in md:
            mol.up_vector = vnormalize(_vec3(md["up"], f"{p}.up"))
        molecules.append(mol)

    def tileset_field(key):
        if key not in doc:
            return None
        value = doc[key]
        if isinstance(value, str):
            ts_path = resolve(value)
            if not os.path.exists(ts_path):
                raise SceneFormatError(f"scene.{key}: file not found: {ts_path}")
            return load_tileset(ts_path)
        if isinstance(value, dict):
            return parse_tileset(value, path=f"scene.{key}")
        raise SceneFormatError(f"scene.{key}: expected a path or an inline tile set")

    squares = tileset_field("square_tiles")
    cubes = tileset_field("cube_tiles")
    if squares and squares["type"] != "square":
        raise SceneFormatError("scene.square_tiles: tile set has type 'cube'")
    if cubes and cubes["type"] != "cube":
        raise SceneFormatError("scene.cube_tiles: tile set has type 'square'")

    meshes = []
    instances = []
    for i, mdoc in enumerate(_need(doc, "meshes", "scene", list)):
        p = f"scene.meshes[{i}]"
        mesh_path = resolve(_need(mdoc, "path", p, str))
        if not os.path.exists(mesh_path):
            raise SceneFormatError(f"{p}.path: file not found: {mesh_path}")
        shell = bool(mdoc.get("shell", True))
        core = bool(mdoc.get("core", True))
        mesh = load_obj(mesh_path, require_uv=shell)
        meshes.append((mesh, shell, core))
        for k, idoc in enumerate(mdoc.get("instances", [{}])):
            ip = f"{p}.instances[{k}]"
            linear = idoc.get("linear", [1, 0, 0, 0, 1, 0, 0, 0, 1])
            flat = [float(v) for row in linear for v in row] if isinstance(linear[0], list) else [
                float(v) for v in linear
            ]
            if len(flat) != 9:
                raise SceneFormatError(f"{ip}.linear: expected a 3x3 matrix")
            translation = _vec3(idoc.get("translation", [0, 0, 0]), f"{ip}.translation")
            instances.append((i, Affine(tuple(flat), translation)))

    tile_uv = float(doc.get("tile_uv_size", 0.1))
    r2 = doc.get("recipe_2d", {})
    r3 = doc.get("recipe_3d", {})
    dims2 = tuple(r2["dims"]) if "dims" in r2 else None
    cells2 = np.asarray(r2["cells"], np.int32) if "cells" in r2 else None
    if cells2 is not None and dims2 is None:
        raise SceneFormatError("scene.recipe_2d.cells: explicit cells require dims")
    if cells2 is not None and len(cells2) != dims2[0] * dims2[1]:
        raise SceneFormatError("scene.recipe_2d.cells: length does not match dims")

    defaults = {
        "camera": doc.get("camera", {}),
        "render": doc.get("render", {}),
    }
    try:
        return build_scene(
            molecules=molecules,
            square_tiles=squares["tiles"] if squares else [],
            cube_tiles=cubes["tiles"] if cubes else [],
            meshes=meshes,
            instances=instances,
            tile_uv_size=tile_uv,
            recipe_seed_2d=int(r2.get("seed", 1)),
            recipe_seed_3d=int(r3.get("seed", 2)),
            recipe_dims_2d=dims2,
            recipe_cells_2d=cells2,
            defaults=defaults,
        )
    except SceneBuildError as exc:
        raise SceneFormatError(f"scene: {exc}") from None


def camera_from_defaults(scene: Scene, **overrides) -> Camera:
    """Camera from the scene document, auto-framed when absent."""
    cd = dict(scene.defaults.get("camera", {}))
    cd.update({k: v for k, v in overrides.items() if v is not None})
    if "position" not in cd or "forward" not in cd:
        center = scene.world_bounds.center()
        diag = scene.world_bounds.diagonal() or 1.0
        direction = vnormalize((0.35, 0.25, 1.0))
        position = (
            center[0] + direction[0] * diag * 1.1,
            center[1] + direction[1] * diag * 1.1,
            center[2] + direction[2] * diag * 1.1,
        )
        cd.setdefault("position", position)
        cd.setdefault(
            "forward",
            (center[0] - position[0], center[1] - position[1], center[2] - position[2]),
        )
    return Camera(
        position=tuple(cd["position"]),
        forward=tuple(cd["forward"]),
        up=tuple(cd.get("up", (0.0, 1.0, 0.0))),
        fov=float(cd.get("fov", 0.9)),
        width=int(cd.get("width", 256)),
        height=int(cd.get("height", 256)),
    )


def config_from_defaults(scene: Scene, **overrides) -> RenderConfig:
    rd = dict(scene.defaults.get("render", {}))
    rd.update({k: v for k, v in overrides.items() if v is not None})
    clip = None
    if "clip" in rd and rd["clip"] is not None:
        cdoc = rd["clip"]
        if isinstance(cdoc, ClipPlane):
            clip = cdoc
        else:
            clip = ClipPlane(
                normal=tuple(cdoc.get("normal", (0.0, 0.0, 1.0))),
                offset=float(cdoc.get("offset", 0.0)),
                enabled=bool(cdoc.get("enabled", True)),
            )
    return RenderConfig(
        clip=clip,
        time=float(rd.get("time", 0.0)),
        jitter_amplitude=float(rd.get("jitter_amplitude", 0.0)),
        use_rep_grid=bool(rd.get("use_replas", True)),
        smooth_normals=bool(rd.get("smooth_normals", False)),
        background=tuple(rd.get("background", (0.05, 0.05, 0.08))),
        mode=str(rd.get("mode", "both")),
    )
