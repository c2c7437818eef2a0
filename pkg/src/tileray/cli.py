"""Command-line surface: render, stats, recipe-gen, validate, serve."""

from __future__ import annotations

import argparse
import json
import sys

from .imageio import write_image
from .render import ClipPlane
from .sceneio import (
    SceneFormatError,
    camera_from_defaults,
    config_from_defaults,
    load_scene,
    load_tileset,
    write_recipe,
)
from .tiling import TilingError, generate_recipe_2d, generate_recipe_3d


def _parse_clip(arg: str) -> ClipPlane:
    parts = [float(v) for v in arg.split(",")]
    if len(parts) != 4:
        raise ValueError("clip expects nx,ny,nz,offset")
    return ClipPlane(normal=(parts[0], parts[1], parts[2]), offset=parts[3])


def cmd_render(args) -> int:
    scene = load_scene(args.scene)
    camera = camera_from_defaults(scene, width=args.width, height=args.height)
    clip = _parse_clip(args.clip) if args.clip else None
    config = config_from_defaults(
        scene,
        time=args.time,
        clip=clip,
        mode=args.mode,
        use_replas=False if args.no_replas else None,
    )
    from .render import render_frame

    fb = render_frame(scene, camera, config)
    fmt = "png" if str(args.output).lower().endswith(".png") else "ppm"
    write_image(fb.rgb, args.output, fmt=fmt)
    print(f"wrote {args.output} ({camera.width}x{camera.height})")
    return 0


def cmd_stats(args) -> int:
    scene = load_scene(args.scene)
    report = scene.build_report()
    print(f"virtual atom count: {report['virtual_atom_count']}")
    print(f"prism count:        {report['counts']['prisms']}"
          f" (+{report['counts']['prisms_degenerate']} degenerate, skipped)")
    for mesh_id, dims in report["grid_dims"].items():
        print(f"core grid dims[{mesh_id}]:  {dims}")
    print("geometry bytes:")
    for key, val in report["geometry_bytes"].items():
        print(f"  {key:<10s} {val}")
    print(f"instance table bytes: {report['instance_table_bytes']}")
    print(f"counts: {json.dumps(report['counts'])}")
    return 0


def cmd_recipe_gen(args) -> int:
    ts = load_tileset(args.tileset)
    dims = tuple(int(v) for v in args.dims.lower().split("x"))
    if ts["type"] == "square":
        if len(dims) != 2:
            raise ValueError("square tile sets need --dims WxH")
        recipe = generate_recipe_2d(ts["tiles"], dims, args.seed)
    else:
        if len(dims) != 3:
            raise ValueError("cube tile sets need --dims WxHxD")
        recipe = generate_recipe_3d(ts["tiles"], dims, args.seed)
    write_recipe(args.output, recipe)
    print(f"wrote {args.output} ({'x'.join(str(d) for d in dims)})")
    return 0


def cmd_validate(args) -> int:
    scene = load_scene(args.scene)
    problems = scene.validate()
    if problems:
        for p in problems:
            print(f"INVALID: {p}")
        return 1
    print("scene valid")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .server import make_app

    scene = load_scene(args.scene)
    app = make_app(scene)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tileray",
        description="Ray-trace molecular scenes by virtually instancing Wang-tile content",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render a scene to an image")
    p.add_argument("scene")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--time", type=float)
    p.add_argument("--clip", help="clipping plane as nx,ny,nz,offset")
    p.add_argument("--no-replas", action="store_true",
                   help="loop replication areas sequentially instead of the static grid")
    p.add_argument("--mode", choices=("shell", "core", "both"))
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("stats", help="print scene statistics")
    p.add_argument("scene")
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("recipe-gen", help="generate a tiling recipe from a tile set")
    p.add_argument("tileset")
    p.add_argument("--dims", required=True, help="WxH for squares, WxHxD for cubes")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(fn=cmd_recipe_gen)

    p = sub.add_parser("validate", help="run invariant checks on a built scene")
    p.add_argument("scene")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("serve", help="serve frames over HTTP/WebSocket")
    p.add_argument("scene")
    p.add_argument("--port", type=int, default=8717)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(fn=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (SceneFormatError, TilingError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
