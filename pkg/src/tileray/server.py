"""HTTP/WebSocket frame service for interactive navigation.

Endpoints:
  GET /frame        one frame for explicit camera/clip query parameters,
                    as a binary portable pixmap
  GET /scene/info   scene metadata and service counters (JSON)
  WS  /stream       camera/clip state messages (JSON text) answered with
                    binary frames: >III header (seq, width, height) + rgb

The stream coalesces to the most recent state: while a frame renders,
newer messages replace the pending one, so a lagging renderer never
queues stale frames (latest wins). The echoed seq lets clients drop
frames older than their last sent state.
"""

from __future__ import annotations

import asyncio
import json
import math
import os
import struct
import time
from typing import Optional

from fastapi import FastAPI, HTTPException, Request, WebSocket, WebSocketDisconnect
from fastapi.responses import FileResponse, Response
from starlette.concurrency import run_in_threadpool

from .imageio import ppm_bytes
from .render import Camera, ClipPlane, RenderConfig, render_frame
from .sceneio import camera_from_defaults, config_from_defaults

MAX_DIM = 2048


def _clip_from_text(arg: Optional[str]) -> Optional[ClipPlane]:
    if not arg:
        return None
    parts = [float(v) for v in arg.split(",")]
    if len(parts) != 4:
        raise ValueError("clip expects nx,ny,nz,offset")
    return ClipPlane(normal=(parts[0], parts[1], parts[2]), offset=parts[3])


def _state_to_camera_config(scene, state: dict):
    cam_doc = state.get("camera", {})
    width = int(state.get("width", 256))
    height = int(state.get("height", 256))
    if not (1 <= width <= MAX_DIM and 1 <= height <= MAX_DIM):
        raise ValueError(f"image dims {width}x{height} out of range")
    camera = camera_from_defaults(
        scene,
        position=tuple(cam_doc["position"]) if "position" in cam_doc else None,
        forward=tuple(cam_doc["forward"]) if "forward" in cam_doc else None,
        up=tuple(cam_doc["up"]) if "up" in cam_doc else None,
        fov=float(cam_doc["fov"]) if "fov" in cam_doc else None,
        width=width,
        height=height,
    )
    clip = None
    if state.get("clip"):
        cdoc = state["clip"]
        clip = ClipPlane(
            normal=tuple(cdoc.get("normal", (0, 0, 1))),
            offset=float(cdoc.get("offset", 0.0)),
            enabled=bool(cdoc.get("enabled", True)),
        )
    config = config_from_defaults(
        scene,
        clip=clip,
        time=float(state["time"]) if "time" in state else None,
        jitter_amplitude=(
            float(state["jitter_amplitude"]) if "jitter_amplitude" in state else None
        ),
        mode=state.get("mode"),
    )
    return camera, config


def make_app(scene, viewer_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="tileray frame service")
    app.state.scene = scene
    app.state.render_count = 0
    app.state.received_count = 0
    app.state.render_delay = 0.0  # test hook: simulates a slow renderer
    if viewer_dir is None:
        candidate = os.path.join(os.getcwd(), "frontend", "dist")
        viewer_dir = candidate if os.path.isdir(candidate) else None
    if viewer_dir:
        viewer_dir = os.path.abspath(viewer_dir)

    @app.get("/scene/info")
    def scene_info():
        report = scene.build_report()
        return {
            "bounds": {
                "min": list(scene.world_bounds.min),
                "max": list(scene.world_bounds.max),
            },
            "molecules": [
                {"id": m.id, "name": m.name, "color": list(m.color), "atoms": m.atom_count}
                for m in scene.molecules
            ],
            "virtual_atom_count": report["virtual_atom_count"],
            "geometry_bytes": report["geometry_bytes"]["total"],
            "counters": {
                "renders": app.state.render_count,
                "stream_messages": app.state.received_count,
            },
        }

    @app.get("/frame")
    async def frame(request: Request):
        q = request.query_params

        def fget(name):
            return float(q[name]) if name in q else None

        try:
            width = int(q.get("w", 256))
            height = int(q.get("h", 256))
            if not (1 <= width <= MAX_DIM and 1 <= height <= MAX_DIM):
                raise ValueError(f"image dims {width}x{height} out of range")
            fov = fget("fov")
            if fov is not None and not (0.0 < fov < math.pi):
                raise ValueError(f"fov {fov} outside (0, pi)")
            position = forward = up = None
            if all(f"p{a}" in q for a in "xyz"):
                position = (fget("px"), fget("py"), fget("pz"))
            if all(f"f{a}" in q for a in "xyz"):
                forward = (fget("fx"), fget("fy"), fget("fz"))
            if all(f"u{a}" in q for a in "xyz"):
                up = (fget("ux"), fget("uy"), fget("uz"))
            camera = camera_from_defaults(
                scene, position=position, forward=forward, up=up, fov=fov,
                width=width, height=height,
            )
            config = config_from_defaults(
                scene,
                clip=_clip_from_text(q.get("clip")),
                time=fget("time"),
                mode=q.get("mode"),
            )
        except (ValueError, KeyError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        try:
            fb = await run_in_threadpool(render_frame, scene, camera, config)
            app.state.render_count += 1
        except Exception as exc:  # pragma: no cover - defensive
            raise HTTPException(status_code=500, detail=str(exc)) from None
        return Response(content=ppm_bytes(fb.rgb), media_type="image/x-portable-pixmap")

    @app.websocket("/stream")
    async def stream(ws: WebSocket):
        await ws.accept()
        pending: dict = {}
        fresh = asyncio.Event()
        done = asyncio.Event()

        async def receiver():
            try:
                while True:
                    text = await ws.receive_text()
                    state = json.loads(text)
                    pending.clear()
                    pending.update(state)  # latest wins
                    app.state.received_count += 1
                    fresh.set()
            except (WebSocketDisconnect, RuntimeError):
                done.set()
                fresh.set()

        task = asyncio.create_task(receiver())
        try:
            while True:
                await fresh.wait()
                fresh.clear()
                if done.is_set():
                    break
                state = dict(pending)
                try:
                    camera, config = _state_to_camera_config(scene, state)
                except (ValueError, KeyError) as exc:
                    await ws.send_text(json.dumps({"error": str(exc)}))
                    continue

                def do_render():
                    if app.state.render_delay > 0.0:
                        time.sleep(app.state.render_delay)
                    return render_frame(scene, camera, config)

                fb = await run_in_threadpool(do_render)
                app.state.render_count += 1
                header = struct.pack(
                    ">III", int(state.get("seq", 0)) & 0xFFFFFFFF, fb.width, fb.height
                )
                await ws.send_bytes(header + fb.rgb.tobytes())
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            task.cancel()

    if viewer_dir:
        index = os.path.join(viewer_dir, "index.html")

        @app.get("/")
        def root():
            return FileResponse(index)

        @app.get("/{asset_path:path}")
        def asset(asset_path: str):
            full = os.path.normpath(os.path.join(viewer_dir, asset_path))
            if not full.startswith(os.path.abspath(viewer_dir)) or not os.path.isfile(full):
                raise HTTPException(status_code=404)
            return FileResponse(full)

    return app
