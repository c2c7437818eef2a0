import json
import struct
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from tileray.demoscene import write_demo_scene
from tileray.sceneio import load_scene
from tileray.server import make_app


@pytest.fixture(scope="module")
def app(tmp_path_factory):
    d = tmp_path_factory.mktemp("srv_scene")
    scene = load_scene(write_demo_scene(
        d, mesh_instances=1, patches=1, per_square=2, per_cube=1,
        atom_counts=(12, 8), width=32, height=32,
    ))
    return make_app(scene)


@pytest.fixture()
def client(app):
    return TestClient(app)


class TestFrameEndpoint:
    def test_default_camera_frame(self, client):
        r = client.get("/frame?w=24&h=18")
        assert r.status_code == 200
        assert r.headers["content-type"].startswith("image/x-portable-pixmap")
        header = b"P6\n24 18\n255\n"
        assert r.content.startswith(header)
        assert len(r.content) == len(header) + 24 * 18 * 3

    def test_explicit_camera(self, client):
        r = client.get(
            "/frame?px=0&py=0&pz=120&fx=0&fy=0&fz=-1&ux=0&uy=1&uz=0&fov=0.8&w=16&h=16"
        )
        assert r.status_code == 200

    def test_zero_fov_is_400(self, client):
        assert client.get("/frame?fov=0").status_code == 400

    def test_bad_dims_400(self, client):
        assert client.get("/frame?w=0&h=16").status_code == 400
        assert client.get("/frame?w=99999&h=16").status_code == 400

    def test_bad_clip_400(self, client):
        assert client.get("/frame?clip=1,2").status_code == 400

    def test_mode_and_clip_params(self, client):
        r = client.get("/frame?w=16&h=16&mode=core&clip=0,0,1,0&time=0.5")
        assert r.status_code == 200


class TestSceneInfo:
    def test_metadata(self, client):
        r = client.get("/scene/info")
        assert r.status_code == 200
        doc = r.json()
        assert doc["virtual_atom_count"] > 0
        assert len(doc["molecules"]) == 2
        assert "min" in doc["bounds"] and "max" in doc["bounds"]
        assert "renders" in doc["counters"]


def state_msg(seq, dist=120.0, w=16, h=16):
    return json.dumps({
        "seq": seq,
        "camera": {
            "position": [0.0, 0.0, dist],
            "forward": [0.0, 0.0, -1.0],
            "up": [0.0, 1.0, 0.0],
            "fov": 0.8,
        },
        "width": w,
        "height": h,
    })


def parse_frame(data):
    seq, w, h = struct.unpack(">III", data[:12])
    rgb = np.frombuffer(data[12:], np.uint8).reshape(h, w, 3)
    return seq, rgb


class TestStream:
    def test_round_trip_frame(self, client):
        with client.websocket_connect("/stream") as ws:
            ws.send_text(state_msg(7))
            seq, rgb = parse_frame(ws.receive_bytes())
            assert seq == 7
            assert rgb.shape == (16, 16, 3)

    def test_latest_wins_coalescing(self, app, client):
        before = app.state.render_count
        app.state.render_delay = 0.2  # hold the renderer busy for the burst
        try:
            with client.websocket_connect("/stream") as ws:
                # the first message occupies the renderer; the burst
                # behind it must collapse to the newest state
                ws.send_text(state_msg(1, dist=110.0))
                for k in range(2, 12):
                    ws.send_text(state_msg(k, dist=110.0 + k))
                got = []
                while True:
                    seq, _ = parse_frame(ws.receive_bytes())
                    got.append(seq)
                    if seq == 11:
                        break
        finally:
            app.state.render_delay = 0.0
        rendered = app.state.render_count - before
        assert got[0] == 1 and got[-1] == 11
        assert rendered <= 3  # busy render + at most one straggler + final
        assert rendered == len(got)

    def test_identical_state_identical_frame(self, client):
        with client.websocket_connect("/stream") as ws:
            ws.send_text(state_msg(1))
            _, a = parse_frame(ws.receive_bytes())
            ws.send_text(state_msg(2))
            _, b = parse_frame(ws.receive_bytes())
            assert (a == b).all()

    def test_bad_state_reports_error(self, client):
        with client.websocket_connect("/stream") as ws:
            ws.send_text(json.dumps({"seq": 1, "width": 0, "height": 16}))
            msg = ws.receive_text()
            assert "error" in json.loads(msg)


def test_viewer_static_assets_served(tmp_path):
    import os

    from tileray.demoscene import write_grid_scene

    dist = tmp_path / "dist"
    dist.mkdir()
    (dist / "index.html").write_text("<html><body>viewer</body></html>")
    (dist / "main.js").write_text("export {};")
    scene = load_scene(write_grid_scene(tmp_path / "scene", grid=2, cube_atoms=4))
    viewer_app = make_app(scene, viewer_dir=str(dist))
    c = TestClient(viewer_app)
    assert c.get("/").status_code == 200
    assert "viewer" in c.get("/").text
    assert c.get("/main.js").status_code == 200
    assert c.get("/../secret").status_code == 404
