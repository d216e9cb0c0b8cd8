import io as stdio
import json

import numpy as np
import pytest
from PIL import Image
from starlette.testclient import TestClient

from amrvol.service import Session, make_app

RES = {"width": 48, "height": 36}


@pytest.fixture(scope="module")
def app(smoke):
    model, tree, regions = smoke
    return make_app(model, regions, tree)


@pytest.fixture(scope="module")
def client(app):
    return TestClient(app)


def send(ws, **msg):
    ws.send_text(json.dumps(msg))


def recv(ws):
    return json.loads(ws.receive_text())


def get_frame(ws, **extra):
    send(ws, type="request_frame", **RES, **extra)
    header = recv(ws)
    assert header["type"] == "frame"
    return header, ws.receive_bytes()


def transparent_tf():
    return {"domain": [0.0, 1.0], "rgba": [[1.0, 1.0, 1.0, 0.0]] * 256}


def opaque_tf():
    return {"domain": [0.0, 1.0], "rgba": [[1.0, 1.0, 1.0, 1.0]] * 256}


def test_health_reports_info(client, smoke):
    model, _, regions = smoke
    r = client.get("/health")
    assert r.status_code == 200
    body = r.json()
    assert body["status"] == "ok"
    assert body["fields"] == ["value"]
    assert body["stats"]["cells"] == model.n_cells
    assert body["stats"]["regions"] == len(regions)
    assert body["bounds"]["lo"] == list(regions.bounds.lo)


def test_hello_returns_info(client):
    with client.websocket_connect("/ws") as ws:
        send(ws, type="hello")
        info = recv(ws)
        assert info["type"] == "info"
        assert info["fields"] == ["value"]
        assert len(info["bounds"]["lo"]) == 3
        assert info["stats"]["bricks"] > 0


def test_frame_header_then_png(client):
    with client.websocket_connect("/ws") as ws:
        header, png = get_frame(ws)
        assert header["width"] == 48 and header["height"] == 36
        assert header["encoding"] == "png"
        assert set(header["stats"]) == {"ms", "regions", "samples", "bvhRebuildMs"}
        img = Image.open(stdio.BytesIO(png))
        assert img.size == (48, 36)


def test_frame_ids_strictly_increase_across_clients(client):
    with client.websocket_connect("/ws") as ws:
        a, _ = get_frame(ws)
        b, _ = get_frame(ws)
    with client.websocket_connect("/ws") as ws:
        c, _ = get_frame(ws)
    assert a["id"] < b["id"] < c["id"]


def test_tf_edit_reports_rebuild_once(client):
    with client.websocket_connect("/ws") as ws:
        send(ws, type="set_tf", **transparent_tf())
        h1, png = get_frame(ws)
        assert h1["stats"]["samples"] == 0
        assert h1["stats"]["bvhRebuildMs"] > 0.0
        img = np.asarray(Image.open(stdio.BytesIO(png)).convert("RGBA"))
        assert not img.any()
        h2, _ = get_frame(ws)
        assert h2["stats"]["bvhRebuildMs"] == 0.0  # reported exactly once
        send(ws, type="set_tf", **opaque_tf())  # restore for other tests
        get_frame(ws)


def test_iso_edit_rebuilds_iso_only(app, client):
    session: Session = app.state.session
    with client.websocket_connect("/ws") as ws:
        volume_bvh_before = session.scene.volume_bvh
        send(ws, type="set_iso", value=0.5)
        h, _ = get_frame(ws)
        assert h["stats"]["bvhRebuildMs"] > 0.0
        assert session.scene.volume_bvh is volume_bvh_before
        assert session.scene.iso_value == 0.5
        send(ws, type="set_iso", value=None)
        h, _ = get_frame(ws)
        assert session.scene.iso_bvh is None


def test_camera_and_params_edits_skip_rebuild(app, client):
    session: Session = app.state.session
    with client.websocket_connect("/ws") as ws:
        scene_before = session.scene
        send(ws, type="set_camera", pos=[60.0, 50.0, 60.0], look=[16.0, 16.0, 16.0], fov=30.0)
        send(ws, type="set_params", rateScale=2.0, gradientMode="none")
        h, _ = get_frame(ws)
        assert h["stats"]["bvhRebuildMs"] == 0.0
        assert session.scene is scene_before


def test_rate_scale_changes_sample_count(client):
    soft = {"domain": [0.0, 1.0], "rgba": [[1.0, 1.0, 1.0, 0.05]] * 256}
    with client.websocket_connect("/ws") as ws:
        send(ws, type="set_tf", **soft)
        send(ws, type="set_params", rateScale=1.0)
        send(ws, type="set_iso", value=None)
        h1, _ = get_frame(ws)
        send(ws, type="set_params", rateScale=3.0)
        h2, _ = get_frame(ws)
        assert h2["stats"]["samples"] > h1["stats"]["samples"]


def test_same_settings_render_identical_bytes(client):
    with client.websocket_connect("/ws") as ws:
        _, png1 = get_frame(ws)
        _, png2 = get_frame(ws)
        assert png1 == png2


def test_malformed_json_keeps_connection(client):
    with client.websocket_connect("/ws") as ws:
        ws.send_text("{oops")
        err = recv(ws)
        assert err["type"] == "error" and err["code"] == "bad_json"
        header, _ = get_frame(ws)  # still usable
        assert header["type"] == "frame"


def test_unknown_type_is_unsupported(client):
    with client.websocket_connect("/ws") as ws:
        send(ws, type="teleport")
        err = recv(ws)
        assert err["type"] == "error" and err["code"] == "unsupported"
        assert "teleport" in err["message"]


def test_bad_messages_report_errors(client):
    with client.websocket_connect("/ws") as ws:
        send(ws, type="set_camera", pos=[1.0, 2.0])
        assert recv(ws)["code"] == "bad_message"
        send(ws, type="set_iso")
        assert recv(ws)["code"] == "bad_message"
        send(ws, type="set_params", rateScale=-1.0)
        assert recv(ws)["code"] == "bad_message"
        send(ws, type="set_params", gradientMode="sobel")
        assert recv(ws)["code"] == "bad_message"
        send(ws, type="request_frame", width=0, height=8)
        assert recv(ws)["code"] == "bad_message"
        send(ws, type="set_tf", domain=[0.0, 1.0], rgba=[[0, 0, 0, 0]] * 3)
        assert recv(ws)["code"] == "bad_tf"


def test_failed_tf_edit_keeps_previous_snapshot(app, client):
    session: Session = app.state.session
    with client.websocket_connect("/ws") as ws:
        send(ws, type="set_tf", **opaque_tf())
        ref, _ = get_frame(ws)
        scene_before = session.scene
        send(ws, type="set_tf", domain=[1.0, 0.0], rgba=[[0, 0, 0, 0]] * 256)
        err = recv(ws)
        assert err["type"] == "error"
        assert session.scene is scene_before
        again, _ = get_frame(ws)
        assert again["stats"]["samples"] == ref["stats"]["samples"]


def test_rapid_tf_edits_last_writer_wins(client):
    with client.websocket_connect("/ws") as ws:
        send(ws, type="set_tf", **opaque_tf())
        send(ws, type="set_tf", **transparent_tf())
        h, _ = get_frame(ws)
        assert h["stats"]["samples"] == 0
        send(ws, type="set_tf", **transparent_tf())
        send(ws, type="set_tf", **opaque_tf())
        h, _ = get_frame(ws)
        assert h["stats"]["samples"] > 0


def test_every_request_answered_exactly_once(client):
    with client.websocket_connect("/ws") as ws:
        for _ in range(3):
            send(ws, type="request_frame", **RES)
        ids = []
        for _ in range(3):
            header = recv(ws)
            assert header["type"] == "frame"
            ws.receive_bytes()
            ids.append(header["id"])
        assert ids == sorted(ids) and len(set(ids)) == 3
