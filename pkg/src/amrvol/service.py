"""Frame-streaming render service.

One duplex connection per client: JSON text messages in both directions,
each rendered frame delivered as a JSON header immediately followed by one
binary PNG message. All clients share a single session; edits are
serialized, renders read immutable scene snapshots.
"""
from __future__ import annotations

import dataclasses
import json
import threading
from typing import Optional

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from starlette.concurrency import run_in_threadpool

from .accel import TransferFunction, build_iso_bvh, build_volume_bvh
from .bench import orbit_cameras
from .bricks import SplitTree
from .io import encode_png
from .model import AmrModel
from .regions import RegionSet, region_stats
from .render import GRADIENT_MODES, Camera, MarchParams, Scene, build_scene, render_frame

__all__ = ["Session", "make_app", "DEFAULT_PORT"]

DEFAULT_PORT = 9876
MAX_DIM = 4096


class ProtocolError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ProtocolError("bad_message", message)


def _vec3(obj, name: str) -> np.ndarray:
    _require(
        isinstance(obj, (list, tuple)) and len(obj) == 3
        and all(isinstance(v, (int, float)) for v in obj),
        f"{name} must be [x, y, z]",
    )
    return np.asarray(obj, np.float64)


class Session:
    """Shared state for every connected client: one scene snapshot, one
    camera, one set of march params (last writer wins).
    """

    def __init__(self, model: AmrModel, regions: RegionSet, tree: Optional[SplitTree] = None):
        self.model = model
        self.regions = regions
        self.tree = tree
        lo, hi = model.value_range(0)
        if not lo < hi:
            lo, hi = lo - 0.5, hi + 0.5
        tf = TransferFunction.grayscale((lo, hi))
        self._tf = tf
        self._scene = build_scene(model, regions, tf, 0, iso_value=None, tree=tree)
        cam = orbit_cameras(regions.bounds, 1, 512, 512)[0]
        self._camera = {
            "pos": cam.position, "look": regions.bounds.center,
            "up": np.array([0.0, 1.0, 0.0]), "fov": cam.fov_y,
        }
        self._params = MarchParams(gradient_mode="analytic")
        self._frame_id = 0
        self._pending_rebuild_ms = 0.0
        self._lock = threading.Lock()

    # -- info ---------------------------------------------------------------

    def info(self) -> dict:
        bounds = self.regions.bounds
        st = region_stats(self.regions)
        finite = len(self.regions) > 0
        return {
            "fields": list(self.model.field_names),
            "bounds": {
                "lo": list(bounds.lo) if finite else [0.0, 0.0, 0.0],
                "hi": list(bounds.hi) if finite else [0.0, 0.0, 0.0],
            },
            "stats": {
                "cells": self.model.n_cells,
                "bricks": self.model.n_bricks,
                "regions": st.n_regions,
                "valueRange": list(self.model.value_range(0)),
                "hasTree": self.tree is not None,
            },
        }

    # -- edits (serialized; publish a fresh snapshot before swapping) --------

    def set_camera(self, msg: dict) -> None:
        cam = dict(self._camera)
        if "pos" in msg:
            cam["pos"] = _vec3(msg["pos"], "pos")
        if "look" in msg:
            cam["look"] = _vec3(msg["look"], "look")
        if "up" in msg:
            cam["up"] = _vec3(msg["up"], "up")
        if "fov" in msg:
            fov = msg["fov"]
            _require(isinstance(fov, (int, float)) and 0.0 < fov < 180.0, "fov out of range")
            cam["fov"] = float(fov)
        with self._lock:
            self._camera = cam

    def set_tf(self, msg: dict) -> None:
        _require("domain" in msg and "rgba" in msg, "set_tf needs domain and rgba")
        try:
            tf = TransferFunction.from_dict({"domain": msg["domain"], "rgba": msg["rgba"]})
        except (ValueError, TypeError) as exc:
            raise ProtocolError("bad_tf", str(exc)) from None
        with self._lock:
            scene = self._scene
            bvh = build_volume_bvh(self.regions, tf, scene.field)
            self._scene = dataclasses.replace(scene, volume_bvh=bvh)
            self._tf = tf
            self._pending_rebuild_ms += bvh.build_ms

    def set_iso(self, msg: dict) -> None:
        _require("value" in msg, "set_iso needs value (number or null)")
        value = msg["value"]
        _require(value is None or isinstance(value, (int, float)), "iso value must be a number or null")
        with self._lock:
            scene = self._scene
            if value is None:
                self._scene = dataclasses.replace(scene, iso_bvh=None, iso_value=None)
            else:
                bvh = build_iso_bvh(self.regions, float(value), scene.field)
                self._scene = dataclasses.replace(scene, iso_bvh=bvh, iso_value=float(value))
                self._pending_rebuild_ms += bvh.build_ms

    def set_params(self, msg: dict) -> None:
        kw = {}
        if "rateScale" in msg:
            rs = msg["rateScale"]
            _require(isinstance(rs, (int, float)) and rs > 0.0, "rateScale must be > 0")
            kw["rate_scale"] = float(rs)
        if "gradientMode" in msg:
            gm = msg["gradientMode"]
            _require(gm in GRADIENT_MODES, f"gradientMode must be one of {sorted(GRADIENT_MODES)}")
            kw["gradient_mode"] = gm
        if "seed" in msg:
            _require(isinstance(msg["seed"], int), "seed must be an integer")
            kw["seed"] = msg["seed"]
        with self._lock:
            self._params = dataclasses.replace(self._params, **kw)

    # -- rendering ------------------------------------------------------------

    def render(self, width: int, height: int):
        """Render one frame from the current snapshot.

        Returns (frame_id, Frame). Pending BVH rebuild time is folded into
        this frame's stats and cleared, so each rebuild is reported once.
        """
        with self._lock:
            scene, tf, params, cam = self._scene, self._tf, self._params, self._camera
            self._frame_id += 1
            fid = self._frame_id
            rebuild_ms = self._pending_rebuild_ms
            self._pending_rebuild_ms = 0.0
        camera = Camera(
            cam["pos"], np.asarray(cam["look"]) - np.asarray(cam["pos"]),
            cam["up"], cam["fov"], width, height,
        )
        frame = render_frame(scene, camera, tf, params)
        frame.stats.bvh_rebuild_ms = rebuild_ms
        return fid, frame

    @property
    def scene(self) -> Scene:
        return self._scene


async def _handle_message(session: Session, ws: WebSocket, msg: dict) -> None:
    kind = msg.get("type")
    if kind == "hello":
        payload = dict(session.info())
        payload["type"] = "info"
        await ws.send_text(json.dumps(payload))
    elif kind == "set_camera":
        session.set_camera(msg)
    elif kind == "set_tf":
        await run_in_threadpool(session.set_tf, msg)
    elif kind == "set_iso":
        await run_in_threadpool(session.set_iso, msg)
    elif kind == "set_params":
        session.set_params(msg)
    elif kind == "request_frame":
        width = msg.get("width", 512)
        height = msg.get("height", 512)
        _require(
            isinstance(width, int) and isinstance(height, int)
            and 1 <= width <= MAX_DIM and 1 <= height <= MAX_DIM,
            f"width and height must be integers in [1, {MAX_DIM}]",
        )
        fid, frame = await run_in_threadpool(session.render, width, height)
        png = await run_in_threadpool(encode_png, frame.rgba)
        header = {
            "type": "frame", "id": fid, "width": frame.width,
            "height": frame.height, "encoding": "png",
            "stats": frame.stats.to_dict(),
        }
        await ws.send_text(json.dumps(header))
        await ws.send_bytes(png)
    else:
        raise ProtocolError("unsupported", f"unsupported message type {kind!r}")


def make_app(model: AmrModel, regions: RegionSet, tree: Optional[SplitTree] = None) -> FastAPI:
    """Build the service application around one shared session."""
    app = FastAPI(title="amrvol render service")
    session = Session(model, regions, tree)
    app.state.session = session

    @app.get("/health")
    def health() -> dict:
        payload = dict(session.info())
        payload["status"] = "ok"
        return payload

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket) -> None:
        await ws.accept()
        while True:
            try:
                raw = await ws.receive_text()
            except (WebSocketDisconnect, RuntimeError):
                break
            except KeyError:
                await _send_error(ws, "bad_message", "expected a text frame")
                continue
            try:
                msg = json.loads(raw)
                if not isinstance(msg, dict):
                    raise ProtocolError("bad_json", "message must be a JSON object")
                await _handle_message(session, ws, msg)
            except json.JSONDecodeError as exc:
                await _send_error(ws, "bad_json", f"malformed JSON: {exc}")
            except ProtocolError as exc:
                await _send_error(ws, exc.code, str(exc))
            except WebSocketDisconnect:
                break
            except Exception as exc:  # edit/render failure keeps prior snapshot
                await _send_error(ws, "internal", f"{type(exc).__name__}: {exc}")

    return app


async def _send_error(ws: WebSocket, code: str, message: str) -> None:
    try:
        await ws.send_text(json.dumps({"type": "error", "code": code, "message": message}))
    except RuntimeError:
        pass
