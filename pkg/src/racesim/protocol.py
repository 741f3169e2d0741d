"""The wire protocol between drone client and policy server.

JSON over HTTP/1.1, three endpoints:

* ``POST /act``    — ActRequest in, ActResponse out (status 200)
* ``POST /reset``  — ``{"episode_id", "instruction"}`` in, ``{"ok": true}`` out
* ``GET  /health`` — ``{"ok": true, "policy": <name>, "v": 1}``

Malformed JSON or a failed invariant yields 400 with a field-path message,
unknown paths 404, wrong methods 405, policy exceptions 500.  Frames travel
as base64-encoded PNG.  Per-episode state (step sequencing, stateful policy
sessions) is keyed by episode id and cleared by ``/reset``.
"""

from __future__ import annotations

import base64
import binascii
import io
import json
import math
import os
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Optional

from PIL import Image, UnidentifiedImageError

from .control_loop import MissingStateError, Observation
from .domain import DroneState, Vec3

SCHEMA_VERSION = 1
DEFAULT_BIND = "127.0.0.1:8470"
BIND_ENV_VAR = "RACE_BIND"

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class SchemaError(ValueError):
    """Request/response violates the wire schema; message starts with the
    offending field path."""

    def __init__(self, field: str, detail: str):
        self.field = field
        super().__init__(f"{field}: {detail}")


class BindError(OSError):
    """Server could not bind its address."""


@dataclass(frozen=True)
class PrivilegedState:
    position: Vec3
    velocity: Vec3
    yaw: float


@dataclass(frozen=True)
class ActRequest:
    episode_id: str
    step: int
    instruction: str
    image_b64: str
    state: Optional[PrivilegedState] = None

    def image_bytes(self) -> bytes:
        return base64.b64decode(self.image_b64)


@dataclass(frozen=True)
class ActResponse:
    action: tuple[float, float, float, float]
    inference_ms: float


def _require(doc: dict, field: str, kind, path: str | None = None):
    path = path or field
    if field not in doc:
        raise SchemaError(path, "required field missing")
    v = doc[field]
    if kind is int:
        if isinstance(v, bool) or not isinstance(v, int):
            raise SchemaError(path, "expected an integer")
    elif kind is str:
        if not isinstance(v, str):
            raise SchemaError(path, "expected a string")
    elif kind is float:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise SchemaError(path, "expected a finite number")
        v = float(v)
    return v


def _parse_vec3(doc: dict, field: str, prefix: str) -> Vec3:
    path = f"{prefix}.{field}"
    if field not in doc:
        raise SchemaError(path, "required field missing")
    v = doc[field]
    if not isinstance(v, list) or len(v) != 3:
        raise SchemaError(path, "expected an array of 3 numbers")
    out = []
    for i, x in enumerate(v):
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
            raise SchemaError(f"{path}[{i}]", "expected a finite number")
        out.append(float(x))
    return (out[0], out[1], out[2])


def _parse_json(raw: bytes | str) -> dict:
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError:
            raise SchemaError("$", "body is not valid UTF-8") from None
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as e:
        raise SchemaError("$", f"malformed JSON ({e.msg} at pos {e.pos})") from None
    if not isinstance(doc, dict):
        raise SchemaError("$", "expected a JSON object")
    return doc


def validate_request(raw: bytes | str | dict) -> ActRequest:
    """Parse and validate an ActRequest, checking every invariant.

    Raises :class:`SchemaError` with the offending field path otherwise.
    """
    doc = raw if isinstance(raw, dict) else _parse_json(raw)
    episode_id = _require(doc, "episode_id", str)
    if not episode_id:
        raise SchemaError("episode_id", "must be non-empty")
    step_no = _require(doc, "step", int)
    if step_no < 0:
        raise SchemaError("step", "must be >= 0")
    instruction = _require(doc, "instruction", str)
    image_b64 = _require(doc, "image", str)
    try:
        png = base64.b64decode(image_b64, validate=True)
    except (binascii.Error, ValueError):
        raise SchemaError("image", "not valid base64") from None
    if not png.startswith(PNG_SIGNATURE):
        raise SchemaError("image", "decoded bytes are not a PNG")
    try:
        with Image.open(io.BytesIO(png)) as im:
            im.verify()
    except (UnidentifiedImageError, OSError, SyntaxError):
        raise SchemaError("image", "decoded bytes are not a valid PNG") from None

    state = None
    if doc.get("state") is not None:
        sdoc = doc["state"]
        if not isinstance(sdoc, dict):
            raise SchemaError("state", "expected an object")
        state = PrivilegedState(
            position=_parse_vec3(sdoc, "position", "state"),
            velocity=_parse_vec3(sdoc, "velocity", "state"),
            yaw=float(_require(sdoc, "yaw", float, "state.yaw")),
        )
    return ActRequest(
        episode_id=episode_id,
        step=step_no,
        instruction=instruction,
        image_b64=image_b64,
        state=state,
    )


def encode_request(req: ActRequest) -> dict:
    """Canonical JSON form of an ActRequest (used to author fixtures)."""
    doc = {
        "episode_id": req.episode_id,
        "step": req.step,
        "instruction": req.instruction,
        "image": req.image_b64,
    }
    if req.state is not None:
        doc["state"] = {
            "position": list(req.state.position),
            "velocity": list(req.state.velocity),
            "yaw": req.state.yaw,
        }
    return doc


def validate_response(raw: bytes | str | dict) -> ActResponse:
    """Parse and validate an ActResponse from a policy server."""
    doc = raw if isinstance(raw, dict) else _parse_json(raw)
    if "action" not in doc:
        raise SchemaError("action", "required field missing")
    act = doc["action"]
    if not isinstance(act, list) or len(act) != 4:
        raise SchemaError("action", "expected an array of exactly 4 numbers")
    vals = []
    for i, x in enumerate(act):
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
            raise SchemaError(f"action[{i}]", "expected a finite number")
        vals.append(float(x))
    ms = _require(doc, "inference_ms", float)
    if ms < 0:
        raise SchemaError("inference_ms", "must be >= 0")
    return ActResponse(action=(vals[0], vals[1], vals[2], vals[3]), inference_ms=float(ms))


def resolve_bind(bind: str | None = None) -> tuple[str, int]:
    """Apply the bind precedence: explicit arg, RACE_BIND, default."""
    addr = bind or os.environ.get(BIND_ENV_VAR) or DEFAULT_BIND
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"bind address must be host:port, got {addr!r}")
    return host, int(port)


class _EpisodeSession:
    __slots__ = ("lock", "last_step")

    def __init__(self):
        self.lock = threading.Lock()
        self.last_step: int | None = None


def _request_to_observation(req: ActRequest) -> Observation:
    state = None
    if req.state is not None:
        state = DroneState(
            t=0.0,
            position=req.state.position,
            velocity=req.state.velocity,
            yaw=req.state.yaw,
            yaw_rate=0.0,
        )

    def frame_fn():
        from .fpv_render import Frame, png_to_array

        arr = png_to_array(req.image_bytes())
        h, w, _ = arr.shape
        pose = state if state is not None else DroneState(0.0, (0, 0, 0), (0, 0, 0), 0.0, 0.0)
        return Frame(pixels=arr.tobytes(), t=0.0, pose=pose, width=w, height=h)

    return Observation(
        episode_id=req.episode_id,
        step=req.step,
        t=0.0,
        instruction=req.instruction,
        state=state,
        frame_fn=frame_fn,
    )


class ProtocolServer:
    """Running HTTP server handle; use as a context manager or call close()."""

    def __init__(self, policy, host: str, port: int):
        self.policy = policy
        self._sessions: dict[str, _EpisodeSession] = {}
        self._registry_lock = threading.Lock()
        handler = self._make_handler()
        try:
            self._httpd = ThreadingHTTPServer((host, port), handler)
        except OSError as e:
            raise BindError(f"cannot bind {host}:{port}: {e}") from None
        self._httpd.daemon_threads = True
        self.host, self.port = self._httpd.server_address[0], self._httpd.server_address[1]
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def close(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        self._thread.join(timeout=5)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _session_for(self, episode_id: str) -> _EpisodeSession:
        with self._registry_lock:
            sess = self._sessions.get(episode_id)
            if sess is None:
                sess = _EpisodeSession()
                self._sessions[episode_id] = sess
            return sess

    def _handle_act(self, body: bytes) -> tuple[int, dict]:
        req = validate_request(body)
        sess = self._session_for(req.episode_id)
        with sess.lock:
            expected = 0 if sess.last_step is None else sess.last_step + 1
            known = sess.last_step is not None
            if known and req.step != expected:
                raise SchemaError("step", f"expected {expected} for episode {req.episode_id!r}, got {req.step}")
            sess.last_step = req.step
            t0 = time.perf_counter()
            try:
                cmd = self.policy(_request_to_observation(req))
            except MissingStateError as e:
                raise SchemaError("state", str(e)) from None
            ms = (time.perf_counter() - t0) * 1000.0
        action = [float(cmd.vx), float(cmd.vy), float(cmd.vz), float(cmd.omega)]
        return 200, {"action": action, "inference_ms": ms}

    def _handle_reset(self, body: bytes) -> tuple[int, dict]:
        doc = _parse_json(body)
        episode_id = _require(doc, "episode_id", str)
        if not episode_id:
            raise SchemaError("episode_id", "must be non-empty")
        instruction = _require(doc, "instruction", str)
        with self._registry_lock:
            self._sessions[episode_id] = _EpisodeSession()
        reset = getattr(self.policy, "reset", None)
        if callable(reset):
            reset(episode_id, instruction)
        return 200, {"ok": True}

    def _handle_health(self) -> tuple[int, dict]:
        name = getattr(self.policy, "name", type(self.policy).__name__)
        return 200, {"ok": True, "policy": name, "v": SCHEMA_VERSION}

    def _make_handler(self):
        server = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, fmt, *args):  # silence default stderr chatter
                pass

            def _reply(self, status: int, doc: dict):
                payload = json.dumps(doc).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def _dispatch(self, method: str):
                path = self.path.split("?", 1)[0]
                routes = {"/act": "POST", "/reset": "POST", "/health": "GET"}
                if path not in routes:
                    self._reply(404, {"error": f"unknown path {path!r}"})
                    return
                if routes[path] != method:
                    self._reply(405, {"error": f"{method} not allowed on {path}"})
                    return
                length = int(self.headers.get("Content-Length") or 0)
                body = self.rfile.read(length) if length else b""
                try:
                    if path == "/act":
                        status, doc = server._handle_act(body)
                    elif path == "/reset":
                        status, doc = server._handle_reset(body)
                    else:
                        status, doc = server._handle_health()
                except SchemaError as e:
                    status, doc = 400, {"error": str(e)}
                except Exception as e:  # policy failure: fault-isolate, stay alive
                    status, doc = 500, {"error": f"{type(e).__name__}: {e}"}
                self._reply(status, doc)

            def do_GET(self):
                self._dispatch("GET")

            def do_POST(self):
                self._dispatch("POST")

            def do_PUT(self):
                self._dispatch("PUT")

            def do_DELETE(self):
                self._dispatch("DELETE")

        return Handler


def serve(policy: Callable[[Observation], object], bind: str | None = None) -> ProtocolServer:
    """Expose an in-process policy over the wire protocol.

    ``bind`` is ``host:port``; when None, the RACE_BIND environment
    variable and then the default 127.0.0.1:8470 apply.
    """
    host, port = resolve_bind(bind)
    return ProtocolServer(policy, host, port)
