"""FastAPI implementation of the policy wire protocol.

Endpoints, status codes, and body shapes match the protocol contract:
POST /act and /reset, GET /health, 400 with a field-path message on
schema violations, 404/405 with an ``error`` body, 500 on policy
exceptions with the server staying alive.  Per-episode state (step
sequencing) is keyed by episode id behind a lock; the wrapped callable
is invoked serially per episode but concurrently across episodes.
"""

from __future__ import annotations

import os
import threading
import time

import uvicorn
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from starlette.concurrency import run_in_threadpool
from starlette.exceptions import HTTPException as StarletteHTTPException

from .policies import MissingState, PolicyCallable
from .validation import SchemaError, parse_act_request, parse_reset_request, validate_action

SCHEMA_VERSION = 1
DEFAULT_BIND = "127.0.0.1:8470"
BIND_ENV_VAR = "RACE_BIND"


class _Episode:
    __slots__ = ("lock", "last_step")

    def __init__(self):
        self.lock = threading.Lock()
        self.last_step: int | None = None


def make_app(policy: PolicyCallable, name: str | None = None) -> FastAPI:
    policy_name = name or getattr(policy, "name", getattr(policy, "__name__", "policy"))
    app = FastAPI(title="race-bridge", docs_url=None, redoc_url=None, openapi_url=None)
    episodes: dict[str, _Episode] = {}
    registry_lock = threading.Lock()

    def episode_for(episode_id: str) -> _Episode:
        with registry_lock:
            ep = episodes.get(episode_id)
            if ep is None:
                ep = _Episode()
                episodes[episode_id] = ep
            return ep

    @app.exception_handler(StarletteHTTPException)
    async def reshape_http_errors(request: Request, exc: StarletteHTTPException):
        if exc.status_code == 404:
            msg = f"unknown path {request.url.path!r}"
        elif exc.status_code == 405:
            msg = f"{request.method} not allowed on {request.url.path}"
        else:
            msg = str(exc.detail)
        return JSONResponse({"error": msg}, status_code=exc.status_code)

    def handle_act(body: bytes):
        req = parse_act_request(body)
        ep = episode_for(req.episode_id)
        with ep.lock:
            expected = 0 if ep.last_step is None else ep.last_step + 1
            if ep.last_step is not None and req.step != expected:
                raise SchemaError("step", f"expected {expected} for episode {req.episode_id!r}, got {req.step}")
            ep.last_step = req.step
            t0 = time.perf_counter()
            action = validate_action(policy(req.image, req.instruction, req.state))
            ms = (time.perf_counter() - t0) * 1000.0
        return {"action": action, "inference_ms": ms}

    def handle_reset(body: bytes):
        episode_id, _instruction = parse_reset_request(body)
        with registry_lock:
            episodes[episode_id] = _Episode()
        return {"ok": True}

    @app.post("/act")
    async def act(request: Request):
        body = await request.body()
        try:
            doc = await run_in_threadpool(handle_act, body)
        except SchemaError as e:
            return JSONResponse({"error": str(e)}, status_code=400)
        except MissingState as e:
            return JSONResponse({"error": str(e)}, status_code=400)
        except Exception as e:  # policy failure: fault-isolate, stay alive
            return JSONResponse({"error": f"{type(e).__name__}: {e}"}, status_code=500)
        return JSONResponse(doc, status_code=200)

    @app.post("/reset")
    async def reset(request: Request):
        body = await request.body()
        try:
            doc = await run_in_threadpool(handle_reset, body)
        except SchemaError as e:
            return JSONResponse({"error": str(e)}, status_code=400)
        return JSONResponse(doc, status_code=200)

    @app.get("/health")
    async def health():
        return JSONResponse({"ok": True, "policy": policy_name, "v": SCHEMA_VERSION})

    return app


def resolve_bind(bind: str | None = None) -> tuple[str, int]:
    addr = bind or os.environ.get(BIND_ENV_VAR) or DEFAULT_BIND
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"bind address must be host:port, got {addr!r}")
    return host, int(port)


class BridgeServer:
    """Background uvicorn server handle for tests and embedding."""

    def __init__(self, policy: PolicyCallable, bind: str | None = None, name: str | None = None):
        host, port = resolve_bind(bind)
        self._config = uvicorn.Config(
            make_app(policy, name), host=host, port=port, log_level="warning", access_log=False
        )
        self._server = uvicorn.Server(self._config)
        self._thread = threading.Thread(target=self._server.run, daemon=True)
        self._thread.start()
        deadline = time.monotonic() + 10.0
        while not self._server.started:
            if time.monotonic() > deadline or not self._thread.is_alive():
                raise OSError(f"bridge failed to start on {host}:{port}")
            time.sleep(0.01)
        sock = self._server.servers[0].sockets[0]
        self.host, self.port = sock.getsockname()[:2]

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def close(self) -> None:
        self._server.should_exit = True
        self._thread.join(timeout=5)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def serve_bridge(policy: PolicyCallable, bind: str | None = None, name: str | None = None) -> BridgeServer:
    """Start a bridge server in the background; returns a closeable handle."""
    return BridgeServer(policy, bind, name)
