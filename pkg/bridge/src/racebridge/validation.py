"""Wire-schema validation, independent of the harness implementation.

Mirrors the protocol contract exactly: field-path error messages, base64
PNG image checks, and the per-episode step-sequencing rule are all
reproduced here so the bridge passes the shared golden-fixture suite
without importing anything from the harness.
"""

from __future__ import annotations

import base64
import binascii
import io
import json
import math
from dataclasses import dataclass
from typing import Optional

from PIL import Image, UnidentifiedImageError

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class SchemaError(ValueError):
    """Request violates the wire schema; message starts with the field path."""

    def __init__(self, field: str, detail: str):
        self.field = field
        super().__init__(f"{field}: {detail}")


@dataclass(frozen=True)
class ActRequest:
    episode_id: str
    step: int
    instruction: str
    image: bytes
    state: Optional[dict] = None


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


def _require_str(doc: dict, field: str) -> str:
    if field not in doc:
        raise SchemaError(field, "required field missing")
    v = doc[field]
    if not isinstance(v, str):
        raise SchemaError(field, "expected a string")
    return v


def _number(v, path: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise SchemaError(path, "expected a finite number")
    return float(v)


def _vec3(doc: dict, field: str, prefix: str) -> list[float]:
    path = f"{prefix}.{field}"
    if field not in doc:
        raise SchemaError(path, "required field missing")
    v = doc[field]
    if not isinstance(v, list) or len(v) != 3:
        raise SchemaError(path, "expected an array of 3 numbers")
    return [_number(x, f"{path}[{i}]") for i, x in enumerate(v)]


def parse_act_request(raw: bytes | str | dict) -> ActRequest:
    doc = raw if isinstance(raw, dict) else _parse_json(raw)
    episode_id = _require_str(doc, "episode_id")
    if not episode_id:
        raise SchemaError("episode_id", "must be non-empty")
    if "step" not in doc:
        raise SchemaError("step", "required field missing")
    step = doc["step"]
    if isinstance(step, bool) or not isinstance(step, int):
        raise SchemaError("step", "expected an integer")
    if step < 0:
        raise SchemaError("step", "must be >= 0")
    instruction = _require_str(doc, "instruction")
    image_b64 = _require_str(doc, "image")
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
        if "yaw" not in sdoc:
            raise SchemaError("state.yaw", "required field missing")
        state = {
            "position": _vec3(sdoc, "position", "state"),
            "velocity": _vec3(sdoc, "velocity", "state"),
            "yaw": _number(sdoc["yaw"], "state.yaw"),
        }
    return ActRequest(episode_id=episode_id, step=step, instruction=instruction, image=png, state=state)


def parse_reset_request(raw: bytes | str | dict) -> tuple[str, str]:
    doc = raw if isinstance(raw, dict) else _parse_json(raw)
    episode_id = _require_str(doc, "episode_id")
    if not episode_id:
        raise SchemaError("episode_id", "must be non-empty")
    instruction = _require_str(doc, "instruction")
    return episode_id, instruction


def validate_action(values) -> list[float]:
    """The wrapped callable must return exactly 4 finite numbers."""
    try:
        out = [float(x) for x in values]
    except (TypeError, ValueError):
        raise ValueError(f"policy returned non-numeric action: {values!r}") from None
    if len(out) != 4 or not all(math.isfinite(x) for x in out):
        raise ValueError(f"policy must return exactly 4 finite numbers, got {values!r}")
    return out
