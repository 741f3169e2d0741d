#!/usr/bin/env python3
"""Author the golden wire-protocol fixtures.

Run from the repo root; rewrites fixtures/protocol/*.json and
fixtures/act_request_1.json with the canonical serializer.  The fixtures
assume the server under test runs the constant conformance policy
(action [0.5, 0, 0, 0], /health name "constant").
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

from racesim.domain import DroneState, load_track
from racesim.fpv_render import CameraParams, frame_to_png, render
from racesim.protocol import ActRequest, PrivilegedState, encode_request

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "fixtures" / "protocol"

INSTRUCTION = "Fly through one gate"


def tiny_png_b64() -> str:
    track = load_track(ROOT / "tracks" / "single_gate.json")
    state = DroneState(t=0.0, position=(-2.0, 0.0, 1.5), velocity=(0, 0, 0), yaw=0.0, yaw_rate=0.0)
    frame = render(state, track, CameraParams(width=16, height=16))
    return base64.b64encode(frame_to_png(frame)).decode("ascii")


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    img = tiny_png_b64()
    ok_action = {"action": [0.5, 0.0, 0.0, 0.0]}
    ignore_ms = ["inference_ms"]

    def act_body(episode_id: str, step: int, state: dict | None = None) -> dict:
        body = {"episode_id": episode_id, "step": step, "instruction": INSTRUCTION, "image": img}
        if state is not None:
            body["state"] = state
        return body

    fixtures = [
        {
            "name": "health_ok",
            "method": "GET",
            "path": "/health",
            "expect": {"status": 200, "body": {"ok": True, "policy": "constant", "v": 1}},
        },
        {
            "name": "act_step0",
            "method": "POST",
            "path": "/act",
            "body": act_body("conf-a", 0),
            "expect": {"status": 200, "body": ok_action, "ignore": ignore_ms},
        },
        {
            "name": "act_step1",
            "method": "POST",
            "path": "/act",
            "body": act_body("conf-a", 1),
            "expect": {"status": 200, "body": ok_action, "ignore": ignore_ms},
        },
        {
            "name": "act_step_skip",
            "method": "POST",
            "path": "/act",
            "body": act_body("conf-a", 5),
            "expect": {"status": 400, "error_contains": "step"},
        },
        {
            "name": "act_with_state",
            "method": "POST",
            "path": "/act",
            "body": act_body(
                "conf-b", 0,
                state={"position": [0.0, 0.0, 1.5], "velocity": [1.0, 0.0, 0.0], "yaw": 0.0},
            ),
            "expect": {"status": 200, "body": ok_action, "ignore": ignore_ms},
        },
        {
            "name": "reset_ok",
            "method": "POST",
            "path": "/reset",
            "body": {"episode_id": "conf-b", "instruction": INSTRUCTION},
            "expect": {"status": 200, "body": {"ok": True}},
        },
        {
            "name": "act_after_reset",
            "method": "POST",
            "path": "/act",
            "body": act_body("conf-b", 0),
            "expect": {"status": 200, "body": ok_action, "ignore": ignore_ms},
        },
        {
            "name": "act_missing_instruction",
            "method": "POST",
            "path": "/act",
            "body": {"episode_id": "conf-d", "step": 0, "image": img},
            "expect": {"status": 400, "error_contains": "instruction"},
        },
        {
            "name": "act_bad_base64",
            "method": "POST",
            "path": "/act",
            "body": {"episode_id": "conf-e", "step": 0, "instruction": INSTRUCTION, "image": "!!!not-base64!!!"},
            "expect": {"status": 400, "error_contains": "image"},
        },
        {
            "name": "act_not_png",
            "method": "POST",
            "path": "/act",
            "body": {
                "episode_id": "conf-f",
                "step": 0,
                "instruction": INSTRUCTION,
                "image": base64.b64encode(b"these bytes are not an image").decode("ascii"),
            },
            "expect": {"status": 400, "error_contains": "image"},
        },
        {
            "name": "act_negative_step",
            "method": "POST",
            "path": "/act",
            "body": act_body("conf-g", -1),
            "expect": {"status": 400, "error_contains": "step"},
        },
        {
            "name": "act_malformed_json",
            "method": "POST",
            "path": "/act",
            "raw_body": '{"episode_id": "conf-h", "step": 0,',
            "expect": {"status": 400, "error_contains": "JSON"},
        },
        {
            "name": "act_wrong_method",
            "method": "GET",
            "path": "/act",
            "expect": {"status": 405, "error_contains": "not allowed"},
        },
        {
            "name": "unknown_path",
            "method": "POST",
            "path": "/nope",
            "body": {},
            "expect": {"status": 404, "error_contains": "path"},
        },
        {
            "name": "reset_missing_episode_id",
            "method": "POST",
            "path": "/reset",
            "body": {"instruction": INSTRUCTION},
            "expect": {"status": 400, "error_contains": "episode_id"},
        },
        {
            "name": "act_bad_state_shape",
            "method": "POST",
            "path": "/act",
            "body": act_body("conf-i", 0, state={"position": [0.0, 1.0], "velocity": [0, 0, 0], "yaw": 0.0}),
            "expect": {"status": 400, "error_contains": "state.position"},
        },
        {
            "name": "act_fresh_nonzero_step",
            "method": "POST",
            "path": "/act",
            "body": act_body("conf-j", 3),
            "expect": {"status": 200, "body": ok_action, "ignore": ignore_ms},
        },
    ]

    for old in OUT.glob("*.json"):
        old.unlink()
    for i, fx in enumerate(fixtures):
        path = OUT / f"{i + 1:02d}_{fx['name']}.json"
        path.write_text(json.dumps(fx, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {len(fixtures)} fixtures to {OUT}")

    # Bare canonical request document used by the validate_request tests.
    req = ActRequest(
        episode_id="golden-1",
        step=0,
        instruction=INSTRUCTION,
        image_b64=img,
        state=PrivilegedState(position=(-2.0, 0.0, 1.5), velocity=(0.0, 0.0, 0.0), yaw=0.0),
    )
    bare = ROOT / "fixtures" / "act_request_1.json"
    bare.write_text(json.dumps(encode_request(req), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {bare}")


if __name__ == "__main__":
    main()
