"""Pluggable policies: the privileged scripted racing pilot, trivial
baselines, and the HTTP client adapter for remote policy servers.

The scripted pilot reads ground-truth state, not rendered frames; it exists
to validate the harness and generate datasets.  Learned models plug in
through :class:`RemotePolicy` over the wire protocol.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass
from pathlib import Path

import requests

from .control_loop import MalformedAction, MissingStateError, Observation, PolicyUnreachable
from .domain import (
    ActionCommand,
    DroneState,
    TaskGoal,
    Track,
    ValidationError,
    parse_instruction,
    rotate_world_to_body,
    wrap_angle,
)
from . import protocol
from .fpv_render import frame_to_png
from .sim import GoalTracker, detect_gate_event, EventKind

VZ_LIMIT = 1.0  # m/s, vertical command bound of the pilot


@dataclass(frozen=True)
class PilotGains:
    """Tuning of the scripted pure-pursuit pilot; all gains positive."""

    v_cruise: float = 1.2
    k_yaw: float = 1.5
    k_lateral: float = 0.8
    slow_radius: float = 1.5
    approach_offset: float = 1.0
    omega_max: float = 2.0

    def __post_init__(self):
        for name in ("v_cruise", "k_yaw", "k_lateral", "slow_radius", "approach_offset", "omega_max"):
            if getattr(self, name) <= 0.0:
                raise ValidationError(f"{name}: must be > 0")


def load_gains(path: str | Path) -> PilotGains:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return PilotGains(**doc)


def _clamp(x: float, lim: float) -> float:
    return min(lim, max(-lim, x))


def scripted_pilot(
    state: DroneState,
    track: Track,
    goal: TaskGoal,
    progress: GoalTracker,
    gains: PilotGains = PilotGains(),
) -> ActionCommand:
    """Pure-pursuit command toward the current goal gate.

    The pursued waypoint is the alignment point one ``approach_offset``
    before the gate along its normal; once the drone is near it (or already
    between it and the gate plane) the waypoint jumps to the mirror point
    one offset past the plane, so the crossing happens with speed in hand
    instead of decaying asymptotically at the center.  Forward speed
    follows the bearing cosine and slows inside ``slow_radius``; lateral
    and vertical errors are servoed independently.  Returns all zeros once
    the goal is complete.
    """
    target_id = progress.current_target_id()
    if target_id is None:
        return ActionCommand.ZERO
    gate = track.gate_by_id(target_id)

    n = gate.normal
    off = gains.approach_offset
    px, py, pz = state.position
    s = (
        (px - gate.center[0]) * n[0]
        + (py - gate.center[1]) * n[1]
        + (pz - gate.center[2]) * n[2]
    )
    align = (gate.center[0] - off * n[0], gate.center[1] - off * n[1], gate.center[2] - off * n[2])
    d_align = math.hypot(align[0] - px, align[1] - py)
    if s < -off and d_align > gains.slow_radius:
        wp = align
    else:
        # Final approach: aim one offset past the plane (through the gate).
        wp = (gate.center[0] + off * n[0], gate.center[1] + off * n[1], gate.center[2] + off * n[2])

    dx, dy, dz = wp[0] - px, wp[1] - py, wp[2] - pz
    dist_xy = math.hypot(dx, dy)
    beta = wrap_angle(math.atan2(dy, dx) - state.yaw) if dist_xy > 1e-9 else 0.0

    omega = _clamp(gains.k_yaw * beta, gains.omega_max)
    scale = min(1.0, dist_xy / gains.slow_radius)
    vx = gains.v_cruise * max(0.0, math.cos(beta)) * scale
    lateral = rotate_world_to_body((dx, dy, 0.0), state.yaw)[1]
    vy = _clamp(gains.k_lateral * lateral, gains.v_cruise)
    vz = _clamp(gains.k_lateral * dz, VZ_LIMIT)
    return ActionCommand(vx, vy, vz, omega)


class ZeroPolicy:
    """Always hovers."""

    name = "zero"

    def __call__(self, obs: Observation) -> ActionCommand:
        return ActionCommand.ZERO


class ConstantPolicy:
    """Returns the same action on every request (conformance test double)."""

    name = "constant"

    def __init__(self, action: tuple[float, float, float, float] = (0.5, 0.0, 0.0, 0.0)):
        self.action = ActionCommand(*action)

    def __call__(self, obs: Observation) -> ActionCommand:
        return self.action


class _PilotSession:
    """Per-episode state of a scripted policy running behind the protocol."""

    def __init__(self, track: Track, instruction: str):
        self.goal = parse_instruction(instruction, track)
        self.tracker = GoalTracker(track, self.goal)
        self.last_position = None


class ScriptedPolicy:
    """The scripted pilot wrapped as a policy.

    In-process (under the episode runner) it uses the privileged goal and
    progress carried in the observation.  Behind the protocol server it
    rebuilds both from the instruction and consecutive privileged states,
    detecting gate crossings itself, so the same oracle works end-to-end
    over the wire.
    """

    name = "scripted"

    def __init__(self, track: Track, gains: PilotGains = PilotGains()):
        self.track = track
        self.gains = gains
        self._sessions: dict[str, _PilotSession] = {}

    def reset(self, episode_id: str, instruction: str) -> None:
        self._sessions[episode_id] = _PilotSession(self.track, instruction)

    def _session(self, obs: Observation) -> _PilotSession:
        sess = self._sessions.get(obs.episode_id)
        if sess is None:
            sess = _PilotSession(self.track, obs.instruction)
            self._sessions[obs.episode_id] = sess
        return sess

    def __call__(self, obs: Observation) -> ActionCommand:
        if obs.state is None:
            raise MissingStateError("state: scripted policy requires the privileged state field")
        if obs.goal is not None and obs.progress is not None:
            return scripted_pilot(obs.state, self.track, obs.goal, obs.progress, self.gains)
        sess = self._session(obs)
        pos = obs.state.position
        if sess.last_position is not None:
            for gate in self.track.gates:
                ev = detect_gate_event(sess.last_position, pos, gate)
                if ev is not None and ev.kind == EventKind.PASS:
                    sess.tracker.on_pass(ev.gate_id)
        sess.last_position = pos
        return scripted_pilot(obs.state, self.track, sess.goal, sess.tracker, self.gains)


class RemotePolicy:
    """Adapts the wire protocol to the in-process policy interface."""

    name = "remote"

    def __init__(self, endpoint: str, timeout: float = 2.0, send_state: bool = True):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.send_state = send_state
        self._session = requests.Session()

    def reset(self, episode_id: str, instruction: str) -> None:
        try:
            r = self._session.post(
                f"{self.endpoint}/reset",
                json={"episode_id": episode_id, "instruction": instruction},
                timeout=self.timeout,
            )
        except requests.RequestException as e:
            raise PolicyUnreachable(f"POST /reset failed: {e}") from None
        if r.status_code != 200:
            raise PolicyUnreachable(f"POST /reset returned {r.status_code}: {r.text[:200]}")

    def __call__(self, obs: Observation) -> ActionCommand:
        frame = obs.frame
        if frame is None:
            raise MalformedAction("remote policy requires a frame in the observation")
        body = {
            "episode_id": obs.episode_id,
            "step": obs.step,
            "instruction": obs.instruction,
            "image": base64.b64encode(frame_to_png(frame)).decode("ascii"),
        }
        if self.send_state and obs.state is not None:
            st = obs.state
            body["state"] = {
                "position": list(st.position),
                "velocity": list(st.velocity),
                "yaw": st.yaw,
            }
        try:
            r = self._session.post(f"{self.endpoint}/act", json=body, timeout=self.timeout)
        except requests.RequestException as e:
            raise PolicyUnreachable(f"POST /act failed: {e}") from None
        if r.status_code != 200:
            raise PolicyUnreachable(f"POST /act returned {r.status_code}: {r.text[:200]}")
        try:
            resp = protocol.validate_response(r.content)
        except protocol.SchemaError as e:
            raise MalformedAction(str(e)) from None
        return ActionCommand(*resp.action)


def make_policy(spec_str: str, track: Track, gains: PilotGains = PilotGains()):
    """Build a policy from a CLI selector: scripted | zero | constant | remote:<URL>."""
    if spec_str == "scripted":
        return ScriptedPolicy(track, gains)
    if spec_str == "zero":
        return ZeroPolicy()
    if spec_str == "constant":
        return ConstantPolicy()
    if spec_str.startswith("remote:"):
        return RemotePolicy(spec_str.split(":", 1)[1])
    raise ValueError(f"unknown policy selector {spec_str!r}")
