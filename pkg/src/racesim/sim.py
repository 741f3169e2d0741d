"""Deterministic quadrotor dynamics under velocity commands, gate-passage
and collision geometry, and the event-driven episode executor.

Physics is a kinematic first-order velocity-tracking model integrated with
semi-implicit Euler at a fixed step.  Everything runs on a single simulated
clock; there is no wall-clock dependence anywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence

from .control_loop import Observation, drive
from .domain import (
    ActionCommand,
    DroneState,
    Gate,
    GateShape,
    GoalKind,
    TaskGoal,
    Track,
    ValidationError,
    Vec3,
    rotate_body_to_world,
    wrap_angle,
)
from .fpv_render import CameraParams, SceneBox, gate_plane_axes, render


class PolicyError(RuntimeError):
    """The policy returned a malformed action or failed; the episode aborts."""


@dataclass(frozen=True)
class SimConfig:
    """Physics and scheduling parameters of the simulated racer."""

    dt: float = 0.01
    tau_v: float = 0.3
    tau_yaw: float = 0.15
    v_max: float = 3.0
    omega_max: float = 2.0
    latency: float = 0.25
    timeout: float = 120.0
    seed: int = 0

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValidationError("dt: must be > 0")
        if self.dt > self.latency:
            raise ValidationError("dt: must be <= latency")
        if self.tau_v <= 0.0 or self.tau_yaw <= 0.0:
            raise ValidationError("tau_v/tau_yaw: must be > 0")
        if self.v_max <= 0.0:
            raise ValidationError("v_max: must be > 0")
        if self.timeout <= 0.0:
            raise ValidationError("timeout: must be > 0")


class EventKind(str, Enum):
    PASS = "pass"
    COLLISION = "collision"


@dataclass(frozen=True)
class PassEvent:
    t: float
    gate_id: str
    kind: EventKind
    crossing_point: Vec3


class Outcome(str, Enum):
    SUCCESS = "success"
    COLLISION = "collision"
    TIMEOUT = "timeout"
    OUT_OF_BOUNDS = "out_of_bounds"
    ABORTED = "aborted"


@dataclass
class EpisodeLog:
    """Complete record of one task execution."""

    instruction: str
    goal: TaskGoal
    states: list[DroneState]
    commands: list[tuple[float, ActionCommand]]
    events: list[PassEvent]
    outcome: Outcome
    request_times: list[float]
    response_times: list[float]
    abort_reason: str | None = None


def step(state: DroneState, cmd: ActionCommand, cfg: SimConfig) -> DroneState:
    """Advance the dynamics by one fixed step ``cfg.dt``.

    The command is rotated from body to world by the current yaw, then both
    linear velocity and yaw rate track their targets first-order
    (time constants ``tau_v``/``tau_yaw``).  Position and yaw integrate the
    updated rates (semi-implicit Euler).  Speed is capped at ``v_max``;
    the commanded yaw rate is clamped to ``omega_max`` before tracking.
    """
    dt = cfg.dt
    omega_cmd = min(cfg.omega_max, max(-cfg.omega_max, cmd.omega))
    tx, ty, tz = rotate_body_to_world((cmd.vx, cmd.vy, cmd.vz), state.yaw)

    vx, vy, vz = state.velocity
    a = dt / cfg.tau_v
    vx += a * (tx - vx)
    vy += a * (ty - vy)
    vz += a * (tz - vz)
    speed = math.sqrt(vx * vx + vy * vy + vz * vz)
    if speed > cfg.v_max:
        k = cfg.v_max / speed
        vx, vy, vz = vx * k, vy * k, vz * k

    yaw_rate = state.yaw_rate + (dt / cfg.tau_yaw) * (omega_cmd - state.yaw_rate)

    px, py, pz = state.position
    return DroneState(
        t=state.t + dt,
        position=(px + dt * vx, py + dt * vy, pz + dt * vz),
        velocity=(vx, vy, vz),
        yaw=wrap_angle(state.yaw + dt * yaw_rate),
        yaw_rate=yaw_rate,
    )


def _dot(a: Vec3, b: Vec3) -> float:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _sub(a: Vec3, b: Vec3) -> Vec3:
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def _aperture_contains(gate: Gate, qu: float, qw: float) -> bool:
    hw, hh = gate.half_width, gate.half_height
    if gate.shape == GateShape.SQUARE:
        return abs(qu) <= hw and abs(qw) <= hh
    if qw <= 0.0:
        return abs(qu) <= hw and qw >= -hh
    return qu * qu + qw * qw <= hw * hw


def _near_miss(gate: Gate, qu: float, qw: float) -> bool:
    """Inside the aperture's bounding box scaled by 2 about its center."""
    hw, hh = gate.half_width, gate.half_height
    if gate.shape == GateShape.SQUARE:
        return abs(qu) <= 2.0 * hw and abs(qw) <= 2.0 * hh
    # Arch bbox: u in [-hw, hw], w in [-hh, hw].
    w_mid = (hw - hh) / 2.0
    w_half = (hw + hh) / 2.0
    return abs(qu) <= 2.0 * hw and abs(qw - w_mid) <= 2.0 * w_half


def detect_gate_event(
    p0: Vec3,
    p1: Vec3,
    gate: Gate,
    t0: float = 0.0,
    t1: float = 0.0,
) -> Optional[PassEvent]:
    """Classify the segment p0->p1 against a gate plane.

    A signed crossing in the traversal direction (behind the plane to on or
    past it) is a Pass if it goes through the aperture, a Collision if it
    lands outside the aperture but within twice the aperture's bounding
    box, and nothing otherwise.  Reverse crossings return None.
    """
    s0 = _dot(_sub(p0, gate.center), gate.normal)
    s1 = _dot(_sub(p1, gate.center), gate.normal)
    if not (s0 < 0.0 <= s1):
        return None
    frac = s0 / (s0 - s1)
    q = (
        p0[0] + frac * (p1[0] - p0[0]),
        p0[1] + frac * (p1[1] - p0[1]),
        p0[2] + frac * (p1[2] - p0[2]),
    )
    u, w = gate_plane_axes(gate)
    rel = _sub(q, gate.center)
    qu = _dot(rel, u)
    qw = _dot(rel, w)
    t_cross = t0 + frac * (t1 - t0)
    if _aperture_contains(gate, qu, qw):
        return PassEvent(t=t_cross, gate_id=gate.id, kind=EventKind.PASS, crossing_point=q)
    if _near_miss(gate, qu, qw):
        return PassEvent(t=t_cross, gate_id=gate.id, kind=EventKind.COLLISION, crossing_point=q)
    return None


class GoalTracker:
    """Mutable gate-progress record owned by the episode runner.

    Translates Pass events into goal progress: which candidate gates have
    been passed, the sequence pointer for ordered goals, and completed lap
    count.  Single writer (the runner); policies may read it.
    """

    def __init__(self, track: Track, goal: TaskGoal):
        self.track = track
        self.goal = goal
        self.passed: list[str] = []
        self.out_of_order = 0
        self._pointer = 0
        self._laps_done = 0
        self._hit: set[str] = set()
        kind = goal.kind
        if kind == GoalKind.GATE_BY_SHAPE:
            self._candidates = tuple(g.id for g in track.gates if g.shape == goal.shape)
        elif kind == GoalKind.GATE_BY_SIDE:
            self._candidates = tuple(g.id for g in track.gates if g.side == goal.side)
        else:
            self._candidates = tuple(goal.gate_ids)
        if not self._candidates:
            raise ValidationError("goal: selector resolves to no gate on this track")
        for gid in self._candidates:
            track.gate_by_id(gid)  # raises KeyError on unknown ids

    @property
    def sequence(self) -> tuple[str, ...]:
        return self._candidates

    @property
    def laps_completed(self) -> int:
        return self._laps_done

    def on_pass(self, gate_id: str) -> None:
        self.passed.append(gate_id)
        kind = self.goal.kind
        if kind in (GoalKind.ORDERED_SEQUENCE, GoalKind.CIRCULAR_LAPS):
            if self._pointer < len(self._candidates) and gate_id == self._candidates[self._pointer]:
                self._pointer += 1
                if self._pointer == len(self._candidates):
                    self._laps_done += 1
                    if kind == GoalKind.CIRCULAR_LAPS and self._laps_done < self.goal.laps:
                        self._pointer = 0
            else:
                self.out_of_order += 1
        else:
            if gate_id in self._candidates:
                self._hit.add(gate_id)

    @property
    def satisfied(self) -> bool:
        kind = self.goal.kind
        if kind == GoalKind.ORDERED_SEQUENCE:
            return self._pointer == len(self._candidates)
        if kind == GoalKind.CIRCULAR_LAPS:
            return self._laps_done >= self.goal.laps
        return bool(self._hit)

    def current_target_id(self) -> str | None:
        """Gate the policy should aim for next, or None when done."""
        if self.satisfied:
            return None
        kind = self.goal.kind
        if kind in (GoalKind.ORDERED_SEQUENCE, GoalKind.CIRCULAR_LAPS):
            return self._candidates[self._pointer]
        for gid in self._candidates:
            if gid not in self._hit:
                return gid
        return None


class _EpisodeEngine:
    """Owns the simulated clock, physics stepping, and event detection."""

    def __init__(
        self,
        track: Track,
        goal: TaskGoal,
        cfg: SimConfig,
        start: DroneState,
        keep_out: Sequence[SceneBox],
        camera: CameraParams,
        instruction: str,
        episode_id: str,
    ):
        self.track = track
        self.goal = goal
        self.cfg = cfg
        self.camera = camera
        self.instruction = instruction
        self.episode_id = episode_id
        self.keep_out = tuple(keep_out)
        self.state = start
        self.tracker = GoalTracker(track, goal)
        self.held = ActionCommand.ZERO
        self.outcome: Outcome | None = None
        self.states: list[DroneState] = [start]
        self.commands: list[tuple[float, ActionCommand]] = []
        self.events: list[PassEvent] = []
        self.request_times: list[float] = []
        self.response_times: list[float] = []

        self.step_idx = 0
        self.latency_steps = max(1, round(cfg.latency / cfg.dt))
        # Episode limit measured from the start timestamp.
        self.timeout_steps = math.ceil(cfg.timeout / cfg.dt - 1e-9)

    # --- ports wired into the control loop -------------------------------

    def observe(self) -> Observation:
        st = self.state
        cam = self.camera
        track = self.track
        boxes = self.keep_out
        self.request_times.append(st.t)
        return Observation(
            episode_id=self.episode_id,
            step=len(self.request_times) - 1,
            t=st.t,
            instruction=self.instruction,
            state=st,
            frame_fn=lambda: render(st, track, cam, boxes),
            goal=self.goal,
            progress=self.tracker,
        )

    def act(self, cmd: ActionCommand) -> None:
        self.held = cmd
        self.commands.append((self.state.t, cmd))
        self.response_times.append(self.state.t)

    def wait_latency(self) -> bool:
        """Advance physics by one inference round trip.

        Returns False if the episode reached a terminal state mid-flight,
        in which case the pending response is discarded.  A response whose
        arrival coincides exactly with the timeout instant is still
        applied; the timeout is then observed by ``stop``.
        """
        for k in range(self.latency_steps):
            final_substep = k == self.latency_steps - 1
            if self._advance_one(check_timeout=not final_substep):
                return False
        return self.outcome is None

    def stop(self) -> bool:
        if self.outcome is not None:
            return True
        if self.step_idx >= self.timeout_steps:
            self.outcome = Outcome.TIMEOUT
            return True
        return False

    def clock(self) -> float:
        return self.state.t

    # --- internals --------------------------------------------------------

    def _in_keep_out(self, p: Vec3) -> bool:
        for b in self.keep_out:
            if all(b.min[i] <= p[i] <= b.max[i] for i in range(3)):
                return True
        return False

    def _advance_one(self, check_timeout: bool = True) -> bool:
        prev = self.state
        new = step(prev, self.held, self.cfg)
        self.step_idx += 1
        self.state = new
        self.states.append(new)

        collided = False
        for gate in self.track.gates:
            ev = detect_gate_event(prev.position, new.position, gate, prev.t, new.t)
            if ev is None:
                continue
            self.events.append(ev)
            if ev.kind == EventKind.PASS:
                self.tracker.on_pass(ev.gate_id)
            else:
                collided = True

        if collided:
            self.outcome = Outcome.COLLISION
        elif self.tracker.satisfied:
            self.outcome = Outcome.SUCCESS
        elif (
            new.position[2] < 0.0
            or not self.track.bounds.contains(new.position)
            or self._in_keep_out(new.position)
        ):
            self.outcome = Outcome.OUT_OF_BOUNDS
        elif check_timeout and self.step_idx >= self.timeout_steps:
            self.outcome = Outcome.TIMEOUT
        return self.outcome is not None


def run_episode(
    track: Track,
    goal: TaskGoal,
    policy: Callable[[Observation], ActionCommand],
    cfg: SimConfig,
    start: DroneState,
    keep_out: Sequence[SceneBox] = (),
    camera: CameraParams = CameraParams(),
    episode_id: str = "ep-000000",
) -> EpisodeLog:
    """Execute one episode on the simulated clock.

    An inference request is issued at t=0 with the current observation; its
    response arrives one latency later and is applied immediately, and the
    next request goes out at that same instant with the then-current
    observation.  Between arrivals the previous command is held (initially
    all zeros).  The episode ends at Success, Collision, OutOfBounds,
    Timeout, or Aborted (policy failure).
    """
    engine = _EpisodeEngine(track, goal, cfg, start, keep_out, camera, goal.raw_instruction, episode_id)
    reset = getattr(policy, "reset", None)
    if callable(reset):
        reset(episode_id, goal.raw_instruction)

    stats = drive(
        observe=engine.observe,
        act=engine.act,
        policy=policy,
        stop=engine.stop,
        wait_latency=engine.wait_latency,
        clock=engine.clock,
    )

    outcome = engine.outcome
    abort_reason = None
    if stats.aborted:
        outcome = Outcome.ABORTED
        abort_reason = stats.abort_reason
    elif outcome is None:  # defensive: loop exited without a terminal
        outcome = Outcome.TIMEOUT

    return EpisodeLog(
        instruction=goal.raw_instruction,
        goal=goal,
        states=engine.states,
        commands=engine.commands,
        events=engine.events,
        outcome=outcome,
        request_times=engine.request_times,
        response_times=engine.response_times,
        abort_reason=abort_reason,
    )
