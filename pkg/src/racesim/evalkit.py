"""Flight-metric computation, lap accounting, the four-axis generalization
suite runner, and trajectory/plot export.

Conventions fixed here: speed statistics use the population standard
deviation; yaw-rate statistics are over absolute values (trajectories turn
both ways, signed means would cancel); axis scores are percentages rounded
half-up to one decimal.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .domain import (
    DroneState,
    GateShape,
    Track,
    UnknownInstruction,
    UnresolvableSelector,
    ValidationError,
    load_track,
    parse_instruction,
    rotate_body_to_world,
)
from .fpv_render import SceneBox, gate_plane_axes
from .sim import EpisodeLog, EventKind, Outcome, PassEvent, SimConfig, run_episode


class TooShort(ValueError):
    """Fewer than two states: no metrics to compute."""


class EmptyAxis(ValueError):
    """An axis with zero trials cannot be scored."""


@dataclass(frozen=True)
class FlightMetrics:
    mean_speed: float
    max_speed: float
    std_speed: float
    mean_abs_yaw_rate: float
    std_abs_yaw_rate: float
    duration: float
    gates_passed: int
    collisions: int
    laps_completed: int

    def as_dict(self) -> dict:
        return {
            "mean_speed": self.mean_speed,
            "max_speed": self.max_speed,
            "std_speed": self.std_speed,
            "mean_abs_yaw_rate": self.mean_abs_yaw_rate,
            "std_abs_yaw_rate": self.std_abs_yaw_rate,
            "duration": self.duration,
            "gates_passed": self.gates_passed,
            "collisions": self.collisions,
            "laps_completed": self.laps_completed,
        }


def flight_metrics(log: EpisodeLog, track: Track) -> FlightMetrics:
    """Descriptive statistics over the logged trajectory.

    Speeds are 3D Euclidean norms per state; std is the population standard
    deviation.  Gate/collision counts come from the event list, laps from
    :func:`detect_laps` when the track is ordered.
    """
    if len(log.states) < 2:
        raise TooShort("need at least 2 states")
    v = np.asarray([s.velocity for s in log.states], dtype=np.float64)
    speeds = np.sqrt((v * v).sum(axis=1))
    yaw_rates = np.abs(np.asarray([s.yaw_rate for s in log.states], dtype=np.float64))
    passes = sum(1 for e in log.events if e.kind == EventKind.PASS)
    collisions = sum(1 for e in log.events if e.kind == EventKind.COLLISION)
    laps = detect_laps(log.events, track) if track.ordered else 0
    return FlightMetrics(
        mean_speed=float(speeds.mean()),
        max_speed=float(speeds.max()),
        std_speed=float(speeds.std()),
        mean_abs_yaw_rate=float(yaw_rates.mean()),
        std_abs_yaw_rate=float(yaw_rates.std()),
        duration=float(log.states[-1].t - log.states[0].t),
        gates_passed=passes,
        collisions=collisions,
        laps_completed=laps,
    )


def lap_walk(events: Sequence[PassEvent], track: Track) -> tuple[int, int]:
    """Sequence-pointer walk over Pass events.

    Returns ``(laps, out_of_order)``: complete in-order repetitions of the
    full gate sequence, and the number of passes that did not advance the
    pointer.
    """
    if not track.ordered:
        raise ValidationError("track: lap counting requires an ordered track")
    order = [g.id for g in track.gates]
    pointer = 0
    laps = 0
    out_of_order = 0
    for e in events:
        if e.kind != EventKind.PASS:
            continue
        if e.gate_id == order[pointer]:
            pointer += 1
            if pointer == len(order):
                laps += 1
                pointer = 0
        else:
            out_of_order += 1
    return laps, out_of_order


def detect_laps(events: Sequence[PassEvent], track: Track) -> int:
    return lap_walk(events, track)[0]


def round1_half_up(x: float) -> float:
    """One-decimal round-half-up: 45.45 -> 45.5 exactly."""
    return math.floor(x * 10.0 + 0.5) / 10.0


class Axis(str, Enum):
    VISUAL = "visual"
    MOTION = "motion"
    PHYSICAL = "physical"
    SEMANTIC = "semantic"


class SuccessRuleKind(str, Enum):
    PASS_TARGET_GATE = "pass_target_gate"
    PASS_ALL_ORDERED = "pass_all_ordered"
    COMPLETE_LAPS = "complete_laps"


@dataclass(frozen=True)
class SuccessRule:
    kind: SuccessRuleKind
    laps: int = 1


@dataclass(frozen=True)
class Perturbation:
    """Structured description of what a trial changes relative to training.

    Which fields may be set depends on the trial's axis: distractor boxes
    for visual, start placement for motion, gate resizing/reshaping for
    physical, novel phrasing for semantic.
    """

    distractor_boxes: tuple[SceneBox, ...] = ()
    start_offset: tuple[float, float, float] | None = None
    start_yaw: float | None = None
    gate_scale: float | None = None
    gate_shape_swap: bool = False
    phrasing: str | None = None


_AXIS_FIELDS = {
    Axis.VISUAL: {"distractor_boxes"},
    Axis.MOTION: {"start_offset", "start_yaw"},
    Axis.PHYSICAL: {"gate_scale", "gate_shape_swap"},
    Axis.SEMANTIC: {"phrasing"},
}


@dataclass(frozen=True)
class TrialSpec:
    name: str
    axis: Axis
    track: str
    instruction: str
    start: DroneState
    perturbation: Perturbation
    success_rule: SuccessRule
    timeout: float

    def __post_init__(self):
        allowed = _AXIS_FIELDS[self.axis]
        set_fields = set()
        p = self.perturbation
        if p.distractor_boxes:
            set_fields.add("distractor_boxes")
        if p.start_offset is not None:
            set_fields.add("start_offset")
        if p.start_yaw is not None:
            set_fields.add("start_yaw")
        if p.gate_scale is not None:
            set_fields.add("gate_scale")
        if p.gate_shape_swap:
            set_fields.add("gate_shape_swap")
        if p.phrasing is not None:
            set_fields.add("phrasing")
        extra = set_fields - allowed
        if extra:
            raise ValidationError(
                f"perturbation: fields {sorted(extra)} not consistent with axis {self.axis.value!r}"
            )


@dataclass
class TrialResult:
    name: str
    axis: Axis
    success: bool
    outcome: str
    aborted: bool = False
    note: str = ""


@dataclass(frozen=True)
class AxisScore:
    axis: Axis
    trials: int
    successes: int
    score: float

    def __post_init__(self):
        if not 0 <= self.successes <= self.trials:
            raise ValidationError("successes: must be within [0, trials]")
        expect = round1_half_up(100.0 * self.successes / self.trials) if self.trials else 0.0
        if abs(self.score - expect) > 1e-9:
            raise ValidationError(f"score: must equal round1(100*successes/trials) = {expect}")


def score_axis(axis: Axis, successes: int, trials: int) -> AxisScore:
    if trials <= 0:
        raise EmptyAxis(f"axis {axis.value!r} has no trials")
    return AxisScore(axis=axis, trials=trials, successes=successes,
                     score=round1_half_up(100.0 * successes / trials))


def aggregate_scores(results: Sequence[TrialResult]) -> list[AxisScore]:
    """Per-axis success percentages, one decimal, round-half-up.

    Axes appear in the fixed visual/motion/physical/semantic order;
    invariant under permutation of the trial list.
    """
    out = []
    for axis in Axis:
        rs = [r for r in results if r.axis == axis]
        if not rs:
            continue
        out.append(score_axis(axis, sum(1 for r in rs if r.success), len(rs)))
    return out


# Published comparison rows rendered alongside suite reports (fixture
# constants only; never recomputed here).
REFERENCE_ROWS = {
    "openvla": {"visual": 87.0, "motion": 60.0, "physical": 76.7, "semantic": 36.3},
    "rt2": {"visual": 52.0, "motion": 55.0, "physical": 26.7, "semantic": 38.8},
}


def _apply_physical(track: Track, p: Perturbation) -> Track:
    gates = []
    for g in track.gates:
        if p.gate_scale is not None:
            g = replace(g, half_width=g.half_width * p.gate_scale, half_height=g.half_height * p.gate_scale)
        if p.gate_shape_swap:
            g = replace(g, shape=GateShape.SQUARE if g.shape == GateShape.ARCH else GateShape.ARCH)
        gates.append(g)
    return replace(track, gates=tuple(gates))


def judge_success(log: EpisodeLog, track: Track, rule: SuccessRule) -> bool:
    if rule.kind == SuccessRuleKind.PASS_TARGET_GATE:
        return log.outcome == Outcome.SUCCESS
    if rule.kind == SuccessRuleKind.PASS_ALL_ORDERED:
        return log.outcome == Outcome.SUCCESS and lap_walk(log.events, track)[0] >= 1
    if rule.kind == SuccessRuleKind.COMPLETE_LAPS:
        return detect_laps(log.events, track) >= rule.laps
    raise ValueError(f"unknown success rule {rule.kind!r}")


def run_trial(
    spec: TrialSpec,
    policy_factory: Callable[[Track], object],
    cfg: SimConfig = SimConfig(),
    base_dir: str | Path = ".",
) -> TrialResult:
    """Execute one trial: load and perturb the track, parse the instruction,
    run the episode, and judge it by the trial's success rule."""
    track = load_track(Path(base_dir) / spec.track)
    track = _apply_physical(track, spec.perturbation)
    start = spec.start
    p = spec.perturbation
    if p.start_offset is not None:
        start = replace(
            start,
            position=tuple(start.position[i] + p.start_offset[i] for i in range(3)),
        )
    if p.start_yaw is not None:
        start = replace(start, yaw=p.start_yaw)
    try:
        goal = parse_instruction(spec.instruction, track)
    except (UnknownInstruction, UnresolvableSelector) as e:
        return TrialResult(
            name=spec.name, axis=spec.axis, success=False,
            outcome="unparsed", aborted=True, note=str(e),
        )
    cfg = replace(cfg, timeout=spec.timeout)
    log = run_episode(
        track,
        goal,
        policy_factory(track),
        cfg,
        start,
        keep_out=p.distractor_boxes,
        episode_id=f"trial-{spec.name}",
    )
    if log.outcome == Outcome.ABORTED:
        return TrialResult(
            name=spec.name, axis=spec.axis, success=False,
            outcome=log.outcome.value, aborted=True, note=log.abort_reason or "",
        )
    return TrialResult(
        name=spec.name,
        axis=spec.axis,
        success=judge_success(log, track, spec.success_rule),
        outcome=log.outcome.value,
    )


def run_generalization_suite(
    suite: Sequence[TrialSpec],
    policy_factory: Callable[[Track], object],
    cfg: SimConfig = SimConfig(),
    base_dir: str | Path = ".",
) -> tuple[list[TrialResult], list[AxisScore]]:
    results = [run_trial(t, policy_factory, cfg, base_dir) for t in suite]
    return results, aggregate_scores(results)


# --- suite file parsing ------------------------------------------------------


def _trial_from_dict(doc: dict, idx: int) -> TrialSpec:
    path = f"trials[{idx}]"
    try:
        p = doc.get("perturbation", {})
        boxes = tuple(
            SceneBox(min=tuple(b["min"]), max=tuple(b["max"]), color=tuple(b.get("color", (255, 200, 0))))
            for b in p.get("distractor_boxes", ())
        )
        start = doc["start"]
        rule = doc["success_rule"]
        return TrialSpec(
            name=doc["name"],
            axis=Axis(doc["axis"]),
            track=doc["track"],
            instruction=doc["instruction"],
            start=DroneState(
                t=0.0,
                position=tuple(start["position"]),
                velocity=tuple(start.get("velocity", (0.0, 0.0, 0.0))),
                yaw=float(start.get("yaw", 0.0)),
                yaw_rate=0.0,
            ),
            perturbation=Perturbation(
                distractor_boxes=boxes,
                start_offset=tuple(p["start_offset"]) if "start_offset" in p else None,
                start_yaw=p.get("start_yaw"),
                gate_scale=p.get("gate_scale"),
                gate_shape_swap=bool(p.get("gate_shape_swap", False)),
                phrasing=p.get("phrasing"),
            ),
            success_rule=SuccessRule(
                kind=SuccessRuleKind(rule["kind"]),
                laps=int(rule.get("laps", 1)),
            ),
            timeout=float(doc["timeout"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ValidationError):
            raise
        raise ValidationError(f"{path}: {e}") from None


def load_suite(path: str | Path) -> list[TrialSpec]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, list):
        raise ValidationError("$: suite file must be a JSON list of trials")
    return [_trial_from_dict(t, i) for i, t in enumerate(doc)]


# --- plot export --------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.4f}"


def export_plots(log: EpisodeLog, track: Track, out_dir: str | Path) -> list[Path]:
    """Write trajectory.csv, actions.csv, and a top-down SVG of the run.

    The SVG shows the XY path, one line-pair group per gate (aperture span
    plus traversal tick), and one command-direction arrow per applied
    action.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    traj = out_dir / "trajectory.csv"
    with traj.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["t", "x", "y", "z", "yaw", "speed", "yaw_rate"])
        for s in log.states:
            w.writerow([_fmt(s.t), _fmt(s.position[0]), _fmt(s.position[1]), _fmt(s.position[2]),
                        _fmt(s.yaw), _fmt(s.speed), _fmt(s.yaw_rate)])
    written.append(traj)

    acts = out_dir / "actions.csv"
    with acts.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["t", "vx", "vy", "vz", "omega"])
        for t, cmd in log.commands:
            w.writerow([_fmt(t), _fmt(cmd.vx), _fmt(cmd.vy), _fmt(cmd.vz), _fmt(cmd.omega)])
    written.append(acts)

    svg = out_dir / "topdown.svg"
    svg.write_text(_topdown_svg(log, track), encoding="utf-8")
    written.append(svg)
    return written


def _topdown_svg(log: EpisodeLog, track: Track, size: int = 640) -> str:
    xs = [s.position[0] for s in log.states] + [g.center[0] for g in track.gates]
    ys = [s.position[1] for s in log.states] + [g.center[1] for g in track.gates]
    pad = 1.0
    x0, x1 = min(xs) - pad, max(xs) + pad
    y0, y1 = min(ys) - pad, max(ys) + pad
    scale = size / max(x1 - x0, y1 - y0)

    def sx(x: float) -> str:
        return _fmt((x - x0) * scale)

    def sy(y: float) -> str:
        return _fmt((y1 - y) * scale)  # world +Y is up in the plot

    w = _fmt((x1 - x0) * scale)
    h = _fmt((y1 - y0) * scale)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        f'<rect width="{w}" height="{h}" fill="white"/>',
    ]

    pts = " ".join(f"{sx(s.position[0])},{sy(s.position[1])}" for s in log.states)
    parts.append(f'<polyline class="path" points="{pts}" fill="none" stroke="gray" stroke-width="1.5"/>')

    for g in track.gates:
        u, _ = gate_plane_axes(g)
        a = (g.center[0] - g.half_width * u[0], g.center[1] - g.half_width * u[1])
        b = (g.center[0] + g.half_width * u[0], g.center[1] + g.half_width * u[1])
        tick = (g.center[0] + 0.4 * g.normal[0], g.center[1] + 0.4 * g.normal[1])
        parts.append(
            f'<g class="gate" data-id="{g.id}">'
            f'<line x1="{sx(a[0])}" y1="{sy(a[1])}" x2="{sx(b[0])}" y2="{sy(b[1])}" '
            f'stroke="dimgray" stroke-width="3"/>'
            f'<line x1="{sx(g.center[0])}" y1="{sy(g.center[1])}" x2="{sx(tick[0])}" y2="{sy(tick[1])}" '
            f'stroke="dimgray" stroke-width="1"/>'
            f"</g>"
        )

    # One arrow per applied action, drawn at the state nearest its timestamp.
    state_ts = [s.t for s in log.states]
    arrow_len = 0.5
    for t, cmd in log.commands:
        i = min(range(len(state_ts)), key=lambda j: abs(state_ts[j] - t))
        s = log.states[i]
        d = rotate_body_to_world((cmd.vx, cmd.vy, cmd.vz), s.yaw)
        mag = math.hypot(d[0], d[1])
        if mag < 1e-9:
            dx, dy = 0.0, 0.0
        else:
            dx, dy = arrow_len * d[0] / mag, arrow_len * d[1] / mag
        tip = (s.position[0] + dx, s.position[1] + dy)
        parts.append(
            f'<g class="arrow">'
            f'<line x1="{sx(s.position[0])}" y1="{sy(s.position[1])}" x2="{sx(tip[0])}" y2="{sy(tip[1])}" '
            f'stroke="red" stroke-width="1"/>'
            f"</g>"
        )

    parts.append("</svg>")
    return "\n".join(parts) + "\n"
