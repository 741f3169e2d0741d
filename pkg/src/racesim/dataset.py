"""Episode recording at sensor rates, multi-rate synchronization, action
labels, and RLDS-style export.

States are sampled at 60 Hz and frames at 30 Hz by default (both taken off
the shared physics grid, so a well-formed recording aligns exactly).  The
on-disk dataset is a plain, diffable layout: JSON Lines steps plus PNG
frames, with the RLDS episode markers preserved verbatim.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .action_codec import ActionBounds, fit_bounds, write_stats
from .domain import (
    ActionCommand,
    DroneState,
    Track,
    ValidationError,
    rotate_world_to_body,
    track_to_dict,
    wrap_angle,
)
from .fpv_render import CameraParams, SceneBox, frame_to_png, render
from .sim import EpisodeLog, Outcome, SimConfig

STATE_RATE = 60.0  # Hz
FRAME_RATE = 30.0  # Hz
SYNC_TOL = 1.0 / 120.0  # seconds; half the state-sampling period

# The physics step that makes both sensor grids exact subsets of the
# simulation grid: 120 Hz = lcm(60, 30).
RECORD_DT = 1.0 / 120.0


class EmptyEpisode(ValueError):
    """No frame survived synchronization."""


@dataclass(frozen=True)
class FrameStamp:
    """One captured frame: timestamp plus encoded PNG bytes."""

    t: float
    png: bytes


@dataclass
class RawLog:
    """Sensor-rate recording of one episode before synchronization."""

    states: list[DroneState]
    frames: list[FrameStamp]
    instruction: str
    outcome: str = Outcome.TIMEOUT.value
    track_name: str = ""


@dataclass(frozen=True)
class Step:
    """One synchronized dataset step (frame-aligned)."""

    t: float
    image_ref: str
    position: tuple[float, float, float]
    velocity: tuple[float, float, float]
    yaw: float
    yaw_rate: float
    action: ActionCommand
    is_first: bool
    is_last: bool
    is_terminal: bool


@dataclass
class SyncResult:
    steps: list[Step]
    dropped_frames: int
    max_abs_dt: float


@dataclass
class DatasetManifest:
    episodes: int
    steps: int
    images: int
    bounds: ActionBounds
    instruction_histogram: dict[str, int]


def yaw_rate_from_angles(psi0: float, psi1: float, dt: float) -> float:
    """Shortest signed angular difference per unit time, rad/s."""
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    return wrap_angle(psi1 - psi0) / dt


def synchronize(raw: RawLog, tol: float = SYNC_TOL, terminal: bool = True) -> SyncResult:
    """Match each frame to its nearest-in-time state sample.

    Frames farther than ``tol`` from every state are dropped and counted.
    The action label is the matched state's world velocity rotated into the
    body frame at that state's yaw, with omega taken from its yaw rate.
    """
    if not raw.states:
        raise EmptyEpisode("raw log has no states")
    state_ts = np.asarray([s.t for s in raw.states])
    matched: list[tuple[FrameStamp, DroneState, float]] = []
    dropped = 0
    max_dt = 0.0
    for fr in raw.frames:
        idx = int(np.searchsorted(state_ts, fr.t))
        best, best_dt = None, math.inf
        for j in (idx - 1, idx):
            if 0 <= j < len(state_ts):
                d = abs(state_ts[j] - fr.t)
                if d < best_dt:
                    best, best_dt = j, d
        if best is None or best_dt > tol:
            dropped += 1
            continue
        max_dt = max(max_dt, best_dt)
        matched.append((fr, raw.states[best], best_dt))
    if not matched:
        raise EmptyEpisode("no frame has a state sample within tolerance")

    steps = []
    n = len(matched)
    for i, (fr, st, _) in enumerate(matched):
        body_v = rotate_world_to_body(st.velocity, st.yaw)
        action = ActionCommand(body_v[0], body_v[1], body_v[2], st.yaw_rate)
        is_last = i == n - 1
        steps.append(
            Step(
                t=fr.t,
                image_ref=f"frames/{i:06d}.png",
                position=st.position,
                velocity=st.velocity,
                yaw=st.yaw,
                yaw_rate=st.yaw_rate,
                action=action,
                is_first=i == 0,
                is_last=is_last,
                is_terminal=is_last and terminal,
            )
        )
    return SyncResult(steps=steps, dropped_frames=dropped, max_abs_dt=max_dt)


def sample_raw_log(
    log: EpisodeLog,
    track: Track,
    cfg: SimConfig,
    camera: CameraParams = CameraParams(),
    state_rate: float = STATE_RATE,
    frame_rate: float = FRAME_RATE,
    boxes: Sequence[SceneBox] = (),
    duration: float | None = None,
) -> RawLog:
    """Downsample an episode log to sensor rates and render its frames.

    Requires the physics grid to contain both sensor grids, i.e.
    ``1/(rate*dt)`` integral for both rates (the recorder runs at
    ``RECORD_DT`` to guarantee this).  With ``duration`` set, sensors
    sample the half-open window [0, duration) relative to the first state,
    so a timed recording of T seconds yields exactly T*rate samples.
    """
    state_stride = 1.0 / (state_rate * cfg.dt)
    frame_stride = 1.0 / (frame_rate * cfg.dt)
    if abs(state_stride - round(state_stride)) > 1e-9 or abs(frame_stride - round(frame_stride)) > 1e-9:
        raise ValidationError(f"dt: {cfg.dt} does not divide the {state_rate}/{frame_rate} Hz sensor grids")
    state_stride = round(state_stride)
    frame_stride = round(frame_stride)
    t0 = log.states[0].t
    cutoff = math.inf if duration is None else t0 + duration
    states = [s for i, s in enumerate(log.states) if i % state_stride == 0 and s.t < cutoff]
    frames = [
        FrameStamp(t=s.t, png=frame_to_png(render(s, track, camera, boxes)))
        for i, s in enumerate(log.states)
        if i % frame_stride == 0 and s.t < cutoff
    ]
    return RawLog(
        states=states,
        frames=frames,
        instruction=log.instruction,
        outcome=log.outcome.value,
        track_name=track.name,
    )


# --- raw on-disk layout (recorder output, exporter input) ------------------


def _state_row(s: DroneState) -> list:
    return [s.t, *s.position, *s.velocity, s.yaw, s.yaw_rate]


def _state_from_row(row) -> DroneState:
    return DroneState(
        t=row[0], position=tuple(row[1:4]), velocity=tuple(row[4:7]), yaw=row[7], yaw_rate=row[8]
    )


def save_raw_episode(raw: RawLog, ep_dir: str | Path) -> None:
    ep_dir = Path(ep_dir)
    (ep_dir / "frames").mkdir(parents=True, exist_ok=True)
    frame_index = []
    for i, fr in enumerate(raw.frames):
        name = f"frames/{i:06d}.png"
        (ep_dir / name).write_bytes(fr.png)
        frame_index.append({"t": fr.t, "file": name})
    doc = {
        "instruction": raw.instruction,
        "outcome": raw.outcome,
        "track": raw.track_name,
        "state_rate": STATE_RATE,
        "frame_rate": FRAME_RATE,
        "states": [_state_row(s) for s in raw.states],
        "frames": frame_index,
    }
    (ep_dir / "raw.json").write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


def load_raw_episode(ep_dir: str | Path) -> RawLog:
    ep_dir = Path(ep_dir)
    doc = json.loads((ep_dir / "raw.json").read_text(encoding="utf-8"))
    frames = [
        FrameStamp(t=fr["t"], png=(ep_dir / fr["file"]).read_bytes()) for fr in doc["frames"]
    ]
    return RawLog(
        states=[_state_from_row(r) for r in doc["states"]],
        frames=frames,
        instruction=doc["instruction"],
        outcome=doc["outcome"],
        track_name=doc["track"],
    )


def list_raw_episodes(raw_dir: str | Path) -> list[Path]:
    eps = sorted(p for p in (Path(raw_dir) / "episodes").iterdir() if (p / "raw.json").exists())
    if not eps:
        raise FileNotFoundError(f"no raw episodes under {raw_dir}")
    return eps


# --- RLDS-style export ------------------------------------------------------


@dataclass
class SyncedEpisode:
    """Everything the exporter needs for one episode."""

    steps: list[Step]
    instruction: str
    outcome: str
    track_name: str
    frame_pngs: list[bytes]


def _validate_steps(steps: list[Step], path: str) -> None:
    if not steps:
        raise ValidationError(f"{path}: episode has no steps")
    firsts = sum(1 for s in steps if s.is_first)
    lasts = sum(1 for s in steps if s.is_last)
    if firsts != 1:
        raise ValidationError(f"{path}: exactly one step must have is_first, found {firsts}")
    if lasts != 1:
        raise ValidationError(f"{path}: exactly one step must have is_last, found {lasts}")
    if len(steps) != len({s.image_ref for s in steps}):
        raise ValidationError(f"{path}: duplicate image refs")


def _step_to_json(s: Step) -> dict:
    return {
        "t": s.t,
        "image": s.image_ref,
        "position": list(s.position),
        "velocity": list(s.velocity),
        "yaw": s.yaw,
        "yaw_rate": s.yaw_rate,
        "action": list(s.action.as_tuple()),
        "is_first": s.is_first,
        "is_last": s.is_last,
        "is_terminal": s.is_terminal,
    }


def step_from_json(doc: dict) -> Step:
    return Step(
        t=doc["t"],
        image_ref=doc["image"],
        position=tuple(doc["position"]),
        velocity=tuple(doc["velocity"]),
        yaw=doc["yaw"],
        yaw_rate=doc["yaw_rate"],
        action=ActionCommand(*doc["action"]),
        is_first=doc["is_first"],
        is_last=doc["is_last"],
        is_terminal=doc["is_terminal"],
    )


def export_rlds(episodes: list[SyncedEpisode], out_dir: str | Path) -> DatasetManifest:
    """Write the dataset layout: manifest, stats, per-episode steps and frames.

    Deterministic given input ordering; bounds are fitted over every action
    label in the dataset.
    """
    out_dir = Path(out_dir)
    if not episodes:
        raise ValidationError("episodes: nothing to export")
    all_actions: list[ActionCommand] = []
    histogram: dict[str, int] = {}
    total_steps = 0

    for i, ep in enumerate(episodes):
        _validate_steps(ep.steps, f"episodes[{i}]")
        if len(ep.frame_pngs) != len(ep.steps):
            raise ValidationError(f"episodes[{i}]: one frame per step required")
        all_actions.extend(s.action for s in ep.steps)
        histogram[ep.instruction] = histogram.get(ep.instruction, 0) + 1
        total_steps += len(ep.steps)

    bounds = fit_bounds(all_actions)
    for i, ep in enumerate(episodes):
        ep_dir = out_dir / "episodes" / f"ep_{i:06d}"
        (ep_dir / "frames").mkdir(parents=True, exist_ok=True)
        meta = {
            "language_instruction": ep.instruction,
            "outcome": ep.outcome,
            "track": ep.track_name,
        }
        (ep_dir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        with (ep_dir / "steps.jsonl").open("w", encoding="utf-8") as f:
            for s in ep.steps:
                f.write(json.dumps(_step_to_json(s), sort_keys=True) + "\n")
        for s, png in zip(ep.steps, ep.frame_pngs):
            (ep_dir / s.image_ref).write_bytes(png)

    manifest = DatasetManifest(
        episodes=len(episodes),
        steps=total_steps,
        images=total_steps,
        bounds=bounds,
        instruction_histogram=histogram,
    )
    write_stats(out_dir / "stats.json", bounds)
    (out_dir / "manifest.json").write_text(
        json.dumps(
            {
                "episodes": manifest.episodes,
                "steps": manifest.steps,
                "images": manifest.images,
                "bounds": {"lo": list(bounds.lo), "hi": list(bounds.hi)},
                "instruction_histogram": dict(sorted(histogram.items())),
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    return manifest


def export_rlds_dir(raw_dir: str | Path, out_dir: str | Path, tol: float = SYNC_TOL) -> DatasetManifest:
    """File-based export: read a recorder output tree, align, and write RLDS."""
    episodes = []
    for ep_path in list_raw_episodes(raw_dir):
        raw = load_raw_episode(ep_path)
        terminal = raw.outcome in (Outcome.SUCCESS.value, Outcome.COLLISION.value, Outcome.OUT_OF_BOUNDS.value)
        sync = synchronize(raw, tol=tol, terminal=terminal)
        kept = [raw.frames[i] for i in _kept_frame_indices(raw, tol)]
        episodes.append(
            SyncedEpisode(
                steps=sync.steps,
                instruction=raw.instruction,
                outcome=raw.outcome,
                track_name=raw.track_name,
                frame_pngs=[fr.png for fr in kept],
            )
        )
    return export_rlds(episodes, out_dir)


def _kept_frame_indices(raw: RawLog, tol: float) -> list[int]:
    state_ts = np.asarray([s.t for s in raw.states])
    kept = []
    for i, fr in enumerate(raw.frames):
        idx = int(np.searchsorted(state_ts, fr.t))
        best_dt = math.inf
        for j in (idx - 1, idx):
            if 0 <= j < len(state_ts):
                best_dt = min(best_dt, abs(state_ts[j] - fr.t))
        if best_dt <= tol:
            kept.append(i)
    return kept


# --- single-episode persistence (sim run / eval track output) ---------------


def save_episode(
    log: EpisodeLog,
    track: Track,
    cfg: SimConfig,
    out_dir: str | Path,
    camera: CameraParams = CameraParams(),
    boxes: Sequence[SceneBox] = (),
) -> None:
    """Persist one episode as a dataset-format directory.

    Layout: ``meta.json`` + ``steps.jsonl`` + ``frames/*.png`` as in the
    exported dataset, plus ``events.json`` with the outcome, gate events,
    applied commands, and request/response times.
    """
    out_dir = Path(out_dir)
    raw = sample_raw_log(log, track, cfg, camera, boxes=boxes)
    terminal = log.outcome in (Outcome.SUCCESS, Outcome.COLLISION, Outcome.OUT_OF_BOUNDS)
    sync = synchronize(raw, terminal=terminal)
    (out_dir / "frames").mkdir(parents=True, exist_ok=True)
    meta = {
        "language_instruction": log.instruction,
        "outcome": log.outcome.value,
        "track": track.name,
    }
    (out_dir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    with (out_dir / "steps.jsonl").open("w", encoding="utf-8") as f:
        for s in sync.steps:
            f.write(json.dumps(_step_to_json(s), sort_keys=True) + "\n")
    kept = [raw.frames[i] for i in _kept_frame_indices(raw, SYNC_TOL)]
    for s, fr in zip(sync.steps, kept):
        (out_dir / s.image_ref).write_bytes(fr.png)
    events_doc = {
        "outcome": log.outcome.value,
        "abort_reason": log.abort_reason,
        "events": [
            {
                "t": e.t,
                "gate_id": e.gate_id,
                "kind": e.kind.value,
                "crossing_point": list(e.crossing_point),
            }
            for e in log.events
        ],
        "commands": [[t, *cmd.as_tuple()] for t, cmd in log.commands],
        "request_times": log.request_times,
        "response_times": log.response_times,
        # full track config, so plots can be produced from the directory alone
        "track_config": track_to_dict(track),
    }
    (out_dir / "events.json").write_text(json.dumps(events_doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_episode_steps(ep_dir: str | Path) -> list[Step]:
    path = Path(ep_dir) / "steps.jsonl"
    return [step_from_json(json.loads(line)) for line in path.read_text(encoding="utf-8").splitlines() if line]


def load_episode_events(ep_dir: str | Path) -> dict:
    return json.loads((Path(ep_dir) / "events.json").read_text(encoding="utf-8"))
