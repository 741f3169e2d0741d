"""Core value types shared across the harness: drone state, 4D velocity
actions, gates, tracks, and task-instruction parsing.

World frame is Z-up with yaw measured counter-clockwise from +X.  The drone
body frame is FLU (x forward, y left, z up).  All types are immutable values;
all functions here are pure.
"""

from __future__ import annotations

import json
import math
import re
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import ClassVar

Vec3 = tuple[float, float, float]

TWO_PI = 2.0 * math.pi


class ParseError(ValueError):
    """Raised when a config document cannot be read at all."""


class ValidationError(ValueError):
    """Raised when a parsed value violates a structural invariant.

    The message always starts with the path of the offending field,
    e.g. ``gates[2].half_width: must be > 0``.
    """


class UnknownInstruction(ValueError):
    """No instruction template matches the given text."""


class UnresolvableSelector(ValueError):
    """The instruction parsed but selects no gate on this track."""


def wrap_angle(a: float) -> float:
    """Normalize an angle to the half-open interval (-pi, pi].

    Odd multiples of pi map to +pi, so the interval is closed on the
    right: ``wrap_angle(3*pi) == pi`` and ``wrap_angle(-pi) == pi``.
    """
    if not math.isfinite(a):
        raise ValueError(f"angle must be finite, got {a!r}")
    r = math.remainder(a, TWO_PI)
    # math.remainder lands in [-pi, pi]; fold the left endpoint over.
    if r <= -math.pi:
        r += TWO_PI
    return r


def rotate_body_to_world(v: Vec3, yaw: float) -> Vec3:
    """Rotate a body-frame FLU vector into the world frame by ``yaw``."""
    c, s = math.cos(yaw), math.sin(yaw)
    return (c * v[0] - s * v[1], s * v[0] + c * v[1], v[2])


def rotate_world_to_body(v: Vec3, yaw: float) -> Vec3:
    """Rotate a world-frame vector into the body FLU frame at ``yaw``."""
    c, s = math.cos(yaw), math.sin(yaw)
    return (c * v[0] + s * v[1], -s * v[0] + c * v[1], v[2])


def _check_vec3(v, path: str) -> Vec3:
    if not isinstance(v, (tuple, list)) or len(v) != 3:
        raise ValidationError(f"{path}: expected 3 numbers")
    out = []
    for i, x in enumerate(v):
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
            raise ValidationError(f"{path}[{i}]: expected a finite number")
        out.append(float(x))
    return (out[0], out[1], out[2])


@dataclass(frozen=True)
class DroneState:
    """Pose and velocity of the racer at time ``t``.

    ``position`` and ``velocity`` are world-frame, meters and m/s; ``yaw``
    is normalized to (-pi, pi] on construction.
    """

    t: float
    position: Vec3
    velocity: Vec3
    yaw: float
    yaw_rate: float

    def __post_init__(self):
        if not math.isfinite(self.t) or self.t < 0.0:
            raise ValidationError(f"t: must be finite and non-negative, got {self.t!r}")
        object.__setattr__(self, "position", _check_vec3(self.position, "position"))
        object.__setattr__(self, "velocity", _check_vec3(self.velocity, "velocity"))
        if not math.isfinite(self.yaw_rate):
            raise ValidationError("yaw_rate: must be finite")
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    @property
    def speed(self) -> float:
        vx, vy, vz = self.velocity
        return math.sqrt(vx * vx + vy * vy + vz * vz)


@dataclass(frozen=True)
class ActionCommand:
    """The 4D control vector: body-frame velocities plus signed yaw rate.

    ``vx`` forward, ``vy`` left, ``vz`` up (m/s); ``omega`` rad/s,
    positive counter-clockwise.
    """

    vx: float
    vy: float
    vz: float
    omega: float

    ZERO: ClassVar["ActionCommand"]

    def __post_init__(self):
        for name in ("vx", "vy", "vz", "omega"):
            x = getattr(self, name)
            if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
                raise ValidationError(f"{name}: must be a finite number")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.vx, self.vy, self.vz, self.omega)


ActionCommand.ZERO = ActionCommand(0.0, 0.0, 0.0, 0.0)


class GateShape(str, Enum):
    ARCH = "arch"
    SQUARE = "square"


class Side(str, Enum):
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True)
class Gate:
    """A racing gate: an aperture in a plane with a one-way traversal direction.

    ``normal`` must be unit length and points the way the drone is expected
    to fly through.  For a square the aperture is the full rectangle
    ``[-half_width, half_width] x [-half_height, half_height]`` in the gate
    plane; for an arch it is two posts of height ``half_height`` below the
    center line capped by a semicircle of radius ``half_width`` above it.
    """

    id: str
    shape: GateShape
    center: Vec3
    normal: Vec3
    half_width: float
    half_height: float
    side: Side | None = None

    def __post_init__(self):
        if not self.id:
            raise ValidationError("id: must be non-empty")
        object.__setattr__(self, "center", _check_vec3(self.center, "center"))
        n = _check_vec3(self.normal, "normal")
        mag = math.sqrt(n[0] ** 2 + n[1] ** 2 + n[2] ** 2)
        if abs(mag - 1.0) > 1e-9:
            raise ValidationError(f"normal: must be unit length, |n| = {mag:.6g}")
        object.__setattr__(self, "normal", n)
        if self.half_width <= 0.0:
            raise ValidationError("half_width: must be > 0")
        if self.half_height <= 0.0:
            raise ValidationError("half_height: must be > 0")


@dataclass(frozen=True)
class Bounds:
    """Axis-aligned flight-zone box, meters."""

    min: Vec3
    max: Vec3

    def __post_init__(self):
        object.__setattr__(self, "min", _check_vec3(self.min, "bounds.min"))
        object.__setattr__(self, "max", _check_vec3(self.max, "bounds.max"))
        for i in range(3):
            if self.min[i] >= self.max[i]:
                raise ValidationError(f"bounds: min[{i}] must be < max[{i}]")

    def contains(self, p: Vec3) -> bool:
        return all(self.min[i] <= p[i] <= self.max[i] for i in range(3))

    def translated(self, d: Vec3) -> "Bounds":
        return Bounds(
            (self.min[0] + d[0], self.min[1] + d[1], self.min[2] + d[2]),
            (self.max[0] + d[0], self.max[1] + d[1], self.max[2] + d[2]),
        )


@dataclass(frozen=True)
class Track:
    """An ordered (or free-order) set of gates inside a flight zone."""

    name: str
    gates: tuple[Gate, ...]
    ordered: bool
    laps: int
    bounds: Bounds

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if len(self.gates) == 0:
            raise ValidationError("gates: at least one gate required")
        if self.laps < 1:
            raise ValidationError("laps: must be >= 1")
        seen = set()
        for i, g in enumerate(self.gates):
            if g.id in seen:
                raise ValidationError(f"gates[{i}].id: duplicate id {g.id!r}")
            seen.add(g.id)
            if not self.bounds.contains(g.center):
                raise ValidationError(f"gates[{i}].center: outside track bounds")

    def gate_by_id(self, gate_id: str) -> Gate:
        for g in self.gates:
            if g.id == gate_id:
                return g
        raise KeyError(gate_id)


class GoalKind(str, Enum):
    SINGLE_GATE = "single_gate"
    GATE_BY_SIDE = "gate_by_side"
    GATE_BY_SHAPE = "gate_by_shape"
    ORDERED_SEQUENCE = "ordered_sequence"
    CIRCULAR_LAPS = "circular_laps"


@dataclass(frozen=True)
class TaskGoal:
    """Executable target parsed from a natural-language instruction.

    The selector fields are populated per ``kind``: a shape for
    GATE_BY_SHAPE, a side for GATE_BY_SIDE, gate ids otherwise.  ``laps``
    is meaningful only for CIRCULAR_LAPS.
    """

    kind: GoalKind
    raw_instruction: str
    shape: GateShape | None = None
    side: Side | None = None
    gate_ids: tuple[str, ...] = ()
    laps: int = 0

    def __post_init__(self):
        object.__setattr__(self, "gate_ids", tuple(self.gate_ids))
        k = self.kind
        if k == GoalKind.GATE_BY_SHAPE and self.shape is None:
            raise ValidationError("shape: required for gate_by_shape goals")
        if k == GoalKind.GATE_BY_SIDE and self.side is None:
            raise ValidationError("side: required for gate_by_side goals")
        if k in (GoalKind.SINGLE_GATE, GoalKind.ORDERED_SEQUENCE, GoalKind.CIRCULAR_LAPS) and not self.gate_ids:
            raise ValidationError("gate_ids: required for this goal kind")
        if k == GoalKind.CIRCULAR_LAPS and self.laps < 1:
            raise ValidationError("laps: must be >= 1 for circular_laps goals")
        if k != GoalKind.GATE_BY_SHAPE and self.shape is not None:
            raise ValidationError("shape: only valid for gate_by_shape goals")
        if k != GoalKind.GATE_BY_SIDE and self.side is not None:
            raise ValidationError("side: only valid for gate_by_side goals")


def _normalize_text(text: str) -> str:
    t = re.sub(r"[^a-z0-9 ]+", " ", text.lower())
    return re.sub(r"\s+", " ", t).strip()


# Fixed instruction templates.  Matching is case-insensitive after
# punctuation stripping; anything outside this vocabulary is rejected.
_RE_SHAPE = re.compile(r"^fly through the (arch|square) gate$")
_RE_SIDE = re.compile(r"^fly through the (left|right) gate$")
_RE_ONE = re.compile(r"^fly through (one gate|the gate)$")
_RE_CIRCULAR = re.compile(r"^fly through (?:multiple )?gates on (?:the )?circular track$")
_RE_ORDERED = re.compile(r"^fly through (?:all|the) gates in order$")


def parse_instruction(text: str, track: Track) -> TaskGoal:
    """Parse a task instruction into a goal resolvable on ``track``.

    Parameters
    ----------
    text : str
        Natural-language instruction, one of the fixed task templates.
    track : Track
        The track the selector must resolve against.

    Raises
    ------
    UnknownInstruction
        If no template matches.
    UnresolvableSelector
        If the template matched but selects no gate on this track.
    """
    if not text or not text.strip():
        raise UnknownInstruction("empty instruction")
    norm = _normalize_text(text)

    m = _RE_SHAPE.match(norm)
    if m:
        shape = GateShape(m.group(1))
        if not any(g.shape == shape for g in track.gates):
            raise UnresolvableSelector(f"no {shape.value} gate on track {track.name!r}")
        return TaskGoal(GoalKind.GATE_BY_SHAPE, raw_instruction=text, shape=shape)

    m = _RE_SIDE.match(norm)
    if m:
        side = Side(m.group(1))
        if not any(g.side == side for g in track.gates):
            raise UnresolvableSelector(f"no gate labeled {side.value!r} on track {track.name!r}")
        return TaskGoal(GoalKind.GATE_BY_SIDE, raw_instruction=text, side=side)

    if _RE_ONE.match(norm):
        return TaskGoal(
            GoalKind.SINGLE_GATE,
            raw_instruction=text,
            gate_ids=tuple(g.id for g in track.gates),
        )

    if _RE_CIRCULAR.match(norm):
        if not track.ordered:
            raise UnresolvableSelector(f"track {track.name!r} is not an ordered circuit")
        return TaskGoal(
            GoalKind.CIRCULAR_LAPS,
            raw_instruction=text,
            gate_ids=tuple(g.id for g in track.gates),
            laps=track.laps,
        )

    if _RE_ORDERED.match(norm):
        if not track.ordered:
            raise UnresolvableSelector(f"track {track.name!r} is not ordered")
        return TaskGoal(
            GoalKind.ORDERED_SEQUENCE,
            raw_instruction=text,
            gate_ids=tuple(g.id for g in track.gates),
        )

    raise UnknownInstruction(f"no instruction template matches {text!r}")


def _gate_from_dict(d: dict, path: str) -> Gate:
    if not isinstance(d, dict):
        raise ValidationError(f"{path}: expected an object")
    for key in ("id", "shape", "center", "normal", "half_width", "half_height"):
        if key not in d:
            raise ValidationError(f"{path}.{key}: required field missing")
    try:
        shape = GateShape(str(d["shape"]).lower())
    except ValueError:
        raise ValidationError(f"{path}.shape: must be 'arch' or 'square'") from None
    side = d.get("side")
    if side is not None:
        try:
            side = Side(str(side).lower())
        except ValueError:
            raise ValidationError(f"{path}.side: must be 'left', 'right', or null") from None
    normal = _check_vec3(d["normal"], f"{path}.normal")
    mag = math.sqrt(sum(x * x for x in normal))
    if mag < 1e-12:
        raise ValidationError(f"{path}.normal: zero-length vector")
    if abs(mag - 1.0) > 1e-9:
        # Tolerant ingestion: fix it up loudly rather than reject.
        warnings.warn(f"{path}.normal: normalizing non-unit vector (|n| = {mag:.6g})")
        normal = (normal[0] / mag, normal[1] / mag, normal[2] / mag)
    try:
        return Gate(
            id=str(d["id"]),
            shape=shape,
            center=_check_vec3(d["center"], f"{path}.center"),
            normal=normal,
            half_width=float(d["half_width"]),
            half_height=float(d["half_height"]),
            side=side,
        )
    except ValidationError as e:
        raise ValidationError(f"{path}.{e}") from None


def track_from_dict(doc: dict) -> Track:
    """Build a validated Track from a parsed config document."""
    if not isinstance(doc, dict):
        raise ValidationError("$: expected a JSON object")
    for key in ("name", "laps", "ordered", "bounds", "gates"):
        if key not in doc:
            raise ValidationError(f"{key}: required field missing")
    b = doc["bounds"]
    if not isinstance(b, dict) or "min" not in b or "max" not in b:
        raise ValidationError("bounds: expected an object with 'min' and 'max'")
    bounds = Bounds(_check_vec3(b["min"], "bounds.min"), _check_vec3(b["max"], "bounds.max"))
    gates = tuple(_gate_from_dict(g, f"gates[{i}]") for i, g in enumerate(doc["gates"]))
    return Track(
        name=str(doc["name"]),
        gates=gates,
        ordered=bool(doc["ordered"]),
        laps=int(doc["laps"]),
        bounds=bounds,
    )


def track_to_dict(track: Track) -> dict:
    """Serialize a Track back to its config-document form."""
    return {
        "name": track.name,
        "laps": track.laps,
        "ordered": track.ordered,
        "bounds": {"min": list(track.bounds.min), "max": list(track.bounds.max)},
        "gates": [
            {
                "id": g.id,
                "shape": g.shape.value,
                "center": list(g.center),
                "normal": list(g.normal),
                "half_width": g.half_width,
                "half_height": g.half_height,
                "side": g.side.value if g.side is not None else None,
            }
            for g in track.gates
        ],
    }


def load_track(path: str | Path) -> Track:
    """Load and validate a track config (JSON, lengths in meters)."""
    raw = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: {e}") from None
    return track_from_dict(doc)


def save_track(track: Track, path: str | Path) -> None:
    Path(path).write_text(json.dumps(track_to_dict(track), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def translate_track(track: Track, d: Vec3) -> Track:
    """Rigidly translate every gate and the bounds by ``d``."""
    gates = tuple(
        replace(g, center=(g.center[0] + d[0], g.center[1] + d[1], g.center[2] + d[2]))
        for g in track.gates
    )
    return replace(track, gates=gates, bounds=track.bounds.translated(d))
