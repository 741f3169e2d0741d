"""Deterministic synthetic first-person-view rendering of a track.

Pinhole wireframe renderer: flat ground/sky split at the horizon, gates as
4-pixel-wide colored outlines (square: blue, arch: red), optional distractor
boxes, painter's ordering by distance.  Output is byte-for-byte deterministic
for identical inputs.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from PIL import Image

from .domain import DroneState, Gate, GateShape, Track, ValidationError, Vec3

# Scene palette (RGB).
SKY = (200, 200, 200)
GROUND = (64, 64, 64)
HORIZON = (128, 128, 128)
SQUARE_COLOR = (0, 0, 255)
ARCH_COLOR = (255, 0, 0)
BOX_COLOR = (255, 200, 0)

LINE_HALF_WIDTH = 2.0  # 4-pixel-wide outlines
NEAR_CLIP = 0.01  # meters in front of the camera
ARC_SEGMENTS = 32


@dataclass(frozen=True)
class CameraParams:
    width: int = 224
    height: int = 224
    hfov: float = math.pi / 2
    mount_pitch: float = 0.0

    def __post_init__(self):
        if self.width < 16 or self.height < 16:
            raise ValidationError("width/height: must be >= 16 pixels")
        if not 0.0 < self.hfov < math.pi:
            raise ValidationError("hfov: must be in (0, pi)")

    @property
    def focal(self) -> float:
        return (self.width / 2.0) / math.tan(self.hfov / 2.0)


@dataclass(frozen=True)
class Frame:
    """One rendered RGB image plus the pose it was taken from."""

    pixels: bytes
    t: float
    pose: DroneState
    width: int
    height: int

    def __post_init__(self):
        if len(self.pixels) != self.width * self.height * 3:
            raise ValidationError("pixels: buffer length must be width*height*3")

    def as_array(self) -> np.ndarray:
        return np.frombuffer(self.pixels, dtype=np.uint8).reshape(self.height, self.width, 3)


@dataclass(frozen=True)
class SceneBox:
    """Axis-aligned colored box, rendered as a wireframe (distractors)."""

    min: Vec3
    max: Vec3
    color: tuple[int, int, int] = BOX_COLOR


def gate_plane_axes(gate: Gate) -> tuple[Vec3, Vec3]:
    """In-plane axes of a gate: u horizontal, w vertical-ish, right-handed
    with the gate normal."""
    n = gate.normal
    up = (0.0, 0.0, 1.0)
    ux = up[1] * n[2] - up[2] * n[1]
    uy = up[2] * n[0] - up[0] * n[2]
    uz = up[0] * n[1] - up[1] * n[0]
    mag = math.sqrt(ux * ux + uy * uy + uz * uz)
    if mag < 1e-9:
        # Gate lying flat; fall back to world X as the in-plane horizontal.
        u = (1.0, 0.0, 0.0)
    else:
        u = (ux / mag, uy / mag, uz / mag)
    wx = n[1] * u[2] - n[2] * u[1]
    wy = n[2] * u[0] - n[0] * u[2]
    wz = n[0] * u[1] - n[1] * u[0]
    return u, (wx, wy, wz)


def _gate_point(gate: Gate, u: Vec3, w: Vec3, a: float, b: float) -> Vec3:
    c = gate.center
    return (c[0] + a * u[0] + b * w[0], c[1] + a * u[1] + b * w[1], c[2] + a * u[2] + b * w[2])


def gate_outline(gate: Gate) -> list[tuple[Vec3, Vec3]]:
    """World-space line segments outlining the gate aperture."""
    u, w = gate_plane_axes(gate)
    hw, hh = gate.half_width, gate.half_height
    p = lambda a, b: _gate_point(gate, u, w, a, b)
    segs: list[tuple[Vec3, Vec3]] = []
    if gate.shape == GateShape.SQUARE:
        corners = [p(-hw, -hh), p(hw, -hh), p(hw, hh), p(-hw, hh)]
        for i in range(4):
            segs.append((corners[i], corners[(i + 1) % 4]))
    else:
        # Two posts below the center line, semicircular cap above it.
        segs.append((p(-hw, -hh), p(-hw, 0.0)))
        segs.append((p(hw, -hh), p(hw, 0.0)))
        pts = [
            p(hw * math.cos(k * math.pi / ARC_SEGMENTS), hw * math.sin(k * math.pi / ARC_SEGMENTS))
            for k in range(ARC_SEGMENTS + 1)
        ]
        for a, b in zip(pts[:-1], pts[1:]):
            segs.append((a, b))
    return segs


def _box_edges(box: SceneBox) -> list[tuple[Vec3, Vec3]]:
    lo, hi = box.min, box.max
    xs, ys, zs = (lo[0], hi[0]), (lo[1], hi[1]), (lo[2], hi[2])
    c = [(x, y, z) for x in xs for y in ys for z in zs]
    idx = [
        (0, 1), (2, 3), (4, 5), (6, 7),  # z edges
        (0, 2), (1, 3), (4, 6), (5, 7),  # y edges
        (0, 4), (1, 5), (2, 6), (3, 7),  # x edges
    ]
    return [(c[i], c[j]) for i, j in idx]


class _Camera:
    """World-to-pixel projection for a yaw-plus-mount-pitch pinhole camera."""

    def __init__(self, state: DroneState, cam: CameraParams):
        pitch = cam.mount_pitch
        yaw = state.yaw
        cy, sy = math.cos(yaw), math.sin(yaw)
        cp, sp = math.cos(pitch), math.sin(pitch)
        # FLU camera basis in world coordinates.
        self.forward = (cp * cy, cp * sy, sp)
        self.left = (-sy, cy, 0.0)
        self.up = (-sp * cy, -sp * sy, cp)
        self.origin = state.position
        self.f = cam.focal
        self.cx = (cam.width - 1) / 2.0
        self.cy = (cam.height - 1) / 2.0

    def to_camera(self, p: Vec3) -> Vec3:
        d = (p[0] - self.origin[0], p[1] - self.origin[1], p[2] - self.origin[2])
        return (
            d[0] * self.forward[0] + d[1] * self.forward[1] + d[2] * self.forward[2],
            d[0] * self.left[0] + d[1] * self.left[1] + d[2] * self.left[2],
            d[0] * self.up[0] + d[1] * self.up[1] + d[2] * self.up[2],
        )

    def project(self, c: Vec3) -> tuple[float, float]:
        col = self.cx - self.f * c[1] / c[0]
        row = self.cy - self.f * c[2] / c[0]
        return col, row

    def horizon_row(self) -> float | None:
        """Row where the world-horizontal direction at the camera azimuth
        projects, or None when no horizon is in front of the camera."""
        fx, fy, _ = self.forward
        mag = math.hypot(fx, fy)
        if mag < 1e-12:
            return None
        d = (fx / mag, fy / mag, 0.0)
        xc = d[0] * self.forward[0] + d[1] * self.forward[1]
        zc = d[0] * self.up[0] + d[1] * self.up[1]
        if xc <= 1e-12:
            return None
        return self.cy - self.f * zc / xc


def _draw_segment(img: np.ndarray, p0: tuple[float, float], p1: tuple[float, float], color) -> None:
    """Paint all pixels within LINE_HALF_WIDTH of the segment (pixel coords)."""
    h, w, _ = img.shape
    x0, y0 = p0
    x1, y1 = p1
    m = LINE_HALF_WIDTH + 0.5
    cmin = max(0, int(math.floor(min(x0, x1) - m)))
    cmax = min(w - 1, int(math.ceil(max(x0, x1) + m)))
    rmin = max(0, int(math.floor(min(y0, y1) - m)))
    rmax = min(h - 1, int(math.ceil(max(y0, y1) + m)))
    if cmin > cmax or rmin > rmax:
        return
    cols = np.arange(cmin, cmax + 1, dtype=np.float64)
    rows = np.arange(rmin, rmax + 1, dtype=np.float64)
    C, R = np.meshgrid(cols, rows)
    dx, dy = x1 - x0, y1 - y0
    seg2 = dx * dx + dy * dy
    if seg2 < 1e-18:
        d2 = (C - x0) ** 2 + (R - y0) ** 2
    else:
        t = ((C - x0) * dx + (R - y0) * dy) / seg2
        t = np.clip(t, 0.0, 1.0)
        d2 = (C - (x0 + t * dx)) ** 2 + (R - (y0 + t * dy)) ** 2
    mask = d2 <= LINE_HALF_WIDTH * LINE_HALF_WIDTH
    if mask.any():
        img[rmin : rmax + 1, cmin : cmax + 1][mask] = color


def _draw_world_segments(img, camera: _Camera, segments, color) -> None:
    for a, b in segments:
        ca = camera.to_camera(a)
        cb = camera.to_camera(b)
        if ca[0] <= NEAR_CLIP and cb[0] <= NEAR_CLIP:
            continue
        # Clip the behind-camera endpoint to the near plane.
        if ca[0] <= NEAR_CLIP:
            s = (NEAR_CLIP - ca[0]) / (cb[0] - ca[0])
            ca = (NEAR_CLIP, ca[1] + s * (cb[1] - ca[1]), ca[2] + s * (cb[2] - ca[2]))
        elif cb[0] <= NEAR_CLIP:
            s = (NEAR_CLIP - cb[0]) / (ca[0] - cb[0])
            cb = (NEAR_CLIP, cb[1] + s * (ca[1] - cb[1]), cb[2] + s * (ca[2] - cb[2]))
        _draw_segment(img, camera.project(ca), camera.project(cb), color)


def render(
    state: DroneState,
    track: Track,
    cam: CameraParams = CameraParams(),
    boxes: Sequence[SceneBox] = (),
) -> Frame:
    """Render the FPV frame seen from ``state``.

    The camera looks along body +X rotated by yaw and ``mount_pitch``.
    Scene content: ground/sky split with a 1-pixel horizon line, then every
    gate and distractor box as a wireframe, far-to-near.
    """
    camera = _Camera(state, cam)
    img = np.empty((cam.height, cam.width, 3), dtype=np.uint8)
    img[:, :] = SKY

    # Ground fill below the horizon, then the horizon line itself.
    h_row = camera.horizon_row()
    if h_row is None:
        # Looking straight up or down: all sky, or all ground.
        h_row = cam.height * 2.0 if camera.forward[2] > 0 else -1.0
    rows = np.arange(cam.height, dtype=np.float64)
    img[rows > h_row, :] = GROUND
    line = np.abs(rows - h_row) <= 0.5
    img[line, :] = HORIZON

    # Painter's ordering: far items first.
    items: list[tuple[float, list, tuple]] = []
    for g in track.gates:
        d = math.dist(g.center, state.position)
        color = SQUARE_COLOR if g.shape == GateShape.SQUARE else ARCH_COLOR
        items.append((d, gate_outline(g), color))
    for b in boxes:
        c = tuple((b.min[i] + b.max[i]) / 2.0 for i in range(3))
        items.append((math.dist(c, state.position), _box_edges(b), b.color))
    items.sort(key=lambda it: -it[0])
    for _, segs, color in items:
        _draw_world_segments(img, camera, segs, color)

    return Frame(
        pixels=img.tobytes(),
        t=state.t,
        pose=state,
        width=cam.width,
        height=cam.height,
    )


def frame_to_png(frame: Frame) -> bytes:
    """Encode a frame as 8-bit RGB PNG (no alpha), deterministically."""
    im = Image.frombytes("RGB", (frame.width, frame.height), frame.pixels)
    buf = io.BytesIO()
    im.save(buf, format="PNG", optimize=False)
    return buf.getvalue()


def png_to_array(png: bytes) -> np.ndarray:
    im = Image.open(io.BytesIO(png))
    return np.asarray(im.convert("RGB"))
