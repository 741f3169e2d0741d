"""
The synthetic FPV camera
========================

Render what the drone sees while approaching a gate: a pinhole wireframe
view with a ground/sky split, square gates in blue, arches in red.
Frames are deterministic byte for byte, which is what makes recorded
datasets and episode directories reproducible.
"""

from pathlib import Path

from racesim import CameraParams, load_track, render
from racesim.domain import DroneState
from racesim.fpv_render import frame_to_png

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "demo_output" / "fpv"
OUT.mkdir(parents=True, exist_ok=True)

track = load_track(ROOT / "tracks" / "arch_square.json")
cam = CameraParams(width=224, height=224)

# A straight-line approach, one frame every half meter.
for i, x in enumerate(range(-8, 4, 1)):
    state = DroneState(t=float(i), position=(float(x) / 2.0, 0.0, 1.5), velocity=(0, 0, 0), yaw=0.0, yaw_rate=0.0)
    frame = render(state, track, cam)
    (OUT / f"approach_{i:02d}.png").write_bytes(frame_to_png(frame))

print(f"wrote {i + 1} frames to {OUT}")

# Determinism check: same pose, same bytes.
a = render(DroneState(0.0, (0, 0, 1.5), (0, 0, 0), 0.0, 0.0), track, cam)
b = render(DroneState(0.0, (0, 0, 1.5), (0, 0, 0), 0.0, 0.0), track, cam)
print(f"byte-identical re-render: {a.pixels == b.pixels}")
