"""
Recording an episodic dataset
=============================

The recorder runs on a 120 Hz physics grid so its 60 Hz state samples and
30 Hz frames align exactly.  Synchronization matches each frame to its
nearest state, labels it with the body-frame velocity, and the exporter
writes the episodic layout: manifest, fitted action bounds, and per-episode
JSON Lines steps plus PNG frames.
"""

import json
import shutil
from pathlib import Path

from racesim import SimConfig, load_track, parse_instruction, run_episode
from racesim.dataset import RECORD_DT, sample_raw_log, save_raw_episode, export_rlds_dir
from racesim.domain import DroneState
from racesim.fpv_render import CameraParams
from racesim.policies import ScriptedPolicy

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "demo_output" / "dataset"
shutil.rmtree(OUT, ignore_errors=True)

track = load_track(ROOT / "tracks" / "single_gate.json")
goal = parse_instruction("Fly through one gate", track)
cfg = SimConfig(dt=RECORD_DT, timeout=3.33)

# Three short episodes from slightly different starts.
for i, dy in enumerate((-0.4, 0.0, 0.4)):
    start = DroneState(0.0, (-10.0, dy, 1.5), (0, 0, 0), 0.0, 0.0)
    log = run_episode(track, goal, ScriptedPolicy(track), cfg, start, episode_id=f"demo-{i}")
    raw = sample_raw_log(log, track, cfg, camera=CameraParams(width=64, height=64), duration=3.33)
    save_raw_episode(raw, OUT / "raw" / "episodes" / f"ep_{i:06d}")
    print(f"episode {i}: {len(raw.states)} states @60Hz, {len(raw.frames)} frames @30Hz")

manifest = export_rlds_dir(OUT / "raw", OUT / "rlds")
print(f"\nexported: {manifest.episodes} episodes, {manifest.steps} steps, {manifest.images} images")
print(f"fitted bounds lo={tuple(round(x, 3) for x in manifest.bounds.lo)}")

stats = json.loads((OUT / "rlds" / "stats.json").read_text())
print(f"stats.json quantiles: {stats['q']}")
print("\nlayout:")
for p in sorted((OUT / "rlds").rglob("*"))[:8]:
    print(f"  {p.relative_to(OUT)}")
print("  ...")
