"""
Trajectory and action plots
===========================

Every episode can be exported as trajectory/action CSVs plus a top-down
SVG: the flown XY path in gray, one line-pair group per gate, and one red
arrow per applied command showing the commanded direction at that instant.
"""

import math
from pathlib import Path

from racesim import SimConfig, load_track, parse_instruction, run_episode
from racesim.domain import DroneState
from racesim.evalkit import export_plots, flight_metrics
from racesim.policies import ScriptedPolicy

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "demo_output" / "plots"

track = load_track(ROOT / "tracks" / "circular_4gate.json")
goal = parse_instruction("Fly through multiple gates on circular track", track)
start = DroneState(0.0, (4.0, -2.0, 1.5), (0, 0, 0), math.pi / 2, 0.0)

log = run_episode(track, goal, ScriptedPolicy(track), SimConfig(timeout=120.0, v_max=2.02), start)
m = flight_metrics(log, track)
print(f"{m.laps_completed} laps, mean speed {m.mean_speed:.2f} m/s")

for path in export_plots(log, track, OUT):
    print(f"wrote {path}")

svg = (OUT / "topdown.svg").read_text()
gate_groups = svg.count('class="gate"')
arrows = svg.count('class="arrow"')
print(f"\ngate groups in SVG: {gate_groups}")
print(f"command arrows:     {arrows}")
