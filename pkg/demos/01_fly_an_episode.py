"""
Fly one episode with the scripted pilot
=======================================

Load a shipped track, parse a task instruction into a goal, and run a
single episode end to end on the simulated clock.  The pilot reads
privileged ground-truth state; commands arrive at the 4 Hz cadence implied
by the 0.25 s inference latency.
"""

from pathlib import Path

from racesim import SimConfig, flight_metrics, load_track, parse_instruction, run_episode
from racesim.domain import DroneState
from racesim.policies import ScriptedPolicy

ROOT = Path(__file__).resolve().parent.parent

track = load_track(ROOT / "tracks" / "circular_4gate.json")
goal = parse_instruction("Fly through multiple gates on circular track", track)
print(f"track: {track.name} ({len(track.gates)} gates, {track.laps} laps)")
print(f"goal:  {goal.kind.value}, laps={goal.laps}")

# Start 2 m before the first gate, facing along its normal.
start = DroneState(t=0.0, position=(4.0, -2.0, 1.5), velocity=(0, 0, 0), yaw=1.5707963, yaw_rate=0.0)

cfg = SimConfig(latency=0.25, timeout=120.0, v_max=2.02)
log = run_episode(track, goal, ScriptedPolicy(track), cfg, start)

print(f"\noutcome: {log.outcome.value} after {log.states[-1].t:.1f} s simulated")
print(f"requests issued: {len(log.request_times)}, commands applied: {len(log.response_times)}")

# Gate events in order, with crossing times.
for e in log.events:
    print(f"  t={e.t:6.2f}s  {e.kind.value:9s} {e.gate_id}")

m = flight_metrics(log, track)
print(f"\nmean speed {m.mean_speed:.2f} m/s, max {m.max_speed:.2f} m/s, "
      f"laps {m.laps_completed}, collisions {m.collisions}")
