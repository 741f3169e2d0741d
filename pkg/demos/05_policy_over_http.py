"""
Driving the simulator through the wire protocol
===============================================

The same control loop that runs in-process also runs over HTTP: a policy
server exposes /act, /reset, and /health; the remote-policy client ships
each frame (base64 PNG) plus the instruction and applies the 4-number
response.  Here the scripted oracle sits behind the server and uses the
privileged state field, so the whole loop closes over the network.
"""

from pathlib import Path

from racesim import SimConfig, load_track, parse_instruction, run_episode
from racesim.domain import DroneState
from racesim.fpv_render import CameraParams
from racesim.policies import RemotePolicy, ScriptedPolicy
from racesim.protocol import serve

ROOT = Path(__file__).resolve().parent.parent

track = load_track(ROOT / "tracks" / "single_gate.json")
goal = parse_instruction("Fly through one gate", track)

with serve(ScriptedPolicy(track), bind="127.0.0.1:0") as server:
    print(f"policy server up at {server.url}")

    policy = RemotePolicy(server.url)
    start = DroneState(0.0, (0.0, 0.5, 1.5), (0, 0, 0), 0.0, 0.0)
    log = run_episode(
        track, goal, policy, SimConfig(latency=0.25, timeout=30.0), start,
        camera=CameraParams(width=64, height=64),  # smaller frames, faster demo
        episode_id="http-demo",
    )

print(f"outcome: {log.outcome.value}")
print(f"requests over the wire: {len(log.request_times)}")
print(f"events: {[(e.kind.value, e.gate_id) for e in log.events]}")
print("\nthe simulated clock ran the cadence; the HTTP round trips happened")
print("synchronously inside each request, so the episode is still deterministic")
