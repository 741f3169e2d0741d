"""Command-line surface of the harness.

Subcommands: ``sim run``, ``record``, ``export rlds``, ``eval track``,
``eval gen``, ``plot``, ``serve``, ``codec check``.  Every command is
deterministic given its arguments; reports and episode directories are
byte-stable across reruns.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import action_codec, dataset, evalkit, protocol
from .domain import ActionCommand, DroneState, GoalKind, TaskGoal, load_track, parse_instruction, track_from_dict
from .policies import PilotGains, load_gains, make_policy
from .sim import EpisodeLog, EventKind, Outcome, PassEvent, SimConfig, run_episode


def _default_start(track) -> DroneState:
    g = track.gates[0]
    n = g.normal
    return DroneState(
        t=0.0,
        position=(g.center[0] - 3.0 * n[0], g.center[1] - 3.0 * n[1], g.center[2] - 3.0 * n[2]),
        velocity=(0.0, 0.0, 0.0),
        yaw=math.atan2(n[1], n[0]),
        yaw_rate=0.0,
    )


def _parse_start(text: str | None, track) -> DroneState:
    if not text:
        return _default_start(track)
    parts = [float(x) for x in text.split(",")]
    if len(parts) not in (3, 4):
        raise SystemExit("--start must be x,y,z or x,y,z,yaw")
    yaw = parts[3] if len(parts) == 4 else 0.0
    return DroneState(t=0.0, position=tuple(parts[:3]), velocity=(0, 0, 0), yaw=yaw, yaw_rate=0.0)


def _sim_config(args, dt: float = 0.01) -> SimConfig:
    return SimConfig(
        dt=dt,
        latency=args.latency,
        timeout=args.timeout,
        seed=args.seed,
        v_max=args.vmax,
    )


def _gains(args) -> PilotGains:
    return load_gains(args.gains) if getattr(args, "gains", None) else PilotGains()


def cmd_sim_run(args) -> int:
    track = load_track(args.track)
    goal = parse_instruction(args.instruction, track)
    cfg = _sim_config(args, dt=dataset.RECORD_DT if args.out else 0.01)
    policy = make_policy(args.policy, track, _gains(args))
    start = _parse_start(args.start, track)
    log = run_episode(track, goal, policy, cfg, start, episode_id=f"run-{args.seed:08d}")
    print(f"outcome: {log.outcome.value}")
    print(f"states: {len(log.states)}  requests: {len(log.request_times)}  "
          f"responses: {len(log.response_times)}  events: {len(log.events)}")
    if args.out:
        dataset.save_episode(log, track, cfg, args.out)
        print(f"episode written to {args.out}")
    return 0 if log.outcome != Outcome.ABORTED else 1


def cmd_record(args) -> int:
    track = load_track(args.track)
    goal = parse_instruction(args.instruction, track)
    cfg = SimConfig(
        dt=dataset.RECORD_DT,
        latency=args.latency,
        timeout=args.seconds,
        seed=args.seed,
        v_max=args.vmax,
    )
    gains = _gains(args)
    rng = np.random.default_rng(args.seed)
    out = Path(args.out)
    for i in range(args.episodes):
        policy = make_policy(args.policy, track, gains)
        base = _parse_start(args.start, track)
        jitter = rng.uniform(-0.5, 0.5, size=3)
        start = replace(
            base,
            position=(
                base.position[0] + jitter[0],
                base.position[1] + jitter[1],
                max(0.3, base.position[2] + 0.5 * jitter[2]),
            ),
        )
        log = run_episode(track, goal, policy, cfg, start, episode_id=f"rec-{i:06d}")
        raw = dataset.sample_raw_log(log, track, cfg, duration=args.seconds)
        dataset.save_raw_episode(raw, out / "episodes" / f"ep_{i:06d}")
        print(f"episode {i}: outcome={log.outcome.value} frames={len(raw.frames)}")
    print(f"raw recording written to {out}")
    return 0


def cmd_export_rlds(args) -> int:
    manifest = dataset.export_rlds_dir(args.in_dir, args.out)
    print(f"episodes: {manifest.episodes}  steps: {manifest.steps}  images: {manifest.images}")
    print(f"dataset written to {args.out}")
    return 0


def cmd_eval_track(args) -> int:
    track = load_track(args.track)
    laps = args.laps if args.laps is not None else track.laps
    goal = TaskGoal(
        GoalKind.CIRCULAR_LAPS,
        raw_instruction="Fly through multiple gates on circular track",
        gate_ids=tuple(g.id for g in track.gates),
        laps=laps,
    )
    cfg = _sim_config(args, dt=dataset.RECORD_DT if args.out else 0.01)
    policy = make_policy(args.policy, track, _gains(args))
    start = _parse_start(args.start, track)
    log = run_episode(track, goal, policy, cfg, start, episode_id=f"eval-{args.seed:08d}")
    metrics = evalkit.flight_metrics(log, track)
    laps_done, out_of_order = evalkit.lap_walk(log.events, track)
    report = {
        "track": track.name,
        "instruction": log.instruction,
        "laps_target": laps,
        "outcome": log.outcome.value,
        "metrics": metrics.as_dict(),
        "lap_diagnostics": {"laps": laps_done, "out_of_order": out_of_order},
        "events": [
            {"t": e.t, "gate_id": e.gate_id, "kind": e.kind.value, "crossing_point": list(e.crossing_point)}
            for e in log.events
        ],
        "config": {
            "dt": cfg.dt, "latency": cfg.latency, "timeout": cfg.timeout,
            "v_max": cfg.v_max, "seed": cfg.seed,
        },
    }
    Path(args.report).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if args.out:
        dataset.save_episode(log, track, cfg, args.out)
    print(f"outcome: {log.outcome.value}  laps: {laps_done}  "
          f"mean speed: {metrics.mean_speed:.3f} m/s  max: {metrics.max_speed:.3f} m/s")
    print(f"report written to {args.report}")
    return 0 if log.outcome == Outcome.SUCCESS else 1


def cmd_eval_gen(args) -> int:
    suite = evalkit.load_suite(args.suite)
    base_dir = Path(args.suite).parent
    gains = _gains(args)

    def factory(track):
        return make_policy(args.policy, track, gains)

    cfg = SimConfig(latency=args.latency, seed=args.seed, v_max=args.vmax)
    results, scores = evalkit.run_generalization_suite(suite, factory, cfg, base_dir)
    report = {
        "trials": [
            {"name": r.name, "axis": r.axis.value, "success": r.success,
             "outcome": r.outcome, "aborted": r.aborted, "note": r.note}
            for r in results
        ],
        "axes": [
            {"axis": s.axis.value, "trials": s.trials, "successes": s.successes, "score": s.score}
            for s in scores
        ],
        "reference": evalkit.REFERENCE_ROWS,
    }
    Path(args.report).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    for s in scores:
        print(f"{s.axis.value:>9}: {s.score:5.1f}  ({s.successes}/{s.trials})")
    print(f"report written to {args.report}")
    return 0


def cmd_plot(args) -> int:
    steps = dataset.load_episode_steps(args.episode)
    events_doc = dataset.load_episode_events(args.episode)
    meta = json.loads((Path(args.episode) / "meta.json").read_text(encoding="utf-8"))
    if args.track:
        track = load_track(args.track)
    elif "track_config" in events_doc:
        track = track_from_dict(events_doc["track_config"])
    else:
        raise SystemExit("episode directory predates embedded track configs; pass --track")

    states = [
        DroneState(t=s.t, position=s.position, velocity=s.velocity, yaw=s.yaw, yaw_rate=s.yaw_rate)
        for s in steps
    ]
    log = EpisodeLog(
        instruction=meta["language_instruction"],
        goal=None,
        states=states,
        commands=[(row[0], ActionCommand(*row[1:])) for row in events_doc["commands"]],
        events=[
            PassEvent(t=e["t"], gate_id=e["gate_id"], kind=EventKind(e["kind"]),
                      crossing_point=tuple(e["crossing_point"]))
            for e in events_doc["events"]
        ],
        outcome=Outcome(events_doc["outcome"]),
        request_times=events_doc["request_times"],
        response_times=events_doc["response_times"],
    )
    written = evalkit.export_plots(log, track, args.out)
    for p in written:
        print(f"wrote {p}")
    return 0


def cmd_serve(args) -> int:
    track = load_track(args.track) if args.track else None
    if args.policy == "scripted" and track is None:
        raise SystemExit("serve --policy scripted requires --track")
    policy = make_policy(args.policy, track, _gains(args)) if args.policy != "zero" else make_policy("zero", track)
    server = protocol.serve(policy, args.bind)
    print(f"serving policy {getattr(policy, 'name', '?')!r} on {server.url}")
    try:
        server._thread.join()
    except KeyboardInterrupt:
        server.close()
    return 0


def cmd_codec_check(args) -> int:
    bounds = action_codec.read_stats(args.stats) if args.stats else action_codec.ActionBounds.DEFAULT
    report = action_codec.roundtrip_report(bounds, n_samples=args.samples, seed=args.seed)
    for k, dim in enumerate(("vx", "vy", "vz", "omega")):
        print(f"{dim:>5}: max round-trip error {report['max_error'][k]:.3e} "
              f"(half bin {report['half_bin'][k]:.3e})")
    print(f"within half bin: {report['within_half_bin']}")
    print(f"decode->encode identity on all tokens: {report['identity_on_tokens']}")
    return 0 if report["within_half_bin"] and report["identity_on_tokens"] else 1


def _add_common_sim_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--latency", type=float, default=0.25, help="simulated inference round trip, s")
    p.add_argument("--timeout", type=float, default=120.0, help="episode limit, s")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vmax", type=float, default=3.0, help="speed cap, m/s")
    p.add_argument("--gains", help="JSON file overriding pilot gains")
    p.add_argument("--start", help="start pose as x,y,z[,yaw]")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="racesim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("sim", help="simulator commands")
    sim_sub = p_sim.add_subparsers(dest="sim_command", required=True)
    p_run = sim_sub.add_parser("run", help="run one episode")
    p_run.add_argument("--track", required=True)
    p_run.add_argument("--instruction", required=True)
    p_run.add_argument("--policy", default="scripted", help="scripted | zero | constant | remote:<URL>")
    p_run.add_argument("--out", help="episode directory to write")
    _add_common_sim_flags(p_run)
    p_run.set_defaults(func=cmd_sim_run)

    p_rec = sub.add_parser("record", help="record raw episodes at sensor rates")
    p_rec.add_argument("--track", required=True)
    p_rec.add_argument("--instruction", required=True)
    p_rec.add_argument("--policy", default="scripted")
    p_rec.add_argument("--episodes", type=int, required=True)
    p_rec.add_argument("--seconds", type=float, default=3.33, help="recording duration per episode")
    p_rec.add_argument("--out", required=True)
    p_rec.add_argument("--latency", type=float, default=0.25)
    p_rec.add_argument("--seed", type=int, default=0)
    p_rec.add_argument("--vmax", type=float, default=3.0)
    p_rec.add_argument("--gains")
    p_rec.add_argument("--start", help="base start pose x,y,z[,yaw]; jittered per episode")
    p_rec.set_defaults(func=cmd_record)

    p_exp = sub.add_parser("export", help="dataset export")
    exp_sub = p_exp.add_subparsers(dest="export_command", required=True)
    p_rlds = exp_sub.add_parser("rlds", help="raw recording -> RLDS layout")
    p_rlds.add_argument("--in", dest="in_dir", required=True)
    p_rlds.add_argument("--out", required=True)
    p_rlds.set_defaults(func=cmd_export_rlds)

    p_eval = sub.add_parser("eval", help="evaluation commands")
    eval_sub = p_eval.add_subparsers(dest="eval_command", required=True)
    p_trk = eval_sub.add_parser("track", help="lap-completion run with flight metrics")
    p_trk.add_argument("--track", required=True)
    p_trk.add_argument("--policy", default="scripted")
    p_trk.add_argument("--laps", type=int)
    p_trk.add_argument("--report", required=True)
    p_trk.add_argument("--out", help="also persist the episode directory")
    _add_common_sim_flags(p_trk)
    p_trk.set_defaults(func=cmd_eval_track)

    p_gen = eval_sub.add_parser("gen", help="four-axis generalization suite")
    p_gen.add_argument("--suite", required=True)
    p_gen.add_argument("--policy", default="scripted")
    p_gen.add_argument("--report", required=True)
    p_gen.add_argument("--latency", type=float, default=0.25)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--vmax", type=float, default=3.0)
    p_gen.add_argument("--gains")
    p_gen.set_defaults(func=cmd_eval_gen)

    p_plot = sub.add_parser("plot", help="trajectory/action plots from an episode dir")
    p_plot.add_argument("--episode", required=True)
    p_plot.add_argument("--track", help="override the track embedded in the episode dir")
    p_plot.add_argument("--out", required=True)
    p_plot.set_defaults(func=cmd_plot)

    p_srv = sub.add_parser("serve", help="expose a policy over the wire protocol")
    p_srv.add_argument("--policy", default="zero", help="scripted | zero | constant")
    p_srv.add_argument("--bind", help="host:port (default RACE_BIND or 127.0.0.1:8470)")
    p_srv.add_argument("--track", help="track config (required for scripted)")
    p_srv.add_argument("--gains")
    p_srv.set_defaults(func=cmd_serve)

    p_codec = sub.add_parser("codec", help="action codec tools")
    codec_sub = p_codec.add_subparsers(dest="codec_command", required=True)
    p_chk = codec_sub.add_parser("check", help="round-trip property suite")
    p_chk.add_argument("--stats", help="stats.json with fitted bounds (default: built-in bounds)")
    p_chk.add_argument("--samples", type=int, default=10_000)
    p_chk.add_argument("--seed", type=int, default=0)
    p_chk.set_defaults(func=cmd_codec_check)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
