"""racesim: a deterministic desk-scale drone-racing harness.

A velocity-command quadrotor simulator driven by a policy over a
frame/instruction-to-action wire protocol, plus the dataset-recording
pipeline and the flight-metric and generalization-evaluation machinery.
"""

from .domain import (
    ActionCommand,
    Bounds,
    DroneState,
    Gate,
    GateShape,
    GoalKind,
    ParseError,
    Side,
    TaskGoal,
    Track,
    UnknownInstruction,
    UnresolvableSelector,
    ValidationError,
    load_track,
    parse_instruction,
    save_track,
    wrap_angle,
)
from .action_codec import ActionBounds, ActionTokens, InsufficientData, decode, encode, fit_bounds
from .control_loop import LoopStats, MalformedAction, MissingStateError, Observation, PolicyUnreachable, drive
from .fpv_render import CameraParams, Frame, SceneBox, frame_to_png, render
from .sim import (
    EpisodeLog,
    EventKind,
    GoalTracker,
    Outcome,
    PassEvent,
    PolicyError,
    SimConfig,
    detect_gate_event,
    run_episode,
    step,
)
from .policies import (
    ConstantPolicy,
    PilotGains,
    RemotePolicy,
    ScriptedPolicy,
    ZeroPolicy,
    scripted_pilot,
)
from .protocol import ActRequest, ActResponse, BindError, SchemaError, serve, validate_request
from .dataset import (
    DatasetManifest,
    EmptyEpisode,
    RawLog,
    Step,
    export_rlds,
    synchronize,
    yaw_rate_from_angles,
)
from .evalkit import (
    Axis,
    AxisScore,
    EmptyAxis,
    FlightMetrics,
    TooShort,
    TrialResult,
    TrialSpec,
    aggregate_scores,
    detect_laps,
    export_plots,
    flight_metrics,
    run_generalization_suite,
)

__version__ = "0.1.0"
