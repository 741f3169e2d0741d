"""The drone-side control loop: observe, request, apply, repeat.

The loop never sleeps to a fixed period; cadence emerges from response
latency.  It is transport-agnostic: the same loop runs in-process against
the simulator's latency model or over the network against a live policy
server, depending on the ports it is wired to.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, TYPE_CHECKING

from .domain import ActionCommand, DroneState

if TYPE_CHECKING:  # pragma: no cover - typing only
    from .fpv_render import Frame
    from .sim import GoalTracker
    from .domain import TaskGoal


class PolicyUnreachable(RuntimeError):
    """Transport failure talking to the policy."""


class MalformedAction(RuntimeError):
    """Policy returned a response that is not a valid 4D action."""


class MissingStateError(ValueError):
    """A privileged-state policy was queried without the state field."""


@dataclass
class Observation:
    """What the policy sees for one request.

    ``frame_fn`` renders lazily so privileged policies that ignore pixels
    cost nothing.  ``goal`` and ``progress`` are privileged extras set only
    by the in-process episode runner; they never travel over the wire.
    """

    episode_id: str
    step: int
    t: float
    instruction: str
    state: Optional[DroneState] = None
    frame_fn: Optional[Callable[[], "Frame"]] = None
    goal: Optional["TaskGoal"] = None
    progress: Optional["GoalTracker"] = None
    _frame: Optional["Frame"] = field(default=None, repr=False)

    @property
    def frame(self) -> Optional["Frame"]:
        if self._frame is None and self.frame_fn is not None:
            self._frame = self.frame_fn()
        return self._frame


@dataclass
class LoopStats:
    request_count: int
    mean_cadence: float
    command_hold_intervals: list[float]
    aborted: bool
    abort_reason: str | None = None


def drive(
    observe: Callable[[], Observation],
    act: Callable[[ActionCommand], None],
    policy: Callable[[Observation], ActionCommand],
    stop: Callable[[], bool],
    wait_latency: Optional[Callable[[], bool]] = None,
    clock: Callable[[], float] = time.monotonic,
) -> LoopStats:
    """Run the non-waiting request/apply loop until ``stop`` fires.

    Each cycle: take the latest observation, request an action, apply it,
    and immediately re-request with the now-current observation.  At most
    one request is in flight at any instant.

    Parameters
    ----------
    observe : returns the current Observation.
    act : applies an ActionCommand to the vehicle.
    policy : blocking request/response function.  Over a real transport the
        call itself takes the round-trip time; in simulation it is instant.
    stop : termination predicate, checked before each request.
    wait_latency : advances simulated time by the inference latency between
        request and apply; returns False if the episode ended mid-wait.
        None for wall-clock operation, where latency elapses inside
        ``policy`` and the loop simply measures it.
    clock : time source matching the wiring (simulated or wall).
    """
    request_times: list[float] = []
    holds: list[float] = []
    aborted = False
    abort_reason: str | None = None
    last_apply: float | None = None

    while not stop():
        obs = observe()
        request_times.append(clock())
        try:
            cmd = policy(obs)
        except (PolicyUnreachable, MalformedAction) as e:
            aborted = True
            abort_reason = f"{type(e).__name__}: {e}"
            break
        if not isinstance(cmd, ActionCommand):
            aborted = True
            abort_reason = f"MalformedAction: policy returned {type(cmd).__name__}"
            break
        if wait_latency is not None and not wait_latency():
            break  # episode ended while the response was in flight
        act(cmd)
        now = clock()
        if last_apply is not None:
            holds.append(now - last_apply)
        last_apply = now

    n = len(request_times)
    if n >= 2 and request_times[-1] > request_times[0]:
        cadence = (n - 1) / (request_times[-1] - request_times[0])
    else:
        cadence = 0.0
    return LoopStats(
        request_count=n,
        mean_cadence=cadence,
        command_hold_intervals=holds,
        aborted=aborted,
        abort_reason=abort_reason,
    )
