"""Built-in policy callables: protocol test doubles.

A policy callable takes (image_bytes, instruction, optional privileged
state dict) and returns 4 numbers.  Real model wrappers follow the same
shape; see the README for plugging in a checkpoint.
"""

from __future__ import annotations

import math
from typing import Callable, Optional

PolicyCallable = Callable[[bytes, str, Optional[dict]], tuple]


class MissingState(ValueError):
    """The request carried no privileged state but the policy needs it."""


def constant_policy(action=(0.5, 0.0, 0.0, 0.0)) -> PolicyCallable:
    """Always returns the same action (the conformance-suite policy)."""

    def policy(image: bytes, instruction: str, state: Optional[dict]):
        return tuple(action)

    policy.name = "constant"
    return policy


def echo_state_policy(gain: float = 1.0, limit: float = 1.0) -> PolicyCallable:
    """Braking test double: command opposes the current world velocity.

    The reported velocity is rotated into the body frame by the reported
    yaw, negated, scaled by ``gain``, and clamped to ``+-limit``; yaw rate
    is zero.  Exercises the privileged state field end-to-end.
    """

    def policy(image: bytes, instruction: str, state: Optional[dict]):
        if state is None:
            raise MissingState("state: echo_state policy requires the privileged state field")
        vx, vy, vz = state["velocity"]
        yaw = state["yaw"]
        c, s = math.cos(yaw), math.sin(yaw)
        bx = c * vx + s * vy
        by = -s * vx + c * vy

        def brake(v: float) -> float:
            return max(-limit, min(limit, -gain * v)) + 0.0  # normalizes -0.0

        return (brake(bx), brake(by), brake(vz), 0.0)

    policy.name = "echo_state"
    return policy
