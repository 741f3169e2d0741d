"""racebridge: reference policy server for the drone-racing wire protocol.

A thin protocol adapter with zero domain logic: it validates requests,
invokes a wrapped callable (image bytes, instruction, optional privileged
state) -> 4 numbers, and reports per-call inference time.  Geometry,
metrics, and codecs live in the harness, not here.
"""

from .policies import MissingState, constant_policy, echo_state_policy
from .server import BridgeServer, make_app, serve_bridge
from .validation import SchemaError, parse_act_request, parse_reset_request

__version__ = "0.1.0"
