"""race-bridge: serve a policy callable over the wire protocol.

``--policy`` names a zero-argument factory as ``module:function``; the
factory returns the callable (image bytes, instruction, optional state)
-> 4 numbers.  Built-ins: ``racebridge.policies:constant_policy`` and
``racebridge.policies:echo_state_policy``.
"""

from __future__ import annotations

import argparse
import importlib
import sys

from .server import BridgeServer


def load_policy(spec: str):
    module_name, _, attr = spec.partition(":")
    if not module_name or not attr:
        raise SystemExit(f"--policy must be module:function, got {spec!r}")
    try:
        module = importlib.import_module(module_name)
        factory = getattr(module, attr)
    except (ImportError, AttributeError) as e:
        raise SystemExit(f"cannot load policy {spec!r}: {e}")
    return factory()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="race-bridge", description=__doc__)
    parser.add_argument(
        "--policy",
        default="racebridge.policies:constant_policy",
        help="module:function naming a policy factory",
    )
    parser.add_argument("--bind", help="host:port (default RACE_BIND or 127.0.0.1:8470)")
    args = parser.parse_args(argv)

    policy = load_policy(args.policy)
    server = BridgeServer(policy, args.bind)
    print(f"race-bridge serving {getattr(policy, 'name', args.policy)!r} on {server.url}")
    try:
        server._thread.join()
    except KeyboardInterrupt:
        server.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
