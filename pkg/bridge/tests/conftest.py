import json
from pathlib import Path

import pytest

from racebridge import BridgeServer, constant_policy

REPO_ROOT = Path(__file__).resolve().parent.parent.parent
FIXTURES = REPO_ROOT / "fixtures"


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    return FIXTURES / "protocol"


@pytest.fixture(scope="session")
def golden_request() -> dict:
    return json.loads((FIXTURES / "act_request_1.json").read_text())


@pytest.fixture()
def constant_server():
    with BridgeServer(constant_policy(), bind="127.0.0.1:0") as server:
        yield server
