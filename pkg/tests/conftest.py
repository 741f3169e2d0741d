import pytest

from racesim.domain import Track, load_track

from harness_helpers import TRACKS


@pytest.fixture(scope="session")
def single_gate_track() -> Track:
    return load_track(TRACKS / "single_gate.json")


@pytest.fixture(scope="session")
def two_gate_track() -> Track:
    return load_track(TRACKS / "two_gates.json")


@pytest.fixture(scope="session")
def circular_track() -> Track:
    return load_track(TRACKS / "circular_4gate.json")


@pytest.fixture(scope="session")
def arch_square_track() -> Track:
    return load_track(TRACKS / "arch_square.json")
