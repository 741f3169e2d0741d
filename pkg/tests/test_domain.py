import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from racesim.domain import (
    DroneState,
    GateShape,
    GoalKind,
    ParseError,
    Side,
    UnknownInstruction,
    UnresolvableSelector,
    ValidationError,
    load_track,
    parse_instruction,
    rotate_body_to_world,
    rotate_world_to_body,
    save_track,
    track_from_dict,
    track_to_dict,
    wrap_angle,
)

from harness_helpers import make_track, square_gate, arch_gate


class TestWrapAngle:
    def test_identity_at_zero(self):
        assert wrap_angle(0.0) == 0.0

    def test_odd_pi_maps_to_positive_pi(self):
        assert wrap_angle(3 * math.pi) == pytest.approx(math.pi, abs=1e-12)
        assert wrap_angle(-math.pi) == pytest.approx(math.pi, abs=1e-12)
        assert wrap_angle(math.pi) == pytest.approx(math.pi, abs=1e-12)

    def test_negative_three_and_a_half_pi(self):
        # -3.5*pi + 4*pi = 0.5*pi
        assert wrap_angle(-3.5 * math.pi) == pytest.approx(0.5 * math.pi, abs=1e-12)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            wrap_angle(math.inf)

    @given(st.floats(-50.0, 50.0))
    def test_idempotent(self, a):
        assert wrap_angle(wrap_angle(a)) == pytest.approx(wrap_angle(a), abs=1e-12)

    @given(st.floats(-math.pi + 1e-9, math.pi), st.integers(-1000, 1000))
    def test_periodic(self, a, k):
        # Compare on the circle: near the branch cut the representatives
        # may sit on either side of +/-pi while being the same angle.
        delta = wrap_angle(wrap_angle(a + 2 * math.pi * k) - wrap_angle(a))
        assert abs(delta) <= 1e-9

    @given(st.floats(-1e4, 1e4))
    def test_range(self, a):
        r = wrap_angle(a)
        assert -math.pi < r <= math.pi


class TestRotations:
    @given(
        st.tuples(st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10)),
        st.floats(-math.pi, math.pi),
    )
    def test_round_trip(self, v, yaw):
        back = rotate_world_to_body(rotate_body_to_world(v, yaw), yaw)
        for a, b in zip(v, back):
            assert a == pytest.approx(b, abs=1e-12)

    def test_quarter_turn(self):
        w = rotate_body_to_world((1.0, 0.0, 0.0), math.pi / 2)
        assert w[0] == pytest.approx(0.0, abs=1e-12)
        assert w[1] == pytest.approx(1.0, abs=1e-12)


class TestParseInstruction:
    def test_arch_gate(self):
        track = make_track([arch_gate("a1")])
        goal = parse_instruction("Fly through the arch gate", track)
        assert goal.kind == GoalKind.GATE_BY_SHAPE
        assert goal.shape == GateShape.ARCH

    def test_left_gate(self, two_gate_track):
        goal = parse_instruction("Fly through the Left gate", two_gate_track)
        assert goal.kind == GoalKind.GATE_BY_SIDE
        assert goal.side == Side.LEFT

    def test_circular_track(self, circular_track):
        goal = parse_instruction("Fly through multiple gates on circular track", circular_track)
        assert goal.kind == GoalKind.CIRCULAR_LAPS
        assert goal.laps == circular_track.laps
        assert goal.gate_ids == tuple(g.id for g in circular_track.gates)

    def test_full_task_vocabulary_parses(self, circular_track, two_gate_track, arch_square_track):
        # every task phrasing used by the shipped suites and datasets
        for text, track in [
            ("Fly through the arch gate", arch_square_track),
            ("Fly through the square gate", arch_square_track),
            ("Fly through the Right gate", two_gate_track),
            ("Fly through the Left gate", two_gate_track),
            ("Fly through one gate", two_gate_track),
            ("Fly through multiple gates on circular track", circular_track),
            ("Fly through gates on circular track", circular_track),
        ]:
            goal = parse_instruction(text, track)
            assert goal.raw_instruction == text

    def test_unknown_instruction(self, single_gate_track):
        with pytest.raises(UnknownInstruction):
            parse_instruction("Juggle the gate", single_gate_track)

    def test_unresolvable_shape(self, single_gate_track):
        # single_gate.json ships a square gate only
        with pytest.raises(UnresolvableSelector):
            parse_instruction("Fly through the arch gate", single_gate_track)

    def test_unresolvable_side(self, single_gate_track):
        with pytest.raises(UnresolvableSelector):
            parse_instruction("Fly through the Right gate", single_gate_track)

    def test_empty_instruction(self, single_gate_track):
        with pytest.raises(UnknownInstruction):
            parse_instruction("   ", single_gate_track)

    def test_case_insensitive_with_punctuation(self, single_gate_track):
        goal = parse_instruction("FLY THROUGH ONE GATE!", single_gate_track)
        assert goal.kind == GoalKind.SINGLE_GATE

    def test_deterministic(self, two_gate_track):
        a = parse_instruction("Fly through the Right gate", two_gate_track)
        b = parse_instruction("Fly through the Right gate", two_gate_track)
        assert a == b


class TestLoadTrack:
    def test_valid_circular_config(self, circular_track):
        assert len(circular_track.gates) == 4
        assert circular_track.ordered is True

    def test_zero_half_width_rejected(self, tmp_path):
        doc = track_to_dict(make_track([square_gate()]))
        doc["gates"][0]["half_width"] = 0.0
        p = tmp_path / "bad.json"
        p.write_text(json.dumps(doc))
        with pytest.raises(ValidationError, match="half_width"):
            load_track(p)

    def test_non_unit_normal_normalized_with_warning(self, tmp_path):
        doc = track_to_dict(make_track([square_gate()]))
        doc["gates"][0]["normal"] = [2.0, 0.0, 0.0]
        p = tmp_path / "wide_normal.json"
        p.write_text(json.dumps(doc))
        with pytest.warns(UserWarning, match="normal"):
            track = load_track(p)
        assert track.gates[0].normal == pytest.approx((1.0, 0.0, 0.0))

    def test_malformed_json(self, tmp_path):
        p = tmp_path / "broken.json"
        p.write_text("{not json")
        with pytest.raises(ParseError):
            load_track(p)

    def test_missing_field_reports_path(self, tmp_path):
        doc = track_to_dict(make_track([square_gate()]))
        del doc["gates"][0]["center"]
        p = tmp_path / "missing.json"
        p.write_text(json.dumps(doc))
        with pytest.raises(ValidationError, match=r"gates\[0\].center"):
            load_track(p)

    def test_gate_outside_bounds(self):
        with pytest.raises(ValidationError, match="bounds"):
            make_track([square_gate(center=(500.0, 0.0, 1.5))])

    def test_round_trip(self, tmp_path, circular_track):
        p = tmp_path / "rt.json"
        save_track(circular_track, p)
        again = load_track(p)
        assert again == circular_track

    def test_dict_round_trip(self, two_gate_track):
        assert track_from_dict(track_to_dict(two_gate_track)) == two_gate_track


class TestTypeInvariants:
    def test_empty_track_rejected(self):
        with pytest.raises(ValidationError, match="gates"):
            make_track([])

    def test_non_unit_normal_rejected_by_type(self):
        from racesim.domain import Gate

        with pytest.raises(ValidationError, match="normal"):
            Gate(id="g", shape=GateShape.SQUARE, center=(0, 0, 1), normal=(2.0, 0, 0),
                 half_width=1.0, half_height=1.0)

    def test_goal_selector_consistency(self):
        from racesim.domain import TaskGoal, GoalKind

        with pytest.raises(ValidationError, match="side"):
            TaskGoal(GoalKind.GATE_BY_SIDE, raw_instruction="x")
        with pytest.raises(ValidationError, match="shape"):
            TaskGoal(GoalKind.SINGLE_GATE, raw_instruction="x", gate_ids=("g",), shape=GateShape.ARCH)


class TestDroneState:
    def test_yaw_normalized_on_construction(self):
        s = DroneState(0.0, (0, 0, 0), (0, 0, 0), yaw=3 * math.pi, yaw_rate=0.0)
        assert s.yaw == pytest.approx(math.pi)

    def test_negative_time_rejected(self):
        with pytest.raises(ValidationError):
            DroneState(-1.0, (0, 0, 0), (0, 0, 0), 0.0, 0.0)

    def test_non_finite_velocity_rejected(self):
        with pytest.raises(ValidationError):
            DroneState(0.0, (0, 0, 0), (math.nan, 0, 0), 0.0, 0.0)
