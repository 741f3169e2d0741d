import base64
import math

import pytest

from racebridge.validation import SchemaError, parse_act_request, parse_reset_request, validate_action


class TestParseActRequest:
    def test_golden_request(self, golden_request):
        req = parse_act_request(golden_request)
        assert req.step == 0
        assert req.image.startswith(b"\x89PNG")
        assert req.state is not None and req.state["yaw"] == 0.0

    def test_missing_instruction(self, golden_request):
        doc = {k: v for k, v in golden_request.items() if k != "instruction"}
        with pytest.raises(SchemaError, match="instruction"):
            parse_act_request(doc)

    def test_negative_step(self, golden_request):
        with pytest.raises(SchemaError, match="step"):
            parse_act_request({**golden_request, "step": -1})

    def test_bad_base64(self, golden_request):
        with pytest.raises(SchemaError, match="image"):
            parse_act_request({**golden_request, "image": "@@@"})

    def test_not_png(self, golden_request):
        junk = base64.b64encode(b"not a png").decode()
        with pytest.raises(SchemaError, match="image"):
            parse_act_request({**golden_request, "image": junk})

    def test_malformed_json(self):
        with pytest.raises(SchemaError, match="JSON"):
            parse_act_request(b'{"broken"')

    def test_bad_state_vector(self, golden_request):
        doc = {**golden_request, "state": {"position": [0, 1], "velocity": [0, 0, 0], "yaw": 0.0}}
        with pytest.raises(SchemaError, match=r"state\.position"):
            parse_act_request(doc)


class TestParseResetRequest:
    def test_valid(self):
        assert parse_reset_request({"episode_id": "e", "instruction": "x"}) == ("e", "x")

    def test_missing_episode_id(self):
        with pytest.raises(SchemaError, match="episode_id"):
            parse_reset_request({"instruction": "x"})


class TestValidateAction:
    def test_valid(self):
        assert validate_action((0.5, 0, 0, 0)) == [0.5, 0.0, 0.0, 0.0]

    def test_wrong_arity(self):
        with pytest.raises(ValueError):
            validate_action((1.0, 2.0, 3.0))

    def test_non_finite(self):
        with pytest.raises(ValueError):
            validate_action((math.nan, 0, 0, 0))
