import base64
import json
import math

import pytest
import requests

from racesim.conformance import load_fixtures, run_conformance
from racesim.policies import ConstantPolicy, ScriptedPolicy, ZeroPolicy
from racesim.protocol import (
    ActRequest,
    SchemaError,
    encode_request,
    serve,
    validate_request,
    validate_response,
)

from harness_helpers import FIXTURES


@pytest.fixture(scope="module")
def golden_request() -> dict:
    return json.loads((FIXTURES / "act_request_1.json").read_text())


class TestValidateRequest:
    def test_golden_fixture_parses(self, golden_request):
        req = validate_request(json.dumps(golden_request))
        assert req.step == 0
        assert req.episode_id == "golden-1"
        assert req.state is not None
        assert req.image_bytes().startswith(b"\x89PNG")

    def test_missing_instruction(self, golden_request):
        doc = dict(golden_request)
        del doc["instruction"]
        with pytest.raises(SchemaError, match="instruction"):
            validate_request(doc)

    def test_negative_step(self, golden_request):
        doc = dict(golden_request)
        doc["step"] = -1
        with pytest.raises(SchemaError, match="step"):
            validate_request(doc)

    def test_bad_base64(self, golden_request):
        doc = dict(golden_request)
        doc["image"] = "@@@"
        with pytest.raises(SchemaError, match="image"):
            validate_request(doc)

    def test_non_png_payload(self, golden_request):
        doc = dict(golden_request)
        doc["image"] = base64.b64encode(b"plain text").decode()
        with pytest.raises(SchemaError, match="image"):
            validate_request(doc)

    def test_malformed_json(self):
        with pytest.raises(SchemaError, match="JSON"):
            validate_request(b'{"nope"')

    def test_serialize_parse_round_trip(self, golden_request):
        req = validate_request(golden_request)
        again = validate_request(encode_request(req))
        assert again == req

    def test_all_act_fixture_bodies_round_trip(self):
        # every valid /act fixture body survives parse -> serialize -> parse
        for fx in load_fixtures(FIXTURES / "protocol"):
            if fx.path != "/act" or fx.expect_status != 200 or fx.body is None:
                continue
            req = validate_request(fx.body)
            again = validate_request(encode_request(req))
            assert again == req


class TestValidateResponse:
    def test_valid(self):
        r = validate_response({"action": [0.5, 0.0, 0.0, 0.0], "inference_ms": 3.2})
        assert r.action == (0.5, 0.0, 0.0, 0.0)

    def test_wrong_arity(self):
        with pytest.raises(SchemaError, match="action"):
            validate_response({"action": [1.0, 0.0, 0.0], "inference_ms": 0.0})

    def test_non_finite_entry(self):
        with pytest.raises(SchemaError, match="action"):
            validate_response({"action": [1.0, 0.0, 0.0, math.inf], "inference_ms": 0.0})


@pytest.fixture()
def zero_server():
    with serve(ZeroPolicy(), bind="127.0.0.1:0") as s:
        yield s


class TestServer:
    def test_act_with_zero_policy(self, zero_server, golden_request):
        r = requests.post(f"{zero_server.url}/act", json=golden_request, timeout=5)
        assert r.status_code == 200
        body = r.json()
        assert body["action"] == [0.0, 0.0, 0.0, 0.0]
        assert body["inference_ms"] >= 0

    def test_wrong_method_is_405(self, zero_server):
        r = requests.get(f"{zero_server.url}/act", timeout=5)
        assert r.status_code == 405

    def test_unknown_path_is_404(self, zero_server):
        r = requests.post(f"{zero_server.url}/somewhere", json={}, timeout=5)
        assert r.status_code == 404
        assert "error" in r.json()

    def test_invalid_image_is_400_mentioning_field(self, zero_server, golden_request):
        doc = dict(golden_request)
        doc["image"] = "!!!"
        r = requests.post(f"{zero_server.url}/act", json=doc, timeout=5)
        assert r.status_code == 400
        assert "image" in r.json()["error"]

    def test_policy_exception_is_500_and_server_survives(self, golden_request):
        class Exploding:
            name = "exploding"

            def __call__(self, obs):
                raise RuntimeError("boom")

        with serve(Exploding(), bind="127.0.0.1:0") as s:
            r = requests.post(f"{s.url}/act", json=golden_request, timeout=5)
            assert r.status_code == 500
            assert "error" in r.json()
            r2 = requests.get(f"{s.url}/health", timeout=5)
            assert r2.status_code == 200

    def test_health_reports_schema_version(self, zero_server):
        body = requests.get(f"{zero_server.url}/health", timeout=5).json()
        assert body == {"ok": True, "policy": "zero", "v": 1}

    def test_scripted_policy_without_state_is_400(self, single_gate_track, golden_request):
        doc = dict(golden_request)
        doc.pop("state")
        doc["instruction"] = "Fly through one gate"
        with serve(ScriptedPolicy(single_gate_track), bind="127.0.0.1:0") as s:
            r = requests.post(f"{s.url}/act", json=doc, timeout=5)
            assert r.status_code == 400
            assert "state" in r.json()["error"]

    def test_step_sequence_enforced_after_reset(self, zero_server, golden_request):
        url = zero_server.url
        requests.post(f"{url}/reset", json={"episode_id": "seq", "instruction": "x"}, timeout=5)
        doc = dict(golden_request)
        doc["episode_id"] = "seq"
        for step_no in (0, 1, 2):
            doc["step"] = step_no
            assert requests.post(f"{url}/act", json=doc, timeout=5).status_code == 200
        doc["step"] = 7
        r = requests.post(f"{url}/act", json=doc, timeout=5)
        assert r.status_code == 400
        assert "step" in r.json()["error"]


class TestBindResolution:
    def test_precedence(self, monkeypatch):
        from racesim.protocol import resolve_bind

        monkeypatch.delenv("RACE_BIND", raising=False)
        assert resolve_bind() == ("127.0.0.1", 8470)
        monkeypatch.setenv("RACE_BIND", "0.0.0.0:9001")
        assert resolve_bind() == ("0.0.0.0", 9001)
        assert resolve_bind("127.0.0.1:7777") == ("127.0.0.1", 7777)  # explicit wins

    def test_rejects_bad_address(self):
        from racesim.protocol import resolve_bind

        with pytest.raises(ValueError):
            resolve_bind("localhost")


def _oracle_requests(track, positions, episode_id, instruction="Fly through one gate"):
    """Build /act request docs following a position sequence."""
    docs = []
    for i, pos in enumerate(positions):
        docs.append(
            {
                "episode_id": episode_id,
                "step": i,
                "instruction": instruction,
                "image": json.loads((FIXTURES / "act_request_1.json").read_text())["image"],
                "state": {"position": list(pos), "velocity": [1.0, 0.0, 0.0], "yaw": 0.0},
            }
        )
    return docs


class TestEpisodeIsolation:
    def test_interleaved_episodes_match_solo_runs(self, single_gate_track):
        # The scripted oracle is stateful per episode; interleaving two
        # episodes must not change either one's responses.
        pos_a = [(-4.0 + 0.5 * i, 0.0, 1.5) for i in range(6)]
        pos_b = [(-4.0 + 0.5 * i, 1.0, 2.0) for i in range(6)]

        def collect_solo(positions, eid):
            with serve(ScriptedPolicy(single_gate_track), bind="127.0.0.1:0") as s:
                out = []
                requests.post(f"{s.url}/reset", json={"episode_id": eid, "instruction": "Fly through one gate"}, timeout=5)
                for doc in _oracle_requests(single_gate_track, positions, eid):
                    out.append(requests.post(f"{s.url}/act", json=doc, timeout=5).json()["action"])
                return out

        solo_a = collect_solo(pos_a, "ep-a")
        solo_b = collect_solo(pos_b, "ep-b")

        with serve(ScriptedPolicy(single_gate_track), bind="127.0.0.1:0") as s:
            for eid in ("ep-a", "ep-b"):
                requests.post(f"{s.url}/reset", json={"episode_id": eid, "instruction": "Fly through one gate"}, timeout=5)
            docs_a = _oracle_requests(single_gate_track, pos_a, "ep-a")
            docs_b = _oracle_requests(single_gate_track, pos_b, "ep-b")
            inter_a, inter_b = [], []
            for da, db in zip(docs_a, docs_b):
                inter_a.append(requests.post(f"{s.url}/act", json=da, timeout=5).json()["action"])
                inter_b.append(requests.post(f"{s.url}/act", json=db, timeout=5).json()["action"])

        assert inter_a == solo_a
        assert inter_b == solo_b


class TestConformanceSuite:
    def test_primary_server_passes_all_fixtures(self):
        fixtures = load_fixtures(FIXTURES / "protocol")
        assert len(fixtures) >= 12
        with serve(ConstantPolicy(), bind="127.0.0.1:0") as s:
            report = run_conformance(s.url, FIXTURES / "protocol")
        assert report.passed, report.summary()
