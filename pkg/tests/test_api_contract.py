"""Shared-fixture API contract: the service accepts every client-side
request fixture, and live responses carry the exact structure captured in
the response fixtures the browser client parses."""

import json
from pathlib import Path

from fastapi.testclient import TestClient

from bope.service import create_app

FIXTURES = Path(__file__).parent.parent / "frontend" / "fixtures"


def load(name: str) -> dict:
    return json.loads((FIXTURES / f"{name}.json").read_text())


def assert_same_shape(live, fixture, path="$"):
    """Recursive structural equality: same keys, same JSON types."""
    if isinstance(fixture, dict):
        assert isinstance(live, dict), f"{path}: expected object, got {type(live)}"
        assert set(live) == set(fixture), (
            f"{path}: keys differ: {sorted(set(live) ^ set(fixture))}"
        )
        for key in fixture:
            assert_same_shape(live[key], fixture[key], f"{path}.{key}")
    elif isinstance(fixture, list):
        assert isinstance(live, list), f"{path}: expected array, got {type(live)}"
        if fixture and live:
            assert_same_shape(live[0], fixture[0], f"{path}[0]")
    elif fixture is None:
        pass  # nullable field; the fixture captured the null variant
    elif isinstance(fixture, bool):
        assert isinstance(live, bool), f"{path}: expected bool"
    elif isinstance(fixture, (int, float)):
        assert isinstance(live, (int, float)) and not isinstance(live, bool), (
            f"{path}: expected number, got {type(live)}"
        )
    else:
        assert isinstance(live, str), f"{path}: expected string, got {type(live)}"


def test_fixture_exists_for_every_endpoint():
    names = {p.stem for p in FIXTURES.glob("*.json")}
    required = {
        "create_session_request",
        "create_session_response",
        "session_response_idle",
        "step_response_awaiting",
        "preference_request_0",
        "preference_response_0",
        "trace_response",
        "error_response_conflict",
        "error_response_not_found",
    }
    assert required <= names, f"missing fixtures: {sorted(required - names)}"


def test_live_service_matches_response_fixtures(tmp_path):
    with TestClient(create_app(tmp_path / "sessions")) as client:
        create = client.post("/sessions", json=load("create_session_request"))
        assert create.status_code == 201
        assert_same_shape(create.json(), load("create_session_response"))
        sid = create.json()["id"]

        live = client.get(f"/sessions/{sid}").json()
        assert_same_shape(live, load("session_response_idle"))

        step = client.post(f"/sessions/{sid}/step")
        assert step.status_code == 200
        assert_same_shape(step.json(), load("step_response_awaiting"))

        for i in range(2):
            pref = client.post(
                f"/sessions/{sid}/preference", json=load(f"preference_request_{i}")
            )
            assert pref.status_code == 200
            assert_same_shape(pref.json(), load(f"preference_response_{i}"))
            if i == 0:
                assert client.post(f"/sessions/{sid}/step").status_code == 200

        assert client.post(f"/sessions/{sid}/step").status_code == 200
        pref = client.post(
            f"/sessions/{sid}/preference", json=load("preference_request_2")
        )
        assert pref.status_code == 200

        trace = client.get(f"/sessions/{sid}/trace")
        assert_same_shape(trace.json(), load("trace_response"))

        conflict = client.post(f"/sessions/{sid}/preference", json={"choice": "1"})
        assert conflict.status_code == 409
        assert_same_shape(conflict.json(), load("error_response_conflict"))
        missing = client.get("/sessions/nope")
        assert missing.status_code == 404
        assert_same_shape(missing.json(), load("error_response_not_found"))


def test_request_fixtures_accepted_verbatim(tmp_path):
    """Every client-built request fixture is accepted by the service."""
    with TestClient(create_app(tmp_path / "sessions")) as client:
        create = client.post("/sessions", json=load("create_session_request"))
        assert create.status_code == 201
        sid = create.json()["id"]
        for i in range(3):
            body = load(f"preference_request_{i}")
            assert client.post(f"/sessions/{sid}/step").status_code == 200
            resp = client.post(f"/sessions/{sid}/preference", json=body)
            assert resp.status_code == 200, resp.text
