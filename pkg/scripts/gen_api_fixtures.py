"""Regenerate the shared HTTP API fixtures consumed by both test suites.

Drives a real (tiny) session through the service in-process and captures
example payloads for every endpoint. Run from the repository root:

    python scripts/gen_api_fixtures.py
"""

import json
from pathlib import Path

from fastapi.testclient import TestClient

from bope.service import create_app

OUT = Path(__file__).resolve().parent.parent / "frontend" / "fixtures"

CREATE_REQUEST = {
    "problem": "vlmop3",
    "iterations": 2,
    "init_observations": 5,
    "init_comparisons": 2,
    "ensemble_size": 2,
    "monotone": True,
    "train": {"epochs": 40},
    "acquisition": {"n_posterior_samples": 4, "raw_samples": 8, "restarts": 2},
    "seed": 424,
}

PREFERENCE_REQUESTS = [{"choice": "1"}, {"choice": "tie"}, {"choice": "2"}]


def main(tmp_dir: Path | None = None) -> dict:
    OUT.mkdir(parents=True, exist_ok=True)
    import tempfile

    workdir = tmp_dir or Path(tempfile.mkdtemp(prefix="bope-fixtures-"))
    fixtures = {}
    with TestClient(create_app(workdir)) as client:
        resp = client.post("/sessions", json=CREATE_REQUEST)
        assert resp.status_code == 201, resp.text
        fixtures["create_session_request"] = CREATE_REQUEST
        fixtures["create_session_response"] = resp.json()
        sid = resp.json()["id"]

        fixtures["session_response_idle"] = client.get(f"/sessions/{sid}").json()

        step = client.post(f"/sessions/{sid}/step")
        assert step.status_code == 200
        fixtures["step_response_awaiting"] = step.json()

        for i, body in enumerate(PREFERENCE_REQUESTS[:2]):
            fixtures[f"preference_request_{i}"] = body
            pref = client.post(f"/sessions/{sid}/preference", json=body)
            assert pref.status_code == 200, pref.text
            fixtures[f"preference_response_{i}"] = pref.json()
            if i == 0:
                nxt = client.post(f"/sessions/{sid}/step")
                assert nxt.status_code == 200

        # one real optimization step so the trace has an experiment entry
        step2 = client.post(f"/sessions/{sid}/step")
        assert step2.status_code == 200, step2.text
        fixtures["step_response_experimented"] = step2.json()
        fixtures["preference_request_2"] = PREFERENCE_REQUESTS[2]
        pref = client.post(f"/sessions/{sid}/preference", json=PREFERENCE_REQUESTS[2])
        assert pref.status_code == 200
        fixtures["preference_response_2"] = pref.json()

        fixtures["trace_response"] = client.get(f"/sessions/{sid}/trace").json()

        conflict = client.post(f"/sessions/{sid}/preference", json={"choice": "1"})
        assert conflict.status_code == 409
        fixtures["error_response_conflict"] = conflict.json()
        missing = client.get("/sessions/does-not-exist")
        assert missing.status_code == 404
        fixtures["error_response_not_found"] = missing.json()

    for name, payload in fixtures.items():
        (OUT / f"{name}.json").write_text(json.dumps(payload, indent=1, sort_keys=True))
    print(f"{len(fixtures)} fixtures written to {OUT}")
    return fixtures


if __name__ == "__main__":
    main()
