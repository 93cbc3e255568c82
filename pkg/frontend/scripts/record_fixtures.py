"""Record service responses as JSON fixtures for the frontend tests.

Run from the repository root: python3 frontend/scripts/record_fixtures.py
"""

import json
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[2] / "tests"))

from fastapi.testclient import TestClient

from test_service import make_service, sizing_body

OUT = Path(__file__).resolve().parents[1] / "fixtures"


def dump(name, obj):
    (OUT / name).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n",
                            encoding="utf-8")
    print(f"wrote fixtures/{name}")


def main():
    OUT.mkdir(exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        service = make_service(Path(tmp), prewarm=True, seed=3)
        client = TestClient(service.app)

        dump("suc.json", client.get("/api/suc").json())
        dump("models.json", client.get("/api/models").json())

        feasible = client.post("/api/sizings",
                               json=sizing_body(tactics={"reuse_model": True}))
        assert feasible.status_code == 200, feasible.text
        record = feasible.json()
        dump("sizing_feasible.json", record)

        pareto = client.get(f"/api/pareto?sizing={record['id']}")
        assert pareto.status_code == 200
        dump("pareto.json", pareto.json())

        goal = {"bounds": [{"quality": "ELat", "operator": "<=",
                            "threshold": 1.0, "unit": "ms"}],
                "weights": {"ELat": 1.0}}
        infeasible = client.post(
            "/api/sizings", json=sizing_body(goal=goal,
                                             tactics={"reuse_model": True}))
        assert infeasible.status_code == 422, infeasible.text
        dump("sizing_infeasible.json", infeasible.json())

        bad = client.post("/api/sizings", json=sizing_body(
            goal={"weights": {"ELat": 0.5, "ECost": 0.6}}))
        assert bad.status_code == 400
        dump("error_validation.json", bad.json())


if __name__ == "__main__":
    main()
