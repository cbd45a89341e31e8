import math

import pytest
from fastapi.testclient import TestClient

from app.main import app

client = TestClient(app)


def test_gmf():
    response = client.get("/gmf", params={"n": 2, "jmax": 4})
    assert response.status_code == 200
    values = response.json()["values"]
    assert values[:3] == [0.0, 0.0, pytest.approx(1.0)]


def test_gmf_rejects_bad_codimension():
    assert client.get("/gmf", params={"n": 0}).status_code == 422


def test_gkf_table():
    response = client.get("/gkf-table", params={"manifold": "torus:2", "codim": 2, "nodes": 16})
    assert response.status_code == 200
    rows = response.json()["rows"]
    assert rows[0]["expected_lkc"] == pytest.approx(2 * math.pi, rel=1e-8)


def test_lkc_reference():
    response = client.post("/lkc", json={"manifold": "sphere:1", "nodes": 32})
    assert response.status_code == 200
    body = response.json()
    assert body["lkc"][0] == pytest.approx(2.0, abs=1e-6)
    assert body["lkc"][1] == 0.0


def test_lkc_pullback():
    response = client.post("/lkc", json={"manifold": "sphere:1", "metric": "pullback", "k": 20, "waves": 32, "nodes": 32})
    assert response.status_code == 200
    assert response.json()["lkc"][0] == pytest.approx(2.0, abs=1e-4)


def test_bad_manifold_is_a_bad_request():
    response = client.post("/lkc", json={"manifold": "klein:2"})
    assert response.status_code == 400
    assert "klein" in response.json()["detail"]


def test_small_experiment():
    payload = {"kind": "converge", "manifold": "torus:2", "waves": 16, "k_list": [16],
               "replicates": 2, "grid": 8, "nodes": 16}
    response = client.post("/experiments", json=payload)
    assert response.status_code == 200
    summary = response.json()
    assert summary["kind"] == "converge"
    assert summary["excluded"] == 0
    assert summary["per_k"]["16"]["order0"]["n"] == 2


def test_experiment_with_empty_k_list_is_rejected():
    response = client.post("/experiments", json={"kind": "converge", "k_list": []})
    assert response.status_code == 422
