import pytest
from fastapi.testclient import TestClient

import fpdiff.service as service
from fpdiff.errors import NonFiniteIterateError


@pytest.fixture()
def client():
    return TestClient(service.app)


def test_health(client):
    body = client.get("/health").json()
    assert body["status"] == "ok"


def test_accuracy_endpoint_returns_csv(client):
    response = client.post(
        "/run/accuracy",
        json={"experiment": "quadratic_synthetic", "k": 8,
              "estimators": ["onestep", "implicit"]},
    )
    assert response.status_code == 200
    body = response.json()
    lines = body["csv"].splitlines()
    assert lines[0].startswith("schema,experiment")
    assert body["row_count"] == len(lines) - 1 > 0


def test_schema_validation_maps_to_422(client):
    response = client.post(
        "/run/accuracy",
        json={"experiment": "ridge_gd", "cond_target": 0.5},
    )
    assert response.status_code == 422


def test_config_error_maps_to_400(client):
    response = client.post("/run/timing", json={"experiment": "ridge_gd"})
    assert response.status_code == 400
    assert "timing" in response.json()["detail"]


def test_numerical_error_maps_to_500(client, monkeypatch):
    def explode(config):
        raise NonFiniteIterateError("diverged")

    monkeypatch.setattr(service, "run_accuracy", explode)
    response = client.post(
        "/run/accuracy", json={"experiment": "quadratic_synthetic"}
    )
    assert response.status_code == 500
    assert response.json()["detail"].startswith("numerical:")


def test_selftest_endpoint(client):
    response = client.post("/selftest")
    assert response.status_code == 200
    body = response.json()
    assert body["passed"] is True
    assert "resolvent-identity" in body["report"]


def test_bilevel_endpoint(client):
    response = client.post(
        "/run/bilevel",
        json={"experiment": "quadratic_synthetic", "outer_steps": 3, "k": 20,
              "estimators": ["onestep"], "sizes": [[3]]},
    )
    assert response.status_code == 200
    assert response.json()["row_count"] == 4  # 3 steps + certificate
