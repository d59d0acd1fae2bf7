import math

import pytest
from fastapi.testclient import TestClient

from gvx.service.app import create_app


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


class TestCdfEndpoint:
    def test_schema_keys(self, client):
        resp = client.post("/cdf", json={"alpha": 1.0, "n": 1, "dist": "ssq",
                                         "at": 1.5})
        assert resp.status_code == 200
        body = resp.json()
        for key in ["alpha", "n", "statistic", "x", "cdf", "representation",
                    "terms_used", "est_error"]:
            assert key in body

    def test_gamma_reduction(self, client):
        resp = client.post("/cdf", json={"alpha": 1.0, "n": 1, "dist": "ssq",
                                         "at": 1.5})
        assert resp.json()["cdf"] == pytest.approx(1 - math.exp(-1.5),
                                                   abs=1e-10)

    def test_s_converts_threshold(self, client):
        # Pr{S <= x} == Pr{S^2 <= x^2}
        a = client.post("/cdf", json={"alpha": 1.0, "n": 5, "dist": "s",
                                      "at": 1.4}).json()
        b = client.post("/cdf", json={"alpha": 1.0, "n": 5, "dist": "svar",
                                      "at": 1.96}).json()
        assert a["cdf"] == pytest.approx(b["cdf"], abs=1e-12)

    def test_u_dist(self, client):
        resp = client.post("/cdf", json={"alpha": 1.0, "n": 2, "dist": "u",
                                         "at": 0.9})
        assert resp.json()["cdf"] == pytest.approx(math.sqrt(0.62), abs=1e-3)

    def test_invalid_params(self, client):
        resp = client.post("/cdf", json={"alpha": -1.0, "n": 2, "at": 1.0})
        assert resp.status_code == 422
        resp = client.post("/cdf", json={"alpha": 1.0, "n": 2, "dist": "u",
                                         "at": 0.2})
        assert resp.status_code == 422

    def test_representation_override(self, client):
        resp = client.post("/cdf", json={"alpha": 1.0, "n": 3, "dist": "ssq",
                                         "at": 2.0,
                                         "representation": "mixture"})
        assert resp.json()["representation"] == "mixture"


class TestOtherEndpoints:
    def test_healthz(self, client):
        assert client.get("/healthz").json() == {"status": "ok"}

    def test_config(self, client):
        body = client.get("/config").json()
        assert body["defaults"]["tol"] == 1e-10
        assert body["defaults"]["representation"] == "auto"

    def test_coeffs(self, client):
        resp = client.post("/coeffs", json={"alpha": 1.0, "n": 2, "kmax": 4})
        body = resp.json()
        assert len(body["rows"]) == 5
        row0 = body["rows"][0]
        assert row0["beta_sign"] == 1
        assert row0["mu"] == pytest.approx(math.pi / 2, rel=1e-12)
        assert body["rows"][1]["beta_sign"] == -1

    def test_angle(self, client):
        resp = client.post("/angle", json={"alpha": 1.0, "n": 2, "t": 0.5})
        body = resp.json()
        assert body["cdf"] == pytest.approx(0.5, abs=1e-12)
        resp = client.post("/angle", json={"alpha": 1.0, "n": 2})
        assert resp.json()["coefficients"] == pytest.approx([2.0], rel=1e-12)

    def test_angle_non_integer_alpha(self, client):
        resp = client.post("/angle", json={"alpha": 1.5, "n": 2, "t": 0.3})
        assert resp.status_code == 422

    def test_verify_small(self, client):
        resp = client.post("/verify", json={"alpha": 1.0, "n": 2,
                                            "samples": 20000, "seed": 3})
        body = resp.json()
        assert body["passed"] is True
        assert body["identity_max_rel"] < 1e-12
        assert "Z" in body["statistics"]
