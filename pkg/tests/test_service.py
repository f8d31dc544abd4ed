import time

import pytest
from fastapi.testclient import TestClient

from torusflow.service import create_app


@pytest.fixture()
def client():
    with TestClient(create_app()) as c:
        yield c


TINY = {
    "n": 16,
    "m": 16,
    "eps_list": [0.4, 0.2],
    "T": 0.02,
    "replicas": 2,
    "k_max": 2,
    "master_seed": 9,
    "diag_samples_scale": 0.05,
}


def wait_job(client, job_id, timeout=120):
    deadline = time.time() + timeout
    while time.time() < deadline:
        r = client.get(f"/jobs/{job_id}")
        assert r.status_code == 200
        body = r.json()
        if body["state"] in ("done", "failed"):
            return body
        time.sleep(0.1)
    raise TimeoutError("job did not finish")


class TestEndpoints:
    def test_health(self, client):
        r = client.get("/health")
        assert r.status_code == 200
        assert r.json()["status"] == "ok"

    def test_config_validation_rejects_bad_rho(self, client):
        r = client.post("/config/validate", json={"rho": 2.5})
        assert r.status_code == 422

    def test_config_validation_rejects_bad_system(self, client):
        r = client.post("/config/validate", json={"system": "all"})
        assert r.status_code == 422

    def test_diagnostics_sync(self, client):
        cfg = dict(TINY, n=32, m=32)
        r = client.post("/diagnostics", json={"config": cfg})
        assert r.status_code == 200
        body = r.json()
        assert body["all_pass"] is True
        names = {e["name"] for e in body["entries"]}
        assert "biot_savart_roundtrip" in names
        assert "gamma_ode_bound" in names

    def test_sweep_job_lifecycle(self, client, tmp_path):
        cfg = dict(TINY, out_dir=str(tmp_path))
        r = client.post("/sweep", json={"config": cfg, "write_files": False})
        assert r.status_code == 200
        body = wait_job(client, r.json()["job_id"])
        assert body["state"] == "done", body
        sweep = body["sweep"]
        assert sweep["n_failed"] == 0
        metrics = {row["metric"] for row in sweep["rows"]}
        assert {"flow_l1_se", "flow_l1_e", "vel_l1_se", "weak_gap_e"} <= metrics
        assert sweep["csv_text"].splitlines()[0] == "eps,metric,mean,stderr,n_replicas"

    def test_single_job(self, client, tmp_path):
        cfg = dict(TINY, out_dir=str(tmp_path), system="se")
        r = client.post("/single", json={"config": cfg, "eps": 0.3, "replica": 0})
        body = wait_job(client, r.json()["job_id"])
        assert body["state"] == "done", body
        assert any(f.endswith("index.txt") for f in body["single"]["files"])

    def test_unknown_job_404(self, client):
        assert client.get("/jobs/doesnotexist").status_code == 404
