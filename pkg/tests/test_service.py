import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from nlborn import cli
from nlborn.experiments import ExperimentConfig, read_json
from nlborn.service import create_app


TINY = dict(
    name="svc",
    data_h=0.14,
    recon_h=0.2,
    n_src=4,
    n_det=8,
    wavenumbers=[1.0],
    g0=0.1,
    sigma=0.5,
    rcond=1e-6,
    ibs_order=2,
    phantom={"kind": "disk"},
)


@pytest.fixture()
def client(tmp_path, monkeypatch):
    monkeypatch.setenv("NLBORN_OUTPUT_ROOT", str(tmp_path))
    with TestClient(create_app()) as c:
        yield c, tmp_path


def test_health(client):
    c, _ = client
    doc = c.get("/health").json()
    assert doc["status"] == "ok"


def test_grid_endpoint(client):
    c, root = client
    resp = c.post("/grid", json={"target_h": 0.2, "name": "g"})
    assert resp.status_code == 200
    doc = resp.json()
    assert doc["n_nodes"] > 0
    assert (root / "g.json").exists()
    bad = c.post("/grid", json={"target_h": 0.9})
    assert bad.status_code == 422


def test_phantom_endpoint(client):
    c, root = client
    resp = c.post("/phantom", json={"config": TINY})
    assert resp.status_code == 200
    assert resp.json()["contrast"] == pytest.approx(5.0, rel=1e-9)


def test_forward_reconstruct_bounds_sweep(client):
    c, root = client
    fwd = c.post("/forward", json={"config": TINY})
    assert fwd.status_code == 200
    body = fwd.json()
    assert body["status"] == 0
    run_dir = body["run_dir"]

    rec = c.post("/reconstruct", json={"config": TINY, "data_dir": run_dir})
    assert rec.status_code == 200
    rbody = rec.json()
    assert rbody["orders_computed"] == 2
    assert rbody["status"] in (0, 3)

    # mismatched config is refused
    other = dict(TINY, g0=0.05)
    conflict = c.post("/reconstruct", json={"config": other, "data_dir": run_dir})
    assert conflict.status_code == 409

    bounds = c.post("/bounds", json={"config": TINY, "data_dir": run_dir})
    assert bounds.status_code == 200
    assert "inverse radius" in bounds.json()["table"]

    sweep = c.post("/sweep", json={"config": TINY, "g0_values": [0.1, 0.01]})
    rows = sweep.json()["rows"]
    assert rows[0]["r"] < rows[1]["r"]


def test_cli_end_to_end(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("NLBORN_OUTPUT_ROOT", str(tmp_path))
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(TINY))

    assert cli.main(["grid", "--target-h", "0.2"]) == 0
    assert "nodes" in capsys.readouterr().out

    assert cli.main(["phantom", "--config", str(cfg_path)]) == 0
    assert "contrast" in capsys.readouterr().out

    code = cli.main(["forward", "--config", str(cfg_path)])
    out = capsys.readouterr().out
    assert code == 0
    assert "inverse radius" in out
    run_dir = tmp_path / "svc"

    code = cli.main(["reconstruct", "--config", str(cfg_path), "--data", str(run_dir)])
    out = capsys.readouterr().out
    assert code in (0, 3)
    assert "correction sup-norms" in out

    code = cli.main(["bounds", "--config", str(cfg_path), "--data", str(run_dir)])
    out = capsys.readouterr().out
    assert code == 0
    assert "small-data hypothesis" in out

    code = cli.main(["sweep", "--config", str(cfg_path), "--g0-values", "0.1", "0.01"])
    out = capsys.readouterr().out
    assert code == 0
    assert "g0" in out


def test_cli_flag_overrides(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("NLBORN_OUTPUT_ROOT", str(tmp_path))
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(TINY))
    code = cli.main(["phantom", "--config", str(cfg_path), "--phantom",
                     "three_gaussians", "--name", "override"])
    assert code == 0
    info = read_json(tmp_path / "override" / "phantom.json")
    assert info["kind"] == "three_gaussians"


def test_cli_reads_persisted_config_artifact(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("NLBORN_OUTPUT_ROOT", str(tmp_path))
    cfg = ExperimentConfig(**TINY)
    artifact = {"format": "exp-config/1", "config_hash": "x", "config": cfg.model_dump()}
    cfg_path = tmp_path / "persisted.json"
    cfg_path.write_text(json.dumps(artifact))
    assert cli.main(["phantom", "--config", str(cfg_path)]) == 0
