import numpy as np
import pytest
from fastapi.testclient import TestClient

from hawkesnn.estimator import bootstrap, estimate
from hawkesnn.harness import load_counts_csv
from hawkesnn.service.app import create_app, parse_bundle_env

PARAMS = {"background": {"kind": "constant", "params": {"nu": 2.0}}, "eta": 0.6,
          "kernel": {"kind": "exponential", "params": {"beta": 2.0}}}


@pytest.fixture(scope="module")
def client(tiny_bundle):
    return TestClient(create_app({"default": tiny_bundle}))


@pytest.fixture(scope="module")
def counts(tiny_files):
    return load_counts_csv(tiny_files / "counts.csv")


def payload(counts, **kw):
    return {"counts": counts.counts.tolist(), "grid": {"times": counts.grid.times.tolist()}, **kw}


def test_health(client):
    r = client.get("/health")
    assert r.status_code == 200 and r.json()["bundles"] == ["default"]


def test_bundles(client):
    info = client.get("/bundles").json()[0]
    assert info["names"] == ["nu", "eta", "beta"] and info["statistic_dim"] == 3


def test_simulate(client):
    body = {"params": PARAMS, "grid": {"horizon": 50, "width": 1}, "seed": 3, "include_times": True}
    r = client.post("/simulate", json=body).json()
    assert len(r["counts"]) == 50 and sum(r["counts"]) == len(r["times"])
    assert client.post("/simulate", json=body).json() == r


def test_summarize(client, tiny_bundle, counts):
    r = client.post("/summarize", json=payload(counts, summary=tiny_bundle.summary.to_dict())).json()
    assert r["names"] == ["imp_nu", "imp_eta", "imp_beta"] and len(r["values"]) == 3


def test_estimate_matches_library(client, tiny_bundle, counts):
    r = client.post("/estimate", json=payload(counts)).json()
    np.testing.assert_array_equal(r["theta"], estimate(tiny_bundle, counts))


def test_estimate_default_grid(client, counts):
    r = client.post("/estimate", json={"counts": counts.counts.tolist()})
    assert r.status_code == 200


def test_bootstrap(client, tiny_bundle, counts):
    r = client.post("/bootstrap", json=payload(counts, B=5, seed=2)).json()
    rep = bootstrap(tiny_bundle, estimate(tiny_bundle, counts), 5, 2, grid=counts.grid)
    np.testing.assert_array_equal(r["theta_bce"], rep.theta_bce)
    np.testing.assert_allclose(r["ci_hi"], rep.ci_hi)


def test_bands(client):
    body = {"params": PARAMS, "grid": {"horizon": 104, "width": 1}, "n_sims": 3}
    r = client.post("/bands", json=body).json()
    assert len(r["weeks"]) == 52 and all(a <= b for a, b in zip(r["lo"], r["hi"]))


def test_unknown_bundle(client, counts):
    assert client.post("/estimate", json=payload(counts, bundle="nope")).status_code == 404


@pytest.mark.parametrize("body", [
    {"counts": [1, 2], "grid": {"horizon": 3, "width": 1}},
    {"counts": [1, 2], "grid": {"horizon": 2}},
    {"counts": [0, 0], "grid": {"horizon": 2, "width": 1}},
    {"counts": [1, -2], "grid": {"horizon": 2, "width": 1}},
])
def test_bad_input(client, body):
    assert client.post("/estimate", json=body).status_code == 422


def test_malformed_params(client):
    body = {"params": {"background": {"kind": "constant"}, "eta": 0.6}, "grid": {"horizon": 5, "width": 1}}
    r = client.post("/simulate", json=body)
    assert r.status_code == 422 and "malformed" in r.json()["detail"]


def test_bootstrap_b_validated(client, counts):
    assert client.post("/bootstrap", json=payload(counts, B=1)).status_code == 422


def test_parse_bundle_env():
    assert parse_bundle_env("a=/x.json, b=/y.json") == {"a": "/x.json", "b": "/y.json"}
    assert parse_bundle_env("/z.json") == {"default": "/z.json"}
    assert parse_bundle_env("") == {}


def test_load_from_path(tiny_files):
    c = TestClient(create_app({"m": str(tiny_files / "bundle.json")}))
    assert c.get("/health").json()["bundles"] == ["m"]
