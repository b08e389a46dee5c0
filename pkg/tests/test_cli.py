import subprocess
import sys

import numpy as np
import pytest
import yaml
from fastapi.testclient import TestClient

from hawkesnn.cli import main
from hawkesnn.harness import load_counts_csv
from hawkesnn.service.app import create_app

PARAMS = {"background": {"kind": "constant", "params": {"nu": 2.0}}, "eta": 0.6,
          "kernel": {"kind": "exponential", "params": {"beta": 2.0}}}


def run(capsys, *args):
    code = main([str(a) for a in args])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture()
def params_file(tmp_path):
    p = tmp_path / "params.yaml"
    p.write_text(yaml.safe_dump(PARAMS))
    return p


class TestSimulate:
    def test_to_file(self, capsys, tmp_path, params_file):
        code, _, _ = run(capsys, "--seed", 3, "simulate", "--params", params_file, "--horizon", 50,
                         "--out", tmp_path / "c.csv", "--events", tmp_path / "e.txt")
        assert code == 0
        c = load_counts_csv(tmp_path / "c.csv")
        assert c.K == 50 and c.total == np.loadtxt(tmp_path / "e.txt", skiprows=1, ndmin=1).size

    def test_seed_reproducible(self, capsys, params_file):
        a = run(capsys, "simulate", "--params", params_file, "--horizon", 30, "--seed", 5)[1]
        b = run(capsys, "--seed", 5, "simulate", "--params", params_file, "--horizon", 30)[1]
        c = run(capsys, "simulate", "--params", params_file, "--horizon", 30, "--seed", 6)[1]
        assert a == b and a != c and a.startswith("interval_end_time,count")

    def test_preset_and_widths(self, capsys):
        code, out, _ = run(capsys, "simulate", "--preset", "table9", "--horizon", 10, "--widths", "0.25,0.75")
        assert code == 0 and len(out.splitlines()) == 21

    def test_theta_form(self, capsys, tmp_path):
        p = tmp_path / "t.yaml"
        p.write_text(yaml.safe_dump({"model": {"kernel": "gamma"}, "theta": [2.0, 0.5, 1.5, 0.25]}))
        assert run(capsys, "simulate", "--params", p, "--horizon", 5)[0] == 0


class TestPipeline:
    def test_train_estimate_bootstrap(self, capsys, tmp_path, tiny_files):
        ts = tmp_path / "ts"
        code, out, _ = run(capsys, "--seed", 2, "make-training-set", "--preset", "smoke", "-M", 150,
                           "--out", ts)
        assert code == 0 and "wrote 150 rows" in out
        bundle = tmp_path / "b.json"
        code, out, _ = run(capsys, "train", ts, "--epochs", 3, "--out", bundle)
        assert code == 0 and bundle.exists()
        counts = tiny_files / "counts.csv"
        code, out, _ = run(capsys, "estimate", bundle, counts)
        assert code == 0 and out.splitlines()[0] == "name,est" and len(out.splitlines()) == 4
        code, out, _ = run(capsys, "bootstrap", bundle, counts, "-B", 4, "--seed", 1)
        assert code == 0 and out.splitlines()[0] == "name,est,bce,se,ci_lo,ci_hi"
        assert run(capsys, "bootstrap", bundle, counts, "-B", 4, "--seed", 1)[1] == out

    def test_training_set_with_counts(self, capsys, tmp_path, tiny_files):
        code, _, _ = run(capsys, "make-training-set", "--preset", "smoke", "-M", 120,
                         "--counts", tiny_files / "counts.csv", "--out", tmp_path / "ts")
        assert code == 0 and (tmp_path / "ts" / "statistics.csv").exists()

    def test_summarize(self, capsys, tiny_files):
        code, out, _ = run(capsys, "summarize", tiny_files / "counts.csv", "--preset", "smoke")
        lines = out.splitlines()
        assert code == 0 and lines[0] == "imp_nu,imp_eta,imp_beta" and len(lines[1].split(",")) == 3

    def test_server_client(self, capsys, tiny_files, tiny_bundle, monkeypatch):
        import httpx
        client = TestClient(create_app({"default": tiny_bundle}))
        monkeypatch.setattr(httpx, "post", lambda url, json, timeout: client.post(url[len("http://x"):], json=json))
        counts = tiny_files / "counts.csv"
        remote = run(capsys, "estimate", "default", counts, "--server", "http://x")[1]
        local = run(capsys, "estimate", tiny_files / "bundle.json", counts)[1]
        assert remote == local
        remote = run(capsys, "bootstrap", "default", counts, "--server", "http://x", "-B", 3)[1]
        local = run(capsys, "bootstrap", tiny_files / "bundle.json", counts, "-B", 3)[1]
        assert remote == local
        code, _, err = run(capsys, "estimate", "missing", counts, "--server", "http://x")
        assert code != 0 and "404" in err


class TestStudyAndOutputs:
    def test_study_and_hist(self, capsys, tmp_path):
        out_dir = tmp_path / "st"
        code, out, _ = run(capsys, "--seed", 4, "study", "--preset", "smoke", "-M", 150, "-J", 4, "-B", 3,
                           "--out", out_dir)
        assert code == 0 and "row,nu,eta,beta" in out and "CP," in out
        code, out, _ = run(capsys, "hist", out_dir / "replicates_main.csv", "--bins", 3, "--out", tmp_path / "h")
        assert code == 0 and len(out.splitlines()) == 3
        assert (tmp_path / "h" / "bce_eta.csv").exists()

    def test_bands(self, capsys, params_file):
        code, out, _ = run(capsys, "bands", "--params", params_file, "--horizon", 104, "--n-sims", 3)
        assert code == 0 and len(out.splitlines()) == 53

    def test_lags(self, capsys, tiny_files):
        code, out, _ = run(capsys, "lags", tiny_files / "counts.csv", "--p", "1,2")
        assert code == 0 and len(out.splitlines()) == 3


class TestErrors:
    @pytest.mark.parametrize("args", [
        ["simulate", "--horizon", 10],
        ["simulate", "--preset", "nope"],
        ["study", "--out", "x"],
        ["--threads", 0, "simulate", "--preset", "smoke"],
        ["estimate", "missing.json", "missing.csv"],
        ["bogus-command"],
    ])
    def test_nonzero_exit(self, capsys, args):
        assert run(capsys, *args)[0] != 0

    def test_bad_csv_reports_line(self, capsys, tmp_path, tiny_files):
        f = tmp_path / "bad.csv"
        f.write_text("1,2\n0.5,3\n")
        code, _, err = run(capsys, "estimate", tiny_files / "bundle.json", f)
        assert code == 1 and ":2:" in err

    def test_console_script_exit_code(self, tmp_path):
        r = subprocess.run([sys.executable, "-m", "hawkesnn.cli", "simulate", "--horizon", "5"],
                           capture_output=True, text=True)
        assert r.returncode != 0
        r = subprocess.run([sys.executable, "-m", "hawkesnn.cli", "--help"], capture_output=True, text=True)
        assert r.returncode == 0
        for cmd in ("simulate", "summarize", "make-training-set", "train", "estimate", "bootstrap",
                    "study", "bands", "hist"):
            assert cmd in r.stdout
