import json

import pytest

from hevote.cli import EXIT_CERT_FAILED, EXIT_INVALID, EXIT_OK, main
from hevote.datasets import bundled_labels, bundled_path


def test_vote_sample_batch(tmp_path, capsys):
    out, cost = tmp_path / "r.jsonl", tmp_path / "cost.json"
    rc = main(["vote", "--logits", str(bundled_path("sample_batch.json")), "--out", str(out), "--breakdown", str(cost)])
    assert rc == EXIT_OK
    labels = [json.loads(line)["label"] for line in out.read_text().splitlines()]
    assert labels == bundled_labels()["sample_batch.json"]
    summary = json.loads(cost.read_text())
    assert summary["breakdown"]["argmax"] > summary["breakdown"]["aggregate"]
    assert json.loads(capsys.readouterr().out)["examples"] == len(labels)


def test_vote_empty(tmp_path):
    src = tmp_path / "empty.json"
    src.write_text(json.dumps({"m": 2, "n": 3, "d_min": 0, "d_max": 1, "examples": []}))
    out = tmp_path / "r.jsonl"
    assert main(["vote", "--logits", str(src), "--out", str(out)]) == EXIT_OK
    assert out.read_text() == ""


def test_vote_bounds_violation(tmp_path, capsys):
    src = tmp_path / "bad.json"
    src.write_text(json.dumps({"m": 1, "n": 2, "d_min": 0, "d_max": 1, "examples": [{"id": "too-big", "logits": [[0.5, 7.0]]}]}))
    assert main(["vote", "--logits", str(src), "--out", str(tmp_path / "r.jsonl")]) == EXIT_INVALID
    assert "too-big" in capsys.readouterr().err


def test_vote_with_config(tmp_path):
    cfg = tmp_path / "params.toml"
    cfg.write_text("ring_degree = 256\nnoise_std_per_mul = 0.0\nnoise_std_per_rot = 0.0\ncost_rot = 2.0\n")
    out = tmp_path / "r.jsonl"
    rc = main(["vote", "--logits", str(bundled_path("sample_batch.json")), "--config", str(cfg), "--backend", "sim", "--out", str(out)])
    assert rc == EXIT_OK
    labels = [json.loads(line)["label"] for line in out.read_text().splitlines()]
    assert labels == bundled_labels()["sample_batch.json"]


def test_bad_config(tmp_path):
    cfg = tmp_path / "params.toml"
    cfg.write_text("slots = 3\n")
    rc = main(["vote", "--logits", str(bundled_path("sample_batch.json")), "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert rc == EXIT_INVALID


def test_missing_file(tmp_path):
    assert main(["vote", "--logits", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == EXIT_INVALID


def test_certify_pass_and_fail(capsys):
    assert main(["certify", "--alpha", "6", "--grid", "20000", "--random", "1000"]) == EXIT_OK
    cert = json.loads(capsys.readouterr().out)
    assert set(cert) >= {"alpha", "d_f", "d_g", "max_err", "passed"} and cert["passed"]
    assert main(["certify", "--df", "1", "--dg", "1", "--degree", "3", "--grid", "20000"]) == EXIT_CERT_FAILED


def test_certify_sign_alias(capsys):
    assert main(["certify-sign", "--alpha", "6", "--grid", "1e4", "--random", "0"]) == EXIT_OK


def test_certify_grid_too_small():
    with pytest.raises(SystemExit) as exc:
        main(["certify", "--grid", "50"])
    assert exc.value.code == EXIT_INVALID


def test_bench_requires_seed():
    with pytest.raises(SystemExit) as exc:
        main(["bench", "--dims", "4"])
    assert exc.value.code == EXIT_INVALID


def test_bench_deterministic(tmp_path):
    cfg = tmp_path / "p.json"
    cfg.write_text(json.dumps({"ring_degree": 2048}))
    outs = []
    for k in range(2):
        out = tmp_path / f"r{k}.csv"
        args = ["bench", "--dims", "4,8", "--backend", "exact", "--seed", "7", "--out", str(out), "--config", str(cfg), "--no-wall"]
        assert main(args) == EXIT_OK
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    assert outs[0].splitlines()[0] == b"method,n,backend,sign_ops,rotations,mults,bootstraps,modeled_cost,wall_ms"


def test_bench_bad_dims(tmp_path):
    assert main(["bench", "--dims", "6", "--seed", "1", "--out", str(tmp_path / "r.csv")]) == EXIT_INVALID
