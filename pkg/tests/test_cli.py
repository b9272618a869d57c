import json
import re

import pytest

from pocmab.cli import main
from pocmab.harness import ExperimentConfig, read_csv, run_replication


def numbers(out, name):
    m = re.search(rf"{name} = (\S+)\s+\(se (\S+)\)", out)
    return float(m.group(1)), float(m.group(2))


def test_constants_single_arm(capsys):
    assert main(["constants", "--n", "1", "--samples", "100000"]) == 0
    out = capsys.readouterr().out
    c, se_c = numbers(out, "c_N")
    k, se_k = numbers(out, "k_N")
    assert abs(c) <= 3 * se_c
    assert abs(k - 1) <= 3 * se_k


def test_constants_rejects_tiny_sample(capsys):
    assert main(["constants", "--n", "2", "--samples", "10"]) == 2


@pytest.mark.parametrize("argv", [["frobnicate"], [], ["constants"], ["simulate"]])
def test_usage_errors(argv, capsys):
    assert main(argv) == 2
    assert capsys.readouterr().err


def test_simulate_default_config(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.yaml"
    cfg_path.write_text("{}\n")
    out = tmp_path / "res.csv"
    assert main(["simulate", "--config", str(cfg_path), "--out", str(out)]) == 0
    records = read_csv(out)
    cfg = ExperimentConfig()
    for policy in cfg.policies:
        assert sum(r.policy == policy.value for r in records) == cfg.T


def test_simulate_uses_output_path(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "c.json").write_text(json.dumps({"T": 5, "replications": 2, "d": 2, "N": 3, "output_path": "x.csv"}))
    assert main(["simulate", "--config", "c.json"]) == 0
    assert len(read_csv(tmp_path / "x.csv")) == 5 * 5


def test_simulate_bad_config(tmp_path, capsys):
    (tmp_path / "bad.yaml").write_text("T: -5\n")
    assert main(["simulate", "--config", str(tmp_path / "bad.yaml")]) == 2
    assert "T" in capsys.readouterr().err
    assert main(["simulate", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_validate_passes_on_reference_setup(tmp_path, capsys):
    (tmp_path / "cfg.yaml").write_text("d: 5\nN: 10\n")
    assert main(["validate", "--config", str(tmp_path / "cfg.yaml")]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 4
    assert "[FAIL]" not in out


def test_validate_reports_failure(tmp_path, capsys, monkeypatch):
    import pocmab.cli as cli

    monkeypatch.setattr(cli, "EQUIVALENCE_RTOL", -1.0)
    (tmp_path / "cfg.yaml").write_text("d: 2\nN: 3\n")
    assert main(["validate", "--config", str(tmp_path / "cfg.yaml"), "--steps", "20"]) == 1
    assert "[FAIL] batch_recursive_posterior" in capsys.readouterr().out
