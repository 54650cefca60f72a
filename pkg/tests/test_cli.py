import json
import os

import pytest

from bosegas.cli import main
from bosegas.config import default_config_doc, validate_config
from bosegas.errors import ConfigurationError


def _write_config(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def _small_doc():
    doc = default_config_doc()
    doc["params"]["steps"] = 12
    doc["sampler"].update({"burn_in": 300, "n_samples": 60, "thin": 5})
    doc["oracle"].update({"bridge_samples": 2000, "position_nodes": 6})
    return doc


def test_config_validation_rejects_unknown_keys():
    doc = default_config_doc()
    doc["oops"] = 1
    with pytest.raises(ConfigurationError):
        validate_config(doc)
    doc2 = default_config_doc()
    doc2["params"]["betaa"] = 2.0
    with pytest.raises(ConfigurationError):
        validate_config(doc2)


def test_config_validation_ranges_and_types():
    doc = default_config_doc()
    doc["params"]["d"] = 9
    with pytest.raises(ConfigurationError):
        validate_config(doc)
    doc2 = default_config_doc()
    doc2["params"]["beta"] = "hot"
    with pytest.raises(ConfigurationError):
        validate_config(doc2)
    doc3 = default_config_doc()
    doc3["model"]["potential"] = "mystery"
    with pytest.raises(ConfigurationError):
        validate_config(doc3)


def test_config_hash_stable_under_key_order():
    doc = default_config_doc()
    cfg1 = validate_config(doc)
    shuffled = json.loads(json.dumps(doc))
    cfg2 = validate_config(dict(reversed(list(shuffled.items()))))
    assert cfg1.config_hash == cfg2.config_hash


def test_cli_exit_codes(tmp_path):
    # schema violation -> 2
    bad = _write_config(tmp_path, {"model": {"potential": "bump"}, "params": {}})
    assert main(["sample", "--config", bad, "--out", str(tmp_path / "o1")]) == 2
    # missing subcommand -> 2
    assert main(["--config", bad]) == 2
    # budget violation -> 3
    doc = _small_doc()
    doc["oracle"].update({"n_max": 6, "position_nodes": 16, "budget": 1e5})
    cfgp = _write_config(tmp_path, doc, "budget.json")
    assert main(["oracle", "--config", cfgp, "--out", str(tmp_path / "o2")]) == 3


def test_cli_sample_artifacts_and_determinism(tmp_path):
    cfgp = _write_config(tmp_path, _small_doc())
    out1 = tmp_path / "run1"
    out2 = tmp_path / "run2"
    assert main(["sample", "--config", cfgp, "--out", str(out1)]) == 0
    assert main(["sample", "--config", cfgp, "--out", str(out2)]) == 0
    rec1 = (out1 / "records.jsonl").read_bytes()
    rec2 = (out2 / "records.jsonl").read_bytes()
    assert rec1 == rec2  # byte-identical statistic streams
    assert (out1 / "cycle_hist.csv").exists()
    assert (out1 / "cycle_hist.svg").exists()
    assert (out1 / "config_replica0.json").exists()
    lines = [json.loads(l) for l in rec1.decode().splitlines()]
    assert all("config_hash" in r and "seed" in r for r in lines)


def test_cli_seed_flag_and_env_override(tmp_path, monkeypatch):
    cfgp = _write_config(tmp_path, _small_doc())
    out1 = tmp_path / "s1"
    out2 = tmp_path / "s2"
    out3 = tmp_path / "s3"
    assert main(["sample", "--config", cfgp, "--seed", "7", "--out", str(out1)]) == 0
    assert main(["sample", "--config", cfgp, "--seed", "8", "--out", str(out2)]) == 0
    assert (out1 / "records.jsonl").read_bytes() != (out2 / "records.jsonl").read_bytes()
    monkeypatch.setenv("BOSEGAS_SEED", "7")
    assert main(["sample", "--config", cfgp, "--out", str(out3)]) == 0
    assert (out1 / "records.jsonl").read_bytes() == (out3 / "records.jsonl").read_bytes()


def test_cli_replicas_deterministic_merge(tmp_path):
    cfgp = _write_config(tmp_path, _small_doc())
    out1 = tmp_path / "r1"
    out2 = tmp_path / "r2"
    assert main(["sample", "--config", cfgp, "--replicas", "2", "--out", str(out1)]) == 0
    assert main(["sample", "--config", cfgp, "--replicas", "2", "--out", str(out2)]) == 0
    assert (out1 / "records.jsonl").read_bytes() == (out2 / "records.jsonl").read_bytes()
    lines = [json.loads(l) for l in (out1 / "records.jsonl").read_text().splitlines()]
    replicas = {r["replica"] for r in lines}
    assert replicas == {0, 1}


def test_cli_subcommand_flag_spelling(tmp_path):
    cfgp = _write_config(tmp_path, _small_doc())
    out = tmp_path / "flag"
    assert main(["--subcommand", "sausage", "--config", cfgp, "--out", str(out)]) == 0
    recs = [json.loads(l) for l in (out / "records.jsonl").read_text().splitlines()]
    names = {r["name"] for r in recs}
    assert "sausage_violations" in names


def test_cli_oracle_and_invariance_run(tmp_path):
    doc = _small_doc()
    doc["sampler"].update({"burn_in": 200, "n_samples": 40})
    cfgp = _write_config(tmp_path, doc)
    out = tmp_path / "oracle"
    assert main(["oracle", "--config", cfgp, "--out", str(out)]) == 0
    recs = [json.loads(l) for l in (out / "records.jsonl").read_text().splitlines()]
    names = {r["name"] for r in recs}
    assert "Z_fk" in names and "log_Z_fk" in names
    out2 = tmp_path / "inv"
    assert main(["invariance", "--config", cfgp, "--out", str(out2)]) == 0
    recs2 = [json.loads(l) for l in (out2 / "records.jsonl").read_text().splitlines()]
    names2 = {r["name"] for r in recs2}
    assert {"ks_p_time_shift", "ks_p_time_reversal"} <= names2
