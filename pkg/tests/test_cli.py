import csv
import hashlib
import json

import numpy as np
import pytest
import yaml

from rvic import __version__
from rvic.cli import main
from rvic.config import ExperimentConfig, load_config
from rvic.errors import ContractViolation
from rvic.trainer import Trainer, TrainConfig

SMALL = {
    "schema_version": 1,
    "train": {"env": {"width": 5, "height": 5}, "skills": {"num_skills": 3, "episode_length": 3},
              "total_skill_episodes": 2000, "eval_every": 500},
    "meta": {"episodes": 30, "log_every": 10, "goal": [0, 0]},
}


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text(yaml.safe_dump({**SMALL, "output_dir": str(tmp_path / "run")}))
    return path


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_missing_config_exit_2(tmp_path, capsys):
    assert main(["train-skills", str(tmp_path / "nope.yaml")]) == 2
    assert "cannot read config file" in capsys.readouterr().err


def test_unknown_key_exit_2(config_file, capsys):
    assert main(["train-skills", str(config_file), "--set", "train.skills.colour=red"]) == 2
    assert "train.skills.colour" in capsys.readouterr().err


def test_bad_schema_version(tmp_path):
    path = tmp_path / "v.yaml"
    path.write_text("schema_version: 7\n")
    assert main(["train-skills", str(path)]) == 2


def test_default_num_skills(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("schema_version: 1\n")
    assert load_config(path).train.skills.num_skills == 16
    assert ExperimentConfig().train.skills.num_skills == 16


def test_baseline_override_flips_only_that_field(config_file, tmp_path):
    assert main(["train-skills", str(config_file), "--baseline-mode", "vic", "--output-dir", str(tmp_path / "v")]) == 0
    got = TrainConfig.from_dict(yaml.safe_load((tmp_path / "v" / "config.yaml").read_text())["train"])
    base = load_config(config_file).train
    assert got.skills.baseline_mode == "vic"
    assert got.to_dict() | {"skills": None} == base.to_dict() | {"skills": None}
    assert {k: v for k, v in got.to_dict()["skills"].items() if k != "baseline_mode"} == \
        {k: v for k, v in base.to_dict()["skills"].items() if k != "baseline_mode"}


def test_train_outputs_carry_provenance(config_file, tmp_path):
    before = digest(config_file)
    assert main(["train-skills", str(config_file)]) == 0
    run = tmp_path / "run"
    chash = load_config(config_file).train.hash()
    ck = json.loads((run / "checkpoint.json").read_text())
    assert ck["config_hash"] == chash and ck["config"]["seed"] == 0 and ck["artifact_version"] == __version__
    metrics = rows(run / "metrics.csv")
    assert [r["episode"] for r in metrics] == ["500", "1000", "1500", "2000"]
    assert all(r["config_hash"] == chash and r["seed"] == "0" and r["artifact_version"] == __version__
               for r in metrics)
    assert f"config_hash: {load_config(config_file).hash()}" in (run / "config.yaml").read_text()
    assert digest(config_file) == before


def test_cli_resume_matches_full_run(config_file, tmp_path):
    full, split = tmp_path / "full", tmp_path / "split"
    assert main(["train-skills", str(config_file), "--output-dir", str(full)]) == 0
    assert main(["train-skills", str(config_file), "--output-dir", str(split), "--stop-after", "700"]) == 0
    assert len(rows(split / "metrics.csv")) == 1
    assert main(["train-skills", str(config_file), "--output-dir", str(split), "--resume"]) == 0
    assert (full / "metrics.csv").read_bytes() == (split / "metrics.csv").read_bytes()
    assert (full / "checkpoint.json").read_bytes() == (split / "checkpoint.json").read_bytes()


def test_resume_with_changed_config_refused(config_file, tmp_path):
    out = tmp_path / "r"
    assert main(["train-skills", str(config_file), "--output-dir", str(out), "--stop-after", "100"]) == 0
    assert main(["train-skills", str(config_file), "--output-dir", str(out), "--resume", "--seed", "9"]) == 2


def test_episode_log(config_file, tmp_path):
    assert main(["train-skills", str(config_file), "--episodes", "--set", "train.total_skill_episodes=50",
                 "--set", "train.eval_every=50"]) == 0
    lines = (tmp_path / "run" / "episodes.jsonl").read_text().splitlines()
    assert len(lines) == 50 and len(json.loads(lines[0])["states"]) == 4


@pytest.fixture
def checkpoint(config_file, tmp_path):
    assert main(["train-skills", str(config_file)]) == 0
    return tmp_path / "run" / "checkpoint.json"


def test_eval_skill_map_cardinality_and_determinism(checkpoint, tmp_path):
    before = digest(checkpoint)
    assert main(["eval-skills", str(checkpoint), "--output-dir", str(tmp_path / "e1")]) == 0
    assert main(["eval-skills", str(checkpoint), "--output-dir", str(tmp_path / "e2")]) == 0
    doc = json.loads((tmp_path / "e1" / "skill_map.json").read_text())
    assert len(doc["entries"]) == 3 * 25
    assert {"config_hash", "seed", "artifact_version"} <= set(doc)
    for name in ("skill_map.json", "metrics.csv"):
        assert (tmp_path / "e1" / name).read_bytes() == (tmp_path / "e2" / name).read_bytes()
    assert len(rows(tmp_path / "e1" / "metrics.csv")) == 1
    assert digest(checkpoint) == before


def test_eval_translation_checkpoint(tmp_path):
    cfg = TrainConfig.from_dict({"env": {"width": 6, "height": 6}, "skills": {"num_skills": 4,
                                                                                "episode_length": 2},
                                 "total_skill_episodes": 0})
    tr = Trainer(cfg)
    for k, a in enumerate((0, 1, 2, 3)):
        tr.policy.q_values[k, :, a] = 1.0
    tr.save(tmp_path / "translation.json")
    assert main(["eval-skills", str(tmp_path / "translation.json"), "--output-dir", str(tmp_path / "e")]) == 0
    row = rows(tmp_path / "e" / "metrics.csv")[0]
    assert float(row["relativity_score"]) == 1.0
    assert float(row["mi_start_given_end"]) == 2.0
    assert float(row["partition_score"]) == 1 / 36


def test_eval_env_mismatch_refused(checkpoint, tmp_path):
    other = tmp_path / "other.yaml"
    other.write_text(yaml.safe_dump({"train": {"env": {"width": 6, "height": 6}}}))
    assert main(["eval-skills", str(checkpoint), "--config", str(other)]) == 2


def test_train_hrl_primitive_arm(config_file, tmp_path):
    out = tmp_path / "hrl"
    assert main(["train-hrl", "none", "--config", str(config_file), "--output-dir", str(out)]) == 0
    curve = rows(out / "curve.csv")
    assert list(curve[0]) == ["arm", "seed", "episodes", "return_mean", "decisions_mean", "config_hash",
                              "artifact_version"]
    assert {r["arm"] for r in curve} == {"primitive"} and [r["episodes"] for r in curve] == ["10", "20", "30"]


@pytest.mark.parametrize("cost", [0.0, 0.1, 0.15])
@pytest.mark.parametrize("length", [10, 15, 25])
def test_train_hrl_sweep_values_accepted(checkpoint, tmp_path, config_file, cost, length):
    before = digest(checkpoint)
    out = tmp_path / f"h{cost}-{length}"
    assert main(["train-hrl", str(checkpoint), "--config", str(config_file), "--meta-action-cost", str(cost),
                 "--skill-exec-length", str(length), "--output-dir", str(out)]) == 0
    assert {r["arm"] for r in rows(out / "curve.csv")} == {"rvic"}
    assert digest(checkpoint) == before


def test_train_hrl_env_mismatch_refused(checkpoint, tmp_path):
    other = tmp_path / "other.yaml"
    other.write_text(yaml.safe_dump({"train": {"env": {"width": 9, "height": 9}}}))
    assert main(["train-hrl", str(checkpoint), "--config", str(other), "--output-dir", str(tmp_path / "x")]) == 2


def test_contract_violation_exit_3(config_file, monkeypatch, capsys):
    def boom(self, *a, **k):
        raise ContractViolation("reward was NaN")

    monkeypatch.setattr(Trainer, "run", boom)
    assert main(["train-skills", str(config_file)]) == 3
    assert "NaN" in capsys.readouterr().err


@pytest.fixture
def grid_file(tmp_path, config_file):
    path = tmp_path / "grid.yaml"
    path.write_text(yaml.safe_dump({
        "base": config_file.name, "output_dir": str(tmp_path / "sweep"), "seeds": [0, 1],
        "arms": ["primitive", "rvic"],
        "grid": {"meta.meta_action_cost": [0.0, 0.1], "meta.skill_exec_length": [2, 3, 4]},
    }))
    return path


def test_sweep_layout_and_selection(grid_file, tmp_path):
    assert main(["sweep", str(grid_file)]) == 0
    out = tmp_path / "sweep"
    cells = sorted(p.name for p in out.iterdir() if p.name.startswith("cell-"))
    assert len(cells) == 6
    summary = rows(out / "summary.csv")
    for arm in ("primitive", "rvic"):
        finals = []
        for cell in cells:
            curve = [r for r in rows(out / cell / "curve.csv") if r["arm"] == arm]
            last = {}
            for r in curve:
                last[r["seed"]] = float(r["return_mean"])
            finals.append(np.mean(list(last.values())))
        best = [r["cell"] for r in summary if r["arm"] == arm and r["best"] == "1"]
        assert best == [cells[int(np.argmax(finals))]]


def test_sweep_reproducible_and_refuses_overlap(grid_file, tmp_path):
    assert main(["sweep", str(grid_file)]) == 0
    first = (tmp_path / "sweep" / "summary.csv").read_bytes()
    assert main(["sweep", str(grid_file)]) == 2
    doc = yaml.safe_load(grid_file.read_text())
    doc["output_dir"] = str(tmp_path / "sweep2")
    grid_file.write_text(yaml.safe_dump(doc))
    assert main(["sweep", str(grid_file), "--jobs", "2"]) == 0
    assert (tmp_path / "sweep2" / "summary.csv").read_bytes() == first


def test_dump_layout(capsys):
    assert main(["dump-layout"]) == 0
    out = capsys.readouterr().out
    assert sum(line.count(" ") for line in out.splitlines()) == 104 and len(out.splitlines()) == 13


def test_defaults_document_is_loadable(capsys, tmp_path):
    assert main(["defaults"]) == 0
    path = tmp_path / "d.yaml"
    path.write_text(capsys.readouterr().out)
    assert load_config(path) == ExperimentConfig()


def test_malformed_override_and_yaml(config_file, tmp_path):
    assert main(["train-skills", str(config_file), "--set", "train.seed"]) == 2
    assert main(["train-skills", str(config_file), "--set", "train.skills.num_skills.x=1"]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("train: [unclosed\n")
    assert main(["train-skills", str(bad)]) == 2
