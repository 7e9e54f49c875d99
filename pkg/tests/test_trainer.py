import json

import numpy as np
import pytest

from rvic.errors import CheckpointError, ConfigError
from rvic.trainer import Trainer, TrainConfig, load_checkpoint, save_checkpoint, train_skills


def cfg(**over):
    base = {"env": {"width": 5, "height": 5}, "skills": {"num_skills": 4, "episode_length": 3},
            "total_skill_episodes": 3000, "eval_every": 500, "seed": 11}
    base.update(over)
    return TrainConfig.from_dict(base)


def test_zero_episodes_returns_initial_structures():
    policy, pair, log = train_skills(cfg(total_skill_episodes=0))
    assert not policy.q_values.any() and not pair.rel_table.any() and log == []


def test_default_num_skills_is_sixteen():
    assert TrainConfig().skills.num_skills == 16
    assert TrainConfig().skills.episodes_per_reset == 10


def test_same_seed_same_log():
    a = Trainer(cfg())
    b = Trainer(cfg())
    assert a.run() == b.run()
    np.testing.assert_array_equal(a.policy.q_values, b.policy.q_values)


def test_different_seed_differs():
    assert Trainer(cfg()).run() != Trainer(cfg(seed=12)).run()


def test_log_stride():
    log = Trainer(cfg(total_skill_episodes=2200)).run()
    assert [r.episode for r in log] == [500, 1000, 1500, 2000]


def test_one_reset_per_cycle():
    episodes = []
    Trainer(cfg(total_skill_episodes=60, skills={"num_skills": 2, "episode_length": 2,
                                                  "episodes_per_reset": 4})).run(episode_sink=episodes.append)
    for i in range(1, len(episodes)):
        if i % 4:
            assert episodes[i].start == episodes[i - 1].end


def test_save_load_save_identical_bytes(tmp_path):
    tr = Trainer(cfg(total_skill_episodes=1234))
    tr.run()
    save_checkpoint(tr, tmp_path / "a.json")
    again = load_checkpoint(tmp_path / "a.json")
    save_checkpoint(again, tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_resume_matches_uninterrupted(tmp_path):
    full = Trainer(cfg())
    full.run()
    part = Trainer(cfg())
    part.run(until=1700)
    part.save(tmp_path / "ck.json")
    resumed = Trainer.load(tmp_path / "ck.json", expected=cfg())
    resumed.run()
    assert resumed.log == full.log
    assert resumed.to_bytes() == full.to_bytes()


def test_corrupted_checkpoint(tmp_path):
    tr = Trainer(cfg(total_skill_episodes=10))
    tr.run()
    blob = tr.to_bytes()
    bad = tmp_path / "bad.json"
    for payload in (blob[: len(blob) // 2], b"\x00\xff garbage", blob.replace(b'"q_values"', b'"q_valuez"')):
        bad.write_bytes(payload)
        with pytest.raises(CheckpointError):
            Trainer.load(bad)
    with pytest.raises(CheckpointError):
        Trainer.load(tmp_path / "missing.json")


def test_checkpoint_refusals(tmp_path):
    tr = Trainer(cfg(total_skill_episodes=10))
    doc = json.loads(tr.to_bytes())
    doc["format_version"] = 99
    with pytest.raises(CheckpointError, match="version"):
        Trainer.from_bytes(json.dumps(doc).encode())
    doc = json.loads(tr.to_bytes())
    doc["config"]["seed"] = 5
    with pytest.raises(CheckpointError, match="hash"):
        Trainer.from_bytes(json.dumps(doc).encode())
    with pytest.raises(CheckpointError, match="does not match requested"):
        Trainer.from_bytes(tr.to_bytes(), expected=cfg(seed=1))


def test_unknown_key_reported_with_path():
    with pytest.raises(ConfigError, match="skills.bogus"):
        TrainConfig.from_dict({"skills": {"bogus": 1}})
    with pytest.raises(ConfigError, match="total_skill_episodes"):
        TrainConfig.from_dict({"total_skill_episodes": "many"})
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"skills": {"baseline_mode": "diayn"}})


def test_config_dict_roundtrip():
    c = cfg(predictor={"family": "softmax"}, policy={"actor_update_period": 3})
    assert TrainConfig.from_dict(c.to_dict()) == c
    assert c.hash() == TrainConfig.from_dict(c.to_dict()).hash()


def test_rvic_and_vic_diverge_on_relative_information():
    # short version of the phenomenon: RVIC carries more start-state information
    common = {"env": {"width": 8, "height": 8}, "total_skill_episodes": 50_000, "eval_every": 50_000,
              "seed": 0}
    rv = Trainer(TrainConfig.from_dict({**common, "skills": {"num_skills": 4}})).run()[-1]
    vi = Trainer(TrainConfig.from_dict({**common, "skills": {"num_skills": 4, "baseline_mode": "vic"}})).run()[-1]
    assert rv.mi_start_given_end > vi.mi_start_given_end
