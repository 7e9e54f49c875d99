"""Skill-discovery training loop and checkpoints.

Per skill episode, in order: reset the base environment if a new cycle of
``M`` episodes begins, sample a skill, roll ``T`` steps, score the episode
with the snapshot predictors, write the reward, update the policy, update
both predictors, refresh the snapshot on schedule, chain ``s_0 <- s_T``.
The loop itself lives in :mod:`rvic._kernels`.

All randomness comes from one ``numpy.random.Generator`` and is drawn as a
fixed number of uniforms per episode, so results do not depend on how the run
is split into chunks, and a run resumed from a checkpoint continues exactly
where the uninterrupted run would have been.
"""
from __future__ import annotations

import base64
import hashlib
import json
import logging
from dataclasses import dataclass, field, asdict, fields
from pathlib import Path

import numpy as np

from . import __version__
from ._kernels import (COUNTS, LOG_Q, PROB_DIFF, RVIC, SOFTMAX, VIC, KernelParams, get_backend,
                       uniforms_per_episode)
from .env import EnvConfig, make_env
from .errors import CheckpointError, ConfigError, ContractViolation
from .metrics import MetricsReport, RolloutSet, compute_report
from .policy import EpsilonSchedule, SkillPolicy, skill_maps
from .predictors import PredictorSnapshot, make_predictor_pair
from .skills import SkillConfig, SkillEpisode

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "rvic-checkpoint"
CHECKPOINT_VERSION = 1
MAX_CHUNK = 4096


@dataclass(frozen=True)
class PredictorConfig:
    family: str = "counts"
    alpha: float = 0.1
    decay: float = 0.995
    learning_rate: float = 0.5
    refresh_period: int = 10

    def __post_init__(self):
        if self.family not in ("counts", "softmax"):
            raise ConfigError("predictor.family must be 'counts' or 'softmax'")
        if self.alpha <= 0:
            raise ConfigError("predictor.alpha must be > 0")
        if not 0 < self.decay <= 1:
            raise ConfigError("predictor.decay must lie in (0, 1]")
        if self.learning_rate <= 0:
            raise ConfigError("predictor.learning_rate must be > 0")
        if self.refresh_period < 1:
            raise ConfigError("predictor.refresh_period must be >= 1")


@dataclass(frozen=True)
class PolicyConfig:
    step_size: float = 0.1
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_fraction: float = 0.5
    actor_update_period: int = 100

    def __post_init__(self):
        if not 0 <= self.step_size <= 1:
            raise ConfigError("policy.step_size must lie in [0, 1]")
        if not 0 <= self.eps_end <= self.eps_start <= 1:
            raise ConfigError("policy: need 0 <= eps_end <= eps_start <= 1")
        if not 0 < self.eps_decay_fraction <= 1:
            raise ConfigError("policy.eps_decay_fraction must lie in (0, 1]")
        if self.actor_update_period < 1:
            raise ConfigError("policy.actor_update_period must be >= 1")


@dataclass(frozen=True)
class TrainConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    skills: SkillConfig = field(default_factory=SkillConfig)
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    total_skill_episodes: int = 100_000
    eval_every: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.total_skill_episodes < 0:
            raise ConfigError("total_skill_episodes must be >= 0")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")

    def to_dict(self) -> dict:
        return {
            "env": self.env.to_dict(),
            "skills": asdict(self.skills),
            "predictor": asdict(self.predictor),
            "policy": asdict(self.policy),
            "total_skill_episodes": self.total_skill_episodes,
            "eval_every": self.eval_every,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict, path: str = "") -> "TrainConfig":
        d = dict(d)
        sub = {"env": EnvConfig, "skills": SkillConfig, "predictor": PredictorConfig, "policy": PolicyConfig}
        kwargs = {}
        for key, value in d.items():
            if key in sub:
                kwargs[key] = build_dataclass(sub[key], value, f"{path}{key}")
            elif key in ("total_skill_episodes", "eval_every", "seed"):
                if isinstance(value, bool) or not isinstance(value, int):
                    raise ConfigError(f"'{path}{key}' must be an integer, got {value!r}")
                kwargs[key] = value
            else:
                raise ConfigError(f"unknown config key '{path}{key}'")
        return cls(**kwargs)

    def hash(self) -> str:
        return config_hash(self.to_dict())

    def epsilon_schedule(self) -> EpsilonSchedule:
        steps = max(1, round(self.policy.eps_decay_fraction * self.total_skill_episodes))
        return EpsilonSchedule(self.policy.eps_start, self.policy.eps_end, steps)


def build_dataclass(cls, values, path: str):
    """Instantiate ``cls`` from a mapping, rejecting unknown keys with their full path."""
    if not isinstance(values, dict):
        raise ConfigError(f"'{path}' must be a mapping")
    known = {f.name for f in fields(cls)}
    for key in values:
        if key not in known:
            raise ConfigError(f"unknown config key '{path}.{key}'")
    if hasattr(cls, "from_dict"):
        return cls.from_dict(values)
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"'{path}': {exc}") from exc


def config_hash(d: dict) -> str:
    blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def kernel_params(config: TrainConfig) -> KernelParams:
    sk, pr, po = config.skills, config.predictor, config.policy
    return KernelParams(
        num_skills=sk.num_skills,
        episode_length=sk.episode_length,
        episodes_per_reset=sk.episodes_per_reset,
        gamma=float(sk.discount),
        final_step_discount=float(sk.final_step_discount),
        dense_reward=bool(sk.dense_reward),
        reward_mode=LOG_Q if sk.reward_mode == "log_q" else PROB_DIFF,
        baseline_mode=VIC if sk.baseline_mode == "vic" else RVIC,
        family=SOFTMAX if pr.family == "softmax" else COUNTS,
        alpha=float(pr.alpha),
        decay=float(pr.decay),
        learning_rate=float(pr.learning_rate),
        refresh_period=pr.refresh_period,
        beta=float(po.step_size),
        slip_prob=float(config.env.slip_prob),
        actor_update_period=po.actor_update_period,
    )


class Trainer:
    """Mutable training state plus the loop that advances it."""

    def __init__(self, config: TrainConfig, backend: str | None = None):
        self.config = config
        self.backend = backend
        self._run_episodes = get_backend(backend)
        self.env = make_env(config.env)
        sk = config.skills
        S, A = self.env.num_states, self.env.num_actions
        self.policy = SkillPolicy(sk.num_skills, S, A, config.policy.step_size, config.epsilon_schedule())
        self.actor_q = self.policy.q_values.copy()
        pr = config.predictor
        self.predictors = make_predictor_pair(pr.family, sk.num_skills, S, alpha=pr.alpha,
                                              decay=pr.decay, learning_rate=pr.learning_rate)
        self.snapshot = PredictorSnapshot(self.predictors, pr.refresh_period)
        self.rng = np.random.default_rng(config.seed)
        # episode, position in reset cycle, chained start state, predictor updates,
        # policy updates, number of pending snapshot groups
        self.counters = np.zeros(6, dtype=np.int64)
        self.pending = np.zeros((pr.refresh_period, 2), dtype=np.int64)
        self.log: list[MetricsReport] = []
        self._params = kernel_params(config)

    @property
    def episode(self) -> int:
        return int(self.counters[0])

    def run(self, until: int | None = None, episode_sink=None) -> list[MetricsReport]:
        """Advance to episode ``until`` (default: the configured total).

        ``episode_sink``, if given, receives every finished ``SkillEpisode``.
        """
        cfg = self.config
        until = cfg.total_skill_episodes if until is None else min(until, cfg.total_skill_episodes)
        while self.episode < until:
            next_eval = (self.episode // cfg.eval_every + 1) * cfg.eval_every
            n = min(until, next_eval, self.episode + MAX_CHUNK) - self.episode
            self._advance(n, episode_sink)
            if self.episode % cfg.eval_every == 0:
                self.log.append(self.evaluate())
                log.debug("episode %d: %s", self.episode, self.log[-1])
        return self.log

    def _advance(self, n: int, episode_sink) -> None:
        T = self.config.skills.episode_length
        first = self.episode
        uniforms = self.rng.random((n, uniforms_per_episode(T)))
        eps = self.policy.schedule.values(first, n)
        rec_skills = np.zeros(n, dtype=np.int64)
        rec_states = np.zeros((n, T + 1), dtype=np.int64)
        rec_actions = np.zeros((n, T), dtype=np.int64)
        rec_rewards = np.zeros(n)
        try:
            self._run_episodes(self.env.transitions, self.policy.q_values, self.actor_q,
                               self.predictors.rel_table, self.snapshot.pair.rel_table,
                               self.predictors.abs_table, self.snapshot.pair.abs_table,
                               self.pending, eps, uniforms, self.counters, self._params,
                               rec_skills, rec_states, rec_actions, rec_rewards)
        except Exception as exc:
            raise ContractViolation(
                f"training aborted in episodes [{first}, {first + n}) with seed {self.config.seed}: {exc}"
            ) from exc
        if episode_sink is not None:
            sk = self.config.skills
            discounts = sk.discounts()
            for i in range(n):
                r = float(rec_rewards[i])
                rewards = (r,) * T if sk.dense_reward else (0.0,) * (T - 1) + (r,)
                episode_sink(SkillEpisode(int(rec_skills[i]), tuple(rec_states[i].tolist()),
                                          tuple(rec_actions[i].tolist()), rewards, discounts))

    def skill_maps(self) -> np.ndarray:
        return skill_maps(self.policy.q_values, self.env.transitions, self.config.skills.episode_length)

    def evaluate(self) -> MetricsReport:
        rollouts = RolloutSet.from_skill_maps(self.skill_maps())
        return compute_report(rollouts, self.env, episode=self.episode,
                              arm=self.config.skills.baseline_mode, seed=self.config.seed)

    # -- persistence -------------------------------------------------------

    def _arrays(self) -> dict[str, np.ndarray]:
        return {
            "q_values": self.policy.q_values,
            "actor_q": self.actor_q,
            "rel": self.predictors.rel_table,
            "abs": self.predictors.abs_table,
            "rel_snapshot": self.snapshot.pair.rel_table,
            "abs_snapshot": self.snapshot.pair.abs_table,
            "counters": self.counters,
            "pending": self.pending,
        }

    def to_bytes(self) -> bytes:
        doc = {
            "format": CHECKPOINT_FORMAT,
            "format_version": CHECKPOINT_VERSION,
            "artifact_version": __version__,
            "config": self.config.to_dict(),
            "config_hash": self.config.hash(),
            "rng": self.rng.bit_generator.state,
            "arrays": {k: _encode_array(v) for k, v in self._arrays().items()},
            "log": [r.row() for r in self.log],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, blob: bytes, expected: TrainConfig | None = None,
                   backend: str | None = None) -> "Trainer":
        try:
            doc = json.loads(blob)
            if doc.get("format") != CHECKPOINT_FORMAT:
                raise CheckpointError("not an rvic checkpoint")
            if doc.get("format_version") != CHECKPOINT_VERSION:
                raise CheckpointError(
                    f"checkpoint format version {doc.get('format_version')} != supported {CHECKPOINT_VERSION}")
            config = TrainConfig.from_dict(doc["config"])
            if config.hash() != doc["config_hash"]:
                raise CheckpointError("checkpoint config hash does not match its embedded config")
            if expected is not None and expected.hash() != config.hash():
                raise CheckpointError(
                    f"checkpoint config hash {config.hash()} does not match requested config {expected.hash()}")
            trainer = cls(config, backend)
            arrays = trainer._arrays()
            for name, target in arrays.items():
                value = _decode_array(doc["arrays"][name])
                if value.shape != target.shape or value.dtype != target.dtype:
                    raise CheckpointError(f"array '{name}' has shape {value.shape}, expected {target.shape}")
                target[...] = value
            trainer.rng.bit_generator.state = doc["rng"]
            trainer.log = [MetricsReport(**row) for row in doc["log"]]
        except CheckpointError:
            raise
        except (ValueError, KeyError, TypeError, ConfigError) as exc:
            raise CheckpointError(f"corrupted checkpoint: {exc}") from exc
        return trainer

    @classmethod
    def load(cls, path, expected: TrainConfig | None = None, backend: str | None = None) -> "Trainer":
        try:
            blob = Path(path).read_bytes()
        except OSError as exc:
            raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
        return cls.from_bytes(blob, expected, backend)


def _encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a)
    return {"dtype": a.dtype.str, "shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode()}


def _decode_array(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"], validate=True)
    return np.frombuffer(raw, dtype=np.dtype(d["dtype"])).reshape(d["shape"]).copy()


def save_checkpoint(trainer: Trainer, path) -> None:
    trainer.save(path)


def load_checkpoint(path, expected: TrainConfig | None = None, backend: str | None = None) -> Trainer:
    return Trainer.load(path, expected, backend)


def train_skills(config: TrainConfig, backend: str | None = None, episode_sink=None):
    """Run a full skill-discovery training; returns ``(policy, predictors, metrics_log)``."""
    trainer = Trainer(config, backend)
    trainer.run(episode_sink=episode_sink)
    return trainer.policy, trainer.predictors, trainer.log
