"""Skills, skill episodes, and chaining.

A skill episode is ``T`` steps of the skill-conditioned policy from a start
state ``s_0``. Within one base-environment episode, ``M`` skill episodes are
chained: each starts where the previous one ended, and the environment is
reset only after the ``M``-th.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict, replace

import numpy as np

from .env import uniform_index
from .errors import ConfigError, ContractViolation
from .policy import EXPLORE
from .predictors import BASELINE_MODES, REWARD_MODES

RESET = "RESET"


@dataclass(frozen=True)
class SkillConfig:
    num_skills: int = 16
    episode_length: int = 4
    episodes_per_reset: int = 10
    discount: float = 0.9
    final_step_discount: float = 0.0
    dense_reward: bool = True
    reward_mode: str = "prob_diff"
    baseline_mode: str = "rvic"

    def __post_init__(self):
        if self.num_skills < 1:
            raise ConfigError("skills.num_skills must be >= 1")
        if self.episode_length < 1:
            raise ConfigError("skills.episode_length must be >= 1")
        if self.episodes_per_reset < 1:
            raise ConfigError("skills.episodes_per_reset must be >= 1")
        if not 0.0 <= self.discount < 1.0:
            raise ConfigError("skills.discount must lie in [0, 1)")
        if not 0.0 <= self.final_step_discount <= 1.0:
            raise ConfigError("skills.final_step_discount must lie in [0, 1]")
        if self.reward_mode not in REWARD_MODES:
            raise ConfigError(f"skills.reward_mode must be one of {REWARD_MODES}")
        if self.baseline_mode not in BASELINE_MODES:
            raise ConfigError(f"skills.baseline_mode must be one of {BASELINE_MODES}")

    def discounts(self) -> tuple[float, ...]:
        return (self.discount,) * (self.episode_length - 1) + (self.final_step_discount,)


@dataclass(frozen=True)
class SkillEpisode:
    skill: int
    states: tuple[int, ...]
    actions: tuple[int, ...]
    rewards: tuple[float, ...]
    discounts: tuple[float, ...]

    def __post_init__(self):
        T = len(self.actions)
        if len(self.states) != T + 1 or len(self.rewards) != T or len(self.discounts) != T:
            raise ContractViolation("inconsistent skill episode lengths")

    @property
    def start(self) -> int:
        return self.states[0]

    @property
    def end(self) -> int:
        return self.states[-1]

    def to_json(self) -> str:
        return json.dumps(asdict(self), separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "SkillEpisode":
        d = json.loads(line)
        return cls(int(d["skill"]), tuple(d["states"]), tuple(d["actions"]),
                   tuple(float(r) for r in d["rewards"]), tuple(float(g) for g in d["discounts"]))


def sample_skill(num_skills: int, rng: np.random.Generator) -> int:
    """Uniform draw from the fixed skill prior (one uniform consumed)."""
    if num_skills < 1:
        raise ContractViolation("num_skills must be >= 1")
    return uniform_index(rng.random(), num_skills)


def run_skill_episode(policy, env, skill: int, s0: int, config: SkillConfig,
                      rng: np.random.Generator | None = None, mode: str = EXPLORE,
                      epsilon: float | None = None) -> SkillEpisode:
    """Roll ``T`` steps of the skill. Rewards are left at zero.

    ``policy`` is anything with ``act(state, skill, mode, rng, epsilon)``.
    In explore mode each step consumes four uniforms (two for the action,
    two for the environment's slip).
    """
    T = config.episode_length
    states, actions = [s0], []
    s = s0
    for _ in range(T):
        a = policy.act(s, skill, mode, rng, epsilon)
        if mode == EXPLORE or rng is not None:
            s = env.step(s, a, rng).next_state
        else:
            s = int(env.transitions[s, a])
        states.append(s)
        actions.append(a)
    return SkillEpisode(skill, tuple(states), tuple(actions), (0.0,) * T, config.discounts())


def chain_next_start(previous: SkillEpisode, m: int, config: SkillConfig):
    """Start of the next skill episode after the ``m``-th of a cycle, or ``RESET``."""
    M = config.episodes_per_reset
    if not 1 <= m <= M:
        raise ContractViolation(f"episode ordinal {m} outside [1, {M}]")
    return previous.end if m < M else RESET


def assign_rewards(episode: SkillEpisode, r: float, config: SkillConfig) -> SkillEpisode:
    """Write the episode reward densely (every step) or sparsely (last step only)."""
    if not math.isfinite(r):
        raise ContractViolation(f"reward must be finite, got {r}")
    T = len(episode.actions)
    rewards = (r,) * T if config.dense_reward else (0.0,) * (T - 1) + (r,)
    return replace(episode, rewards=rewards, discounts=config.discounts())


def write_episodes(episodes, path) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        for ep in episodes:
            fh.write(ep.to_json() + "\n")


def read_episodes(path) -> list[SkillEpisode]:
    with open(path, encoding="utf-8") as fh:
        return [SkillEpisode.from_json(line) for line in fh if line.strip()]
