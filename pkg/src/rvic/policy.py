"""Skill-conditioned tabular Q-learning."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import uniform_index
from .errors import ConfigError, ContractViolation

EXPLORE, GREEDY = "explore", "greedy"


@dataclass(frozen=True)
class EpsilonSchedule:
    """Linear decay from ``start`` to ``end`` over ``decay_steps`` episodes, then flat."""

    start: float = 1.0
    end: float = 0.05
    decay_steps: int = 1

    def __post_init__(self):
        if not (0.0 <= self.end <= self.start <= 1.0):
            raise ConfigError(f"need 0 <= eps_end <= eps_start <= 1, got {self.start}, {self.end}")
        if self.decay_steps < 1:
            raise ConfigError("decay_steps must be >= 1")

    def value(self, step: int) -> float:
        return float(self.values(step, 1)[0])

    def values(self, first_step: int, count: int) -> np.ndarray:
        steps = np.arange(first_step, first_step + count, dtype=np.float64)
        frac = np.minimum(1.0, steps / self.decay_steps)
        return self.start + (self.end - self.start) * frac


def greedy_action(row) -> int:
    """Argmax with lowest-index tie-breaking."""
    best, arg = row[0], 0
    for a in range(1, len(row)):
        if row[a] > best:
            best, arg = row[a], a
    return arg


class SkillPolicy:
    """Tabular ``Q[skill, state, action]`` with epsilon-greedy behavior."""

    def __init__(self, num_skills: int, num_states: int, num_actions: int, step_size: float = 0.1,
                 schedule: EpsilonSchedule | None = None):
        if not 0.0 <= step_size <= 1.0:
            raise ConfigError(f"step_size must lie in [0, 1], got {step_size}")
        self.q_values = np.zeros((num_skills, num_states, num_actions))
        self.step_size = step_size
        self.schedule = schedule or EpsilonSchedule()

    @property
    def num_skills(self):
        return self.q_values.shape[0]

    @property
    def num_actions(self):
        return self.q_values.shape[2]

    def act(self, state: int, skill: int, mode: str, rng: np.random.Generator | None = None,
            epsilon: float | None = None) -> int:
        """Pick an action. Explore mode consumes two uniforms from ``rng``."""
        if not (0 <= skill < self.q_values.shape[0] and 0 <= state < self.q_values.shape[1]):
            raise ContractViolation(f"(skill={skill}, state={state}) out of range")
        row = self.q_values[skill, state].tolist()
        if mode == GREEDY:
            return greedy_action(row)
        if mode != EXPLORE:
            raise ContractViolation(f"unknown mode {mode!r}")
        if epsilon is None:
            epsilon = self.schedule.start
        u_explore, u_action = rng.random(2)
        if u_explore < epsilon:
            return uniform_index(u_action, len(row))
        return greedy_action(row)

    def learn(self, episode) -> "SkillPolicy":
        """Backward one-step Q-learning sweep over a reward-assigned episode.

        For t = T..1 the target is ``r_t + gamma_t * max_a Q[skill, s_t, a]``.
        At t = T this bootstraps across the skill-episode boundary, which is a
        no-op when the final-step discount is zero.
        """
        q, beta = self.q_values[episode.skill], self.step_size
        for t in range(len(episode.actions), 0, -1):
            target = episode.rewards[t - 1] + episode.discounts[t - 1] * max(q[episode.states[t]].tolist())
            s, a = episode.states[t - 1], episode.actions[t - 1]
            q[s, a] = (1.0 - beta) * q[s, a] + beta * target
        return self


def skill_maps(q_values: np.ndarray, transitions: np.ndarray, length: int) -> np.ndarray:
    """Greedy end state for every (skill, start state): array ``[K, S]``."""
    K, S, _ = q_values.shape
    starts = np.arange(S)
    ends = np.empty((K, S), dtype=np.int64)
    for k in range(K):
        s = starts.copy()
        for _ in range(length):
            # np.argmax returns the first maximum: lowest-index tie-break
            s = transitions[s, np.argmax(q_values[k, s], axis=1)]
        ends[k] = s
    return ends


def evaluate_skill_map(policy: SkillPolicy, env, skill: int, length: int) -> dict[int, int]:
    """Deterministic greedy start -> end map for one skill (slip ignored)."""
    ends = skill_maps(policy.q_values[skill:skill + 1], env.transitions, length)[0]
    return {s: int(e) for s, e in enumerate(ends)}
