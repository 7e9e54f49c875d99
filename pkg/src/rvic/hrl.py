"""Hierarchical control on top of frozen skills.

A tabular meta-controller chooses, at each decision, either a primitive
action (one environment step) or a skill (up to ``T`` greedy steps of the
frozen skill policy). Skill transitions are treated as SMDP transitions: the
rewards collected during the skill are discounted and summed, and the
bootstrap discount is ``gamma ** duration`` (zero on a terminal). A fixed
meta-action cost is subtracted once per decision, primitive or skill.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, asdict, field
from typing import NamedTuple, Union

import numpy as np

from .env import EnvConfig, Environment, make_env
from .errors import ConfigError, ContractViolation
from .policy import EpsilonSchedule, greedy_action


@dataclass(frozen=True)
class Primitive:
    action: int


@dataclass(frozen=True)
class Skill:
    skill: int


MetaAction = Union[Primitive, Skill]


@dataclass(frozen=True)
class GoalTask:
    """Reward ``goal_reward`` on entering ``goal``, which is terminal."""

    goal: int
    goal_reward: float = 1.0

    def reward(self, state: int) -> float:
        return self.goal_reward if state == self.goal else 0.0

    def is_terminal(self, state: int) -> bool:
        return state == self.goal


@dataclass(frozen=True)
class MetaConfig:
    meta_action_cost: float = 0.0
    skill_exec_length: int | None = None
    discount: float = 0.99
    step_size: float = 0.5
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_fraction: float = 0.5
    episodes: int = 300
    log_every: int = 10
    goal: tuple[int, int] = (0, 0)
    goal_reward: float = 1.0
    step_cap: int = 500
    start_min_chebyshev: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.meta_action_cost < 0:
            raise ConfigError("meta.meta_action_cost must be >= 0")
        if self.skill_exec_length is not None and self.skill_exec_length < 1:
            raise ConfigError("meta.skill_exec_length must be >= 1")
        if not 0 <= self.discount < 1:
            raise ConfigError("meta.discount must lie in [0, 1)")
        if not 0 <= self.step_size <= 1:
            raise ConfigError("meta.step_size must lie in [0, 1]")
        if self.episodes < 0 or self.log_every < 1 or self.step_cap < 1:
            raise ConfigError("meta.episodes must be >= 0, log_every and step_cap >= 1")
        object.__setattr__(self, "goal", tuple(int(c) for c in self.goal))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["goal"] = list(self.goal)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetaConfig":
        return cls(**d)

    def epsilon_schedule(self) -> EpsilonSchedule:
        steps = max(1, round(self.eps_decay_fraction * self.episodes))
        return EpsilonSchedule(self.eps_start, self.eps_end, steps)


class MetaTransition(NamedTuple):
    s_before: int
    action: MetaAction
    accumulated_reward: float
    effective_discount: float
    s_after: int
    terminal: bool
    duration: int
    # primitive actions actually executed and the per-step extrinsic rewards
    executed: tuple[int, ...] = ()
    rewards: tuple[float, ...] = ()


@dataclass
class MetaPolicy:
    """Tabular Q over primitive actions followed by skills."""

    num_states: int
    num_actions: int
    num_skills: int
    step_size: float = 0.5
    schedule: EpsilonSchedule = field(default_factory=EpsilonSchedule)

    def __post_init__(self):
        self.q_values = np.zeros((self.num_states, self.num_actions + self.num_skills))

    def index(self, action: MetaAction) -> int:
        if isinstance(action, Primitive):
            return action.action
        return self.num_actions + action.skill

    def action(self, index: int) -> MetaAction:
        if index < self.num_actions:
            return Primitive(index)
        return Skill(index - self.num_actions)

    def act(self, state: int, rng: np.random.Generator, epsilon: float) -> MetaAction:
        u_explore, u_action = rng.random(2)
        n = self.q_values.shape[1]
        if u_explore < epsilon:
            return self.action(min(int(u_action * n), n - 1))
        return self.action(greedy_action(self.q_values[state].tolist()))


def execute_meta_action(meta_action: MetaAction, state: int, skill_q: np.ndarray | None, env: Environment,
                        config: MetaConfig, rng: np.random.Generator | None = None,
                        max_steps: int | None = None) -> MetaTransition:
    """Run one meta decision from ``state``.

    ``skill_q`` is the frozen ``[K, S, A]`` skill table; it is only read.
    ``max_steps`` truncates a skill at the episode's step budget (a truncated
    skill is not terminal and bootstraps with ``gamma ** duration``).
    """
    gamma = config.discount
    if isinstance(meta_action, Primitive):
        plan = None
        length = 1
    elif isinstance(meta_action, Skill):
        if skill_q is None or not 0 <= meta_action.skill < skill_q.shape[0]:
            raise ContractViolation(f"skill {meta_action.skill} is not available")
        plan = skill_q[meta_action.skill]
        length = config.skill_exec_length or 1
    else:
        raise ContractViolation(f"not a meta action: {meta_action!r}")
    if max_steps is not None:
        length = min(length, max_steps)

    rng = rng if rng is not None else np.random.default_rng(0)
    s = state
    total, scale = 0.0, 1.0
    executed, rewards = [], []
    terminal = False
    for _ in range(length):
        a = meta_action.action if plan is None else greedy_action(plan[s].tolist())
        out = env.step(s, a, rng)
        s = out.next_state
        executed.append(a)
        rewards.append(out.extrinsic_reward)
        total += scale * out.extrinsic_reward
        scale *= gamma
        if out.terminal:
            terminal = True
            break
    duration = len(executed)
    effective = 0.0 if terminal else gamma ** duration
    return MetaTransition(state, meta_action, total - config.meta_action_cost, effective, s, terminal,
                          duration, tuple(executed), tuple(rewards))


def meta_learn(policy: MetaPolicy, transition: MetaTransition) -> MetaPolicy:
    """SMDP Q-learning: target = R + effective_discount * max_b Q[s_after, b]."""
    q = policy.q_values
    target = transition.accumulated_reward + transition.effective_discount * q[transition.s_after].max()
    i = transition.s_before, policy.index(transition.action)
    q[i] = (1.0 - policy.step_size) * q[i] + policy.step_size * target
    return policy


def discounted_meta_return(transitions, gamma: float) -> float:
    """Realized return of a decision sequence, compounding each step's discount."""
    total, scale = 0.0, 1.0
    for tr in transitions:
        total += scale * tr.accumulated_reward
        scale *= gamma ** tr.duration
    return total


def discounted_flat_return(rewards, gamma: float) -> float:
    total, scale = 0.0, 1.0
    for r in rewards:
        total += scale * r
        scale *= gamma
    return total


def torus_chebyshev(env: Environment, a: int, b: int) -> int:
    (xa, ya), (xb, yb) = env.coords[a], env.coords[b]
    if env.sizes is None:
        return max(abs(xa - xb), abs(ya - yb))
    dx, dy = (xa - xb) % env.sizes[0], (ya - yb) % env.sizes[1]
    return max(min(dx, env.sizes[0] - dx), min(dy, env.sizes[1] - dy))


def start_states(env: Environment, goal: int, min_chebyshev: int | None) -> list[int]:
    dist = [torus_chebyshev(env, s, goal) for s in range(env.num_states)]
    threshold = max(dist) if min_chebyshev is None else min_chebyshev
    starts = [s for s, d in enumerate(dist) if d >= threshold]
    if not starts:
        raise ConfigError(f"no start state at Chebyshev distance >= {threshold} from the goal")
    return starts


def table_hash(q: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(q).tobytes()).hexdigest()


class CurveRow(NamedTuple):
    arm: str
    seed: int
    episodes: int
    return_mean: float
    decisions_mean: float


def train_hrl(config: MetaConfig, skill_q: np.ndarray | None, env_config: EnvConfig, arm: str = "primitive",
              skill_length: int | None = None):
    """Train a meta-controller on the distant-goal task; returns ``(MetaPolicy, curve)``.

    ``skill_q`` is the frozen skill table, or ``None`` (or a table with zero
    skills) for the primitives-only arm. ``skill_length`` is the skills'
    training length, used when ``config.skill_exec_length`` is unset.
    """
    probe = make_env(env_config)
    if skill_q is not None:
        if skill_q.ndim != 3 or skill_q.shape[1:] != (probe.num_states, probe.num_actions):
            raise ContractViolation(
                f"skill table shape {skill_q.shape} does not match environment "
                f"({probe.num_states} states, {probe.num_actions} actions)")
        skill_q = skill_q.copy()
        skill_q.setflags(write=False)
    goal = probe.state_index(config.goal)
    env = make_env(env_config, GoalTask(goal, config.goal_reward))
    K = 0 if skill_q is None else skill_q.shape[0]
    if K and config.skill_exec_length is None:
        if skill_length is None:
            raise ConfigError("skill_exec_length must be set when the skills' training length is unknown")
        config = MetaConfig(**{**config.to_dict(), "skill_exec_length": skill_length})
    starts = start_states(env, goal, config.start_min_chebyshev)
    schedule = config.epsilon_schedule()
    policy = MetaPolicy(env.num_states, env.num_actions, K, config.step_size, schedule)
    rng = np.random.default_rng(config.seed)

    curve: list[CurveRow] = []
    returns, decisions = [], []
    for ep in range(config.episodes):
        epsilon = schedule.value(ep)
        s = starts[min(int(rng.random() * len(starts)), len(starts) - 1)]
        steps, n_decisions, ret = 0, 0, 0.0
        while steps < config.step_cap:
            action = policy.act(s, rng, epsilon)
            tr = execute_meta_action(action, s, skill_q, env, config, rng, config.step_cap - steps)
            meta_learn(policy, tr)
            steps += tr.duration
            n_decisions += 1
            ret += sum(tr.rewards)
            s = tr.s_after
            if tr.terminal:
                break
        returns.append(ret)
        decisions.append(n_decisions)
        if (ep + 1) % config.log_every == 0:
            curve.append(CurveRow(arm, config.seed, ep + 1, float(np.mean(returns)), float(np.mean(decisions))))
            returns, decisions = [], []
    return policy, curve


def episodes_to_threshold(curve, threshold: float = 0.9) -> float:
    """Episode count of the first curve row whose mean return reaches ``threshold`` (inf if never)."""
    for row in curve:
        if row.return_mean >= threshold:
            return row.episodes
    return float("inf")
