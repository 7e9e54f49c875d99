import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rvic.env import EnvConfig, make_env
from rvic.errors import ContractViolation
from rvic.hrl import (GoalTask, MetaConfig, MetaPolicy, MetaTransition, Primitive, Skill, discounted_flat_return,
                      discounted_meta_return, episodes_to_threshold, execute_meta_action, meta_learn,
                      start_states, table_hash, train_hrl)

RIGHT = 3


def line_env(goal_x=None, width=6):
    cfg = EnvConfig(width=width, height=1)
    probe = make_env(cfg)
    task = None if goal_x is None else GoalTask(probe.state_index((goal_x, 0)))
    return make_env(cfg, task)


def right_skill(env):
    q = np.zeros((1, env.num_states, env.num_actions))
    q[0, :, RIGHT] = 1.0
    return q


def test_skill_return_arithmetic():
    env = line_env(goal_x=3)
    cfg = MetaConfig(meta_action_cost=0.1, skill_exec_length=3, discount=0.9)
    tr = execute_meta_action(Skill(0), 0, right_skill(env), env, cfg)
    assert tr.rewards == (0.0, 0.0, 1.0)
    assert tr.accumulated_reward == pytest.approx(0.71, abs=1e-15)
    assert tr.duration == 3 and tr.terminal and tr.effective_discount == 0.0


def test_skill_nonterminal_discount():
    env = line_env()
    tr = execute_meta_action(Skill(0), 0, right_skill(env), env, MetaConfig(skill_exec_length=3, discount=0.9))
    assert tr.effective_discount == pytest.approx(0.729, abs=1e-15) and tr.duration == 3
    assert tr.s_after == 3


def test_primitive_costs():
    env = line_env()
    tr = execute_meta_action(Primitive(RIGHT), 0, None, env, MetaConfig(meta_action_cost=0.1, discount=0.9))
    assert tr.accumulated_reward == -0.1 and tr.effective_discount == 0.9 and tr.duration == 1


def test_skill_stops_at_terminal():
    env = line_env(goal_x=2)
    tr = execute_meta_action(Skill(0), 0, right_skill(env), env, MetaConfig(skill_exec_length=5))
    assert tr.duration == 2 and tr.effective_discount == 0.0 and tr.terminal


def test_missing_skill_rejected():
    env = line_env()
    with pytest.raises(ContractViolation):
        execute_meta_action(Skill(1), 0, right_skill(env), env, MetaConfig(skill_exec_length=2))


def test_terminal_update_sets_reward():
    pol = MetaPolicy(3, 5, 0, step_size=1.0)
    pol.q_values[2] = 7.0
    meta_learn(pol, MetaTransition(0, Primitive(1), 0.4, 0.0, 2, True, 1))
    assert pol.q_values[0, 1] == 0.4


def test_zero_step_size_noop():
    pol = MetaPolicy(3, 5, 2, step_size=0.0)
    pol.q_values[:] = 1.5
    meta_learn(pol, MetaTransition(0, Skill(1), 3.0, 0.5, 2, False, 2))
    assert np.all(pol.q_values == 1.5)


def test_two_step_chain_by_hand():
    pol = MetaPolicy(3, 5, 1, step_size=0.5)
    # skill from state 1 lands on 2 (terminal, reward 1), then primitive from 0 lands on 1
    meta_learn(pol, MetaTransition(1, Skill(0), 1.0 - 0.1, 0.0, 2, True, 2))
    assert pol.q_values[1, 5] == 0.45
    meta_learn(pol, MetaTransition(0, Primitive(RIGHT), -0.1, 0.9, 1, False, 1))
    assert pol.q_values[0, RIGHT] == 0.5 * (-0.1 + 0.9 * 0.45)


def test_effective_discount_values():
    env = make_env(EnvConfig(width=4, height=4), GoalTask(5))
    rng = np.random.default_rng(0)
    q = rng.normal(size=(3, 16, 5))
    cfg = MetaConfig(skill_exec_length=4, discount=0.8)
    allowed = {0.0} | {0.8 ** d for d in range(1, 5)}
    for s in range(16):
        for k in range(3):
            assert execute_meta_action(Skill(k), s, q, env, cfg, rng).effective_discount in allowed


@given(st.lists(st.one_of(st.tuples(st.just("p"), st.integers(0, 4)), st.tuples(st.just("s"), st.integers(0, 2))),
                min_size=1, max_size=25), st.integers(0, 24), st.integers(1, 5))
@settings(max_examples=200, deadline=None)
def test_meta_return_equals_flat_return(script, start, T):
    env = make_env(EnvConfig(width=5, height=5), GoalTask(12))
    q = np.random.default_rng(T).normal(size=(3, 25, 5))
    cfg = MetaConfig(skill_exec_length=T, discount=0.93)
    s, transitions = start, []
    for kind, idx in script:
        tr = execute_meta_action(Primitive(idx) if kind == "p" else Skill(idx), s, q, env, cfg)
        transitions.append(tr)
        s = tr.s_after
        if tr.terminal:
            break
    flat_rewards = [env.step(a_s, a, env.rng()).extrinsic_reward for a_s, a in _replay(env, start, transitions)]
    assert abs(discounted_meta_return(transitions, 0.93) - discounted_flat_return(flat_rewards, 0.93)) <= 1e-12


def _replay(env, start, transitions):
    s = start
    for tr in transitions:
        for a in tr.executed:
            yield s, a
            s = int(env.transitions[s, a])


def _flat_values(env, goal, gamma):
    """Value iteration on the flat goal MDP (reward 1 on entering the goal, which is terminal)."""
    v = np.zeros(env.num_states)
    for _ in range(200):
        q = np.where(env.transitions == goal, 1.0, gamma * v[env.transitions])
        v = q.max(axis=1)
        v[goal] = 0.0
    return q


def test_adjacent_goal_learns_one_step_paths():
    env_cfg = EnvConfig(width=3, height=1)  # both non-goal cells neighbour the goal
    cfg = MetaConfig(goal=(1, 0), episodes=400, start_min_chebyshev=1, seed=0)
    policy, curve = train_hrl(cfg, None, env_cfg)
    env = make_env(env_cfg)
    goal = env.state_index((1, 0))
    oracle = _flat_values(env, goal, cfg.discount)
    for s in start_states(env, goal, 1):
        a = int(np.argmax(policy.q_values[s]))
        assert oracle[s, a] == oracle[s].max() == 1.0
        assert env.transitions[s, a] == goal
    assert curve[-1].decisions_mean == 1.0


def test_zero_skills_same_as_primitive_arm():
    env_cfg = EnvConfig(width=7, height=7)
    cfg = MetaConfig(goal=(0, 0), episodes=60, seed=4)
    _, a = train_hrl(cfg, None, env_cfg)
    _, b = train_hrl(cfg, np.zeros((0, 49, 5)), env_cfg)
    assert [r[2:] for r in a] == [r[2:] for r in b]


def test_shape_mismatch_refused():
    with pytest.raises(ContractViolation):
        train_hrl(MetaConfig(), np.zeros((2, 10, 5)), EnvConfig(width=4, height=4), "rvic", 3)


def test_skill_table_unchanged_by_training():
    env_cfg = EnvConfig(width=9, height=9)
    q = np.random.default_rng(1).normal(size=(4, 81, 5))
    before = table_hash(q)
    train_hrl(MetaConfig(episodes=50, goal=(0, 0)), q, env_cfg, "rvic", 4)
    assert table_hash(q) == before


def test_curve_shape_and_threshold():
    _, curve = train_hrl(MetaConfig(episodes=40, log_every=10), None, EnvConfig(width=5, height=5))
    assert [r.episodes for r in curve] == [10, 20, 30, 40]
    assert all(r.arm == "primitive" for r in curve)
    assert episodes_to_threshold(curve, 2.0) == float("inf")


def test_start_states_are_farthest_ring():
    env = make_env(EnvConfig(width=15, height=15))
    starts = start_states(env, 0, None)
    assert len(starts) == 15 ** 2 - 13 ** 2  # outermost ring at Chebyshev distance 7
    assert all(max(min(x, 15 - x), min(y, 15 - y)) == 7 for x, y in map(env.state_coords, starts))
