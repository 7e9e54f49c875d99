import numpy as np
import pytest

from rvic.env import EnvConfig, make_env
from rvic.metrics import RolloutSet


@pytest.fixture
def torus8():
    return make_env(EnvConfig(width=8, height=8))


def translation_rollouts(env, moves):
    """One record per (skill, start) for skills that translate by ``moves[k]``."""
    w, h = env.sizes
    recs = []
    for k, (dx, dy) in enumerate(moves):
        for s in range(env.num_states):
            x, y = env.coords[s]
            recs.append((k, s, env.state_index(((x + dx) % w, (y + dy) % h))))
    return RolloutSet.from_records(recs)


def constant_rollouts(env, num_skills, target=0):
    return RolloutSet.from_records((k, s, target) for k in range(num_skills) for s in range(env.num_states))


FOUR_MOVES = ((1, 0), (0, 1), (-1, 0), (0, -1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(module.RESULTS, key=int):
        for line in module.RESULTS[cid]:
            terminalreporter.write_line(line)
