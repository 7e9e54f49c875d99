"""Hot training loop, compiled when possible.

``BACKEND`` is ``"cython"`` when the extension built at install time imports,
``"python"`` otherwise. Setting ``RVIC_PURE_PYTHON=1`` in the environment
forces the fallback. Both backends are bitwise interchangeable.
"""
from __future__ import annotations

import os
from typing import NamedTuple

from . import _reference

# Family / mode codes shared with the kernels.
COUNTS, SOFTMAX = 0, 1
PROB_DIFF, LOG_Q = 0, 1
RVIC, VIC = 0, 1


class KernelParams(NamedTuple):
    num_skills: int
    episode_length: int
    episodes_per_reset: int
    gamma: float
    final_step_discount: float
    dense_reward: bool
    reward_mode: int
    baseline_mode: int
    family: int
    alpha: float
    decay: float
    learning_rate: float
    refresh_period: int
    beta: float
    slip_prob: float
    actor_update_period: int


def uniforms_per_episode(episode_length: int) -> int:
    return _reference.UNIFORMS_HEAD + _reference.UNIFORMS_PER_STEP * episode_length


_compiled = None
if not os.environ.get("RVIC_PURE_PYTHON"):
    try:
        from . import _kernel as _compiled
    except ImportError:
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"


def get_backend(name: str | None = None):
    """Return the ``run_episodes`` implementation for ``name`` (default: best available)."""
    name = name or BACKEND
    if name == "python":
        return _reference.run_episodes
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernel is not available; reinstall with a C compiler")
        return _compiled.run_episodes
    raise ValueError(f"unknown backend {name!r}")


def compiled_available() -> bool:
    return _compiled is not None
