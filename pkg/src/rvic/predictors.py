"""Inverse skill predictors and the intrinsic reward.

Two predictors are kept side by side: a *relative* one, q(skill | s_T, s_0),
and an *absolute* one, q_abs(skill | s_T). Two families implement them:

``CountPredictorPair``
    Decayed, additively smoothed occurrence counts. Exact and cheap; the
    default.
``SoftmaxPredictorPair``
    Linear softmax heads over one-hot state features, trained by gradient
    ascent on the log-likelihood of the observed skill. The relative head sees
    the concatenated features of ``(s_0, s_T)``; the absolute head sees
    ``s_T`` only.

Rewards are always computed from a frozen ``PredictorSnapshot`` while the live
pair keeps training.

Normalizing sums are accumulated left to right over skills (not with
``numpy.sum``, whose pairwise summation rounds differently) so that these
objects agree bit for bit with the training kernels.
"""
from __future__ import annotations

import copy
import math

import numpy as np

from .errors import ConfigError, ContractViolation

REWARD_MODES = ("prob_diff", "log_q")
BASELINE_MODES = ("rvic", "vic")


def _normalize(values: list[float]) -> np.ndarray:
    total = 0.0
    for v in values:
        total = total + v
    return np.array([v / total for v in values])


def _softmax(logits) -> np.ndarray:
    mx = -1e308
    for v in logits:
        if v > mx:
            mx = v
    return _normalize([math.exp(v - mx) for v in logits])


class CountPredictorPair:
    """Decayed-count predictors.

    ``rel_counts[k, s0, sT]`` and ``abs_counts[k, sT]``. An update multiplies
    every count in the touched normalization group (all skills at the same
    conditioning states) by ``decay`` and then adds one to the observed skill.
    """

    family = "counts"

    def __init__(self, num_skills: int, num_states: int, alpha: float = 0.1, decay: float = 0.995):
        if alpha <= 0:
            raise ConfigError(f"smoothing alpha must be > 0, got {alpha}")
        if not 0 < decay <= 1:
            raise ConfigError(f"decay must lie in (0, 1], got {decay}")
        self.num_skills = num_skills
        self.num_states = num_states
        self.alpha = alpha
        self.decay = decay
        self.rel_counts = np.zeros((num_skills, num_states, num_states))
        self.abs_counts = np.zeros((num_skills, num_states))

    @property
    def rel_table(self) -> np.ndarray:
        return self.rel_counts

    @property
    def abs_table(self) -> np.ndarray:
        return self.abs_counts

    def predict_rel(self, s0: int, sT: int) -> np.ndarray:
        self._check(s0, sT)
        return _normalize([c + self.alpha for c in self.rel_counts[:, s0, sT].tolist()])

    def predict_abs(self, sT: int) -> np.ndarray:
        self._check(sT)
        return _normalize([c + self.alpha for c in self.abs_counts[:, sT].tolist()])

    def update(self, skill: int, s0: int, sT: int) -> "CountPredictorPair":
        self._check(s0, sT)
        self.rel_counts[:, s0, sT] *= self.decay
        self.rel_counts[skill, s0, sT] += 1.0
        self.abs_counts[:, sT] *= self.decay
        self.abs_counts[skill, sT] += 1.0
        return self

    def copy(self):
        return copy.deepcopy(self)

    def _check(self, *states):
        for s in states:
            if not 0 <= s < self.num_states:
                raise ContractViolation(f"state {s} out of range [0, {self.num_states})")


def log_likelihood(weights: np.ndarray, features: np.ndarray, skill: int) -> float:
    """``log softmax(weights @ features)[skill]``."""
    logits = weights @ features
    mx = logits.max()
    return float(logits[skill] - mx - np.log(np.exp(logits - mx).sum()))


def log_likelihood_grad(weights: np.ndarray, features: np.ndarray, skill: int) -> np.ndarray:
    """Gradient of :func:`log_likelihood` with respect to ``weights``."""
    probs = _softmax((weights @ features).tolist())
    target = np.zeros(weights.shape[0])
    target[skill] = 1.0
    return np.outer(target - probs, features)


class SoftmaxPredictorPair:
    """Linear softmax heads on a fixed one-hot encoding."""

    family = "softmax"

    def __init__(self, num_skills: int, num_states: int, learning_rate: float = 0.5):
        if learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {learning_rate}")
        self.num_skills = num_skills
        self.num_states = num_states
        self.learning_rate = learning_rate
        self.rel_weights = np.zeros((num_skills, 2 * num_states))
        self.abs_weights = np.zeros((num_skills, num_states))

    @property
    def rel_table(self) -> np.ndarray:
        return self.rel_weights

    @property
    def abs_table(self) -> np.ndarray:
        return self.abs_weights

    def rel_features(self, s0: int, sT: int) -> np.ndarray:
        f = np.zeros(2 * self.num_states)
        f[s0] = 1.0
        f[self.num_states + sT] = 1.0
        return f

    def abs_features(self, sT: int) -> np.ndarray:
        f = np.zeros(self.num_states)
        f[sT] = 1.0
        return f

    def predict_rel(self, s0: int, sT: int) -> np.ndarray:
        self._check(s0, sT)
        logits = self.rel_weights[:, s0] + self.rel_weights[:, self.num_states + sT]
        return _softmax(logits.tolist())

    def predict_abs(self, sT: int) -> np.ndarray:
        self._check(sT)
        return _softmax(self.abs_weights[:, sT].tolist())

    def update(self, skill: int, s0: int, sT: int) -> "SoftmaxPredictorPair":
        # Heads are updated independently: the encoding is fixed, so no
        # gradient is shared between them.
        self._check(s0, sT)
        lr = self.learning_rate
        g = log_likelihood_grad(self.rel_weights, self.rel_features(s0, sT), skill)
        cols = [s0, self.num_states + sT]
        self.rel_weights[:, cols] += lr * g[:, cols]
        g = log_likelihood_grad(self.abs_weights, self.abs_features(sT), skill)
        self.abs_weights[:, sT] += lr * g[:, sT]
        return self

    def copy(self):
        return copy.deepcopy(self)

    _check = CountPredictorPair._check


def make_predictor_pair(family: str, num_skills: int, num_states: int, *, alpha=0.1, decay=0.995,
                        learning_rate=0.5):
    if family == "counts":
        return CountPredictorPair(num_skills, num_states, alpha, decay)
    if family == "softmax":
        return SoftmaxPredictorPair(num_skills, num_states, learning_rate)
    raise ConfigError(f"unknown predictor family {family!r}")


class PredictorSnapshot:
    """Frozen copy of a predictor pair, refreshed every ``refresh_period`` updates."""

    def __init__(self, pair, refresh_period: int = 10):
        if refresh_period < 1:
            raise ConfigError(f"refresh_period must be >= 1, got {refresh_period}")
        self.pair = pair.copy()
        self.refresh_period = refresh_period

    def refresh(self, live, step_counter: int) -> "PredictorSnapshot":
        if step_counter % self.refresh_period == 0:
            self.pair = live.copy()
        return self

    def predict_rel(self, s0, sT):
        return self.pair.predict_rel(s0, sT)

    def predict_abs(self, sT):
        return self.pair.predict_abs(sT)


def intrinsic_reward(snapshot, skill: int, s0: int, sT: int, reward_mode: str = "prob_diff",
                     baseline_mode: str = "rvic") -> float:
    """Reward for one skill episode.

    rvic/prob_diff: q(skill|s_T,s_0) - q_abs(skill|s_T), in (-1, 1)
    vic/prob_diff:  q(skill|s_T,s_0)
    rvic/log_q:     log q - log q_abs
    vic/log_q:      log q
    """
    if reward_mode not in REWARD_MODES:
        raise ConfigError(f"reward_mode must be one of {REWARD_MODES}")
    if baseline_mode not in BASELINE_MODES:
        raise ConfigError(f"baseline_mode must be one of {BASELINE_MODES}")
    q_rel = float(snapshot.predict_rel(s0, sT)[skill])
    log_mode = reward_mode == "log_q"
    if baseline_mode == "vic":
        return math.log(q_rel) if log_mode else q_rel
    q_abs = float(snapshot.predict_abs(sT)[skill])
    return math.log(q_rel) - math.log(q_abs) if log_mode else q_rel - q_abs
