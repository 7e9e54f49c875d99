"""Finite, fully observable environments.

All environments share one action layout (four moves plus a no-op) and are
deterministic apart from an optional slip: with probability ``slip_prob`` the
executed action is replaced by a uniformly random one. Because the dynamics
are deterministic given the executed action, each environment is compiled into
a ``(num_states, num_actions)`` transition table that the training kernels
consume directly.

Randomness contract: ``reset`` consumes exactly one uniform draw and ``step``
consumes exactly two (slip test, replacement action), whether or not they are
used. The training kernels follow the same layout, so a manually composed
rollout reproduces a kernel rollout draw-for-draw.
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, ContractViolation

TOROIDAL_GRID = "toroidal_grid"
FOUR_ROOMS = "four_rooms"
TWO_JOINT_ARM = "two_joint_arm"
KINDS = (TOROIDAL_GRID, FOUR_ROOMS, TWO_JOINT_ARM)
TORUS_KINDS = (TOROIDAL_GRID, TWO_JOINT_ARM)

# Grid actions: (dx, dy). Arm actions reuse the slots as joint increments.
UP, DOWN, LEFT, RIGHT, NOOP = range(5)
GRID_MOVES = ((0, -1), (0, 1), (-1, 0), (1, 0), (0, 0))
GRID_ACTION_NAMES = ("up", "down", "left", "right", "noop")
ARM_MOVES = ((1, 0), (-1, 0), (0, 1), (0, -1), (0, 0))
ARM_ACTION_NAMES = ("joint1+", "joint1-", "joint2+", "joint2-", "noop")

# Classic 13x13 four-rooms map. '#' is wall. Doorways sit at (x=6, y=3),
# (x=6, y=10), (x=2, y=6) and (x=9, y=7).
FOUR_ROOMS_LAYOUT = (
    "#############",
    "#     #     #",
    "#     #     #",
    "#           #",
    "#     #     #",
    "#     #     #",
    "## ####     #",
    "#     ### ###",
    "#     #     #",
    "#     #     #",
    "#           #",
    "#     #     #",
    "#############",
)


@dataclass(frozen=True)
class EnvConfig:
    kind: str = TOROIDAL_GRID
    width: int = 8
    height: int = 8
    joint_resolutions: tuple[int, int] = (8, 8)
    slip_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"env.kind must be one of {KINDS}, got {self.kind!r}")
        if not 0.0 <= self.slip_prob < 1.0:
            raise ConfigError(f"env.slip_prob must lie in [0, 1), got {self.slip_prob}")
        if self.kind == TWO_JOINT_ARM:
            res = tuple(self.joint_resolutions)
            if len(res) != 2 or min(res) < 1:
                raise ConfigError(f"env.joint_resolutions must be two positive ints, got {res}")
            object.__setattr__(self, "joint_resolutions", (int(res[0]), int(res[1])))
        else:
            if self.width < 1 or self.height < 1:
                raise ConfigError(f"grid dimensions must be positive, got {self.width}x{self.height}")
            if self.kind == FOUR_ROOMS and (self.width, self.height) != (13, 13):
                raise ConfigError("four_rooms only supports the fixed 13x13 layout")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["joint_resolutions"] = list(self.joint_resolutions)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EnvConfig":
        d = dict(d)
        if "joint_resolutions" in d:
            d["joint_resolutions"] = tuple(d["joint_resolutions"])
        return cls(**d)


class StepOutcome(NamedTuple):
    next_state: int
    extrinsic_reward: float
    terminal: bool


def four_rooms_mask() -> np.ndarray:
    """Boolean ``(height, width)`` array, True on walkable cells."""
    return np.array([[c != "#" for c in row] for row in FOUR_ROOMS_LAYOUT], dtype=bool)


@dataclass
class Environment:
    """A compiled finite environment.

    ``task`` is an optional object with ``reward(next_state) -> float`` and
    ``is_terminal(next_state) -> bool``; without one, the extrinsic reward is
    zero and no step is terminal.
    """

    config: EnvConfig
    task: object = None
    coords: list = field(init=False, repr=False)
    transitions: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        cfg = self.config
        if cfg.kind == TOROIDAL_GRID:
            self.sizes = (cfg.width, cfg.height)
            self.coords = [(x, y) for y in range(cfg.height) for x in range(cfg.width)]
            moves = GRID_MOVES
        elif cfg.kind == TWO_JOINT_ARM:
            self.sizes = cfg.joint_resolutions
            r1, r2 = self.sizes
            self.coords = [(j1, j2) for j1 in range(r1) for j2 in range(r2)]
            moves = ARM_MOVES
        else:
            self.sizes = None
            mask = four_rooms_mask()
            self.coords = [(x, y) for y in range(cfg.height) for x in range(cfg.width) if mask[y, x]]
            moves = GRID_MOVES
        self._index = {c: i for i, c in enumerate(self.coords)}
        n = len(self.coords)
        table = np.empty((n, len(moves)), dtype=np.int64)
        for s, (u, v) in enumerate(self.coords):
            for a, (du, dv) in enumerate(moves):
                if self.sizes is not None:
                    nxt = ((u + du) % self.sizes[0], (v + dv) % self.sizes[1])
                else:
                    nxt = (u + du, v + dv)
                    if nxt not in self._index:
                        nxt = (u, v)
                table[s, a] = self._index[nxt]
        table.setflags(write=False)
        self.transitions = table

    @property
    def num_states(self) -> int:
        return len(self.coords)

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[1]

    @property
    def is_torus(self) -> bool:
        return self.config.kind in TORUS_KINDS

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.config.seed)

    def enumerate_states(self) -> list[int]:
        return list(range(self.num_states))

    def state_coords(self, state: int) -> tuple[int, int]:
        self._check_state(state)
        return self.coords[state]

    def state_index(self, coords) -> int:
        try:
            return self._index[tuple(coords)]
        except KeyError:
            raise ContractViolation(f"{tuple(coords)} is not a state of {self.config.kind}") from None

    def reset(self, rng: np.random.Generator) -> int:
        """Uniform draw over all (walkable) states."""
        return start_from_uniform(rng.random(), self.num_states)

    def step(self, state: int, action: int, rng: np.random.Generator) -> StepOutcome:
        self._check_state(state)
        if not 0 <= action < self.num_actions:
            raise ContractViolation(f"action {action} out of range [0, {self.num_actions})")
        u_slip, u_action = rng.random(2)
        if u_slip < self.config.slip_prob:
            action = uniform_index(u_action, self.num_actions)
        nxt = int(self.transitions[state, action])
        if self.task is None:
            return StepOutcome(nxt, 0.0, False)
        return StepOutcome(nxt, float(self.task.reward(nxt)), bool(self.task.is_terminal(nxt)))

    def displacement(self, s0: int, s1: int) -> tuple[int, int]:
        """Coordinate-wise ``s1 - s0`` modulo the torus sizes."""
        if self.sizes is None:
            raise ContractViolation("displacement is only defined on torus-family environments")
        (a0, b0), (a1, b1) = self.coords[s0], self.coords[s1]
        return ((a1 - a0) % self.sizes[0], (b1 - b0) % self.sizes[1])

    def one_hot(self, state: int) -> np.ndarray:
        v = np.zeros(self.num_states)
        v[state] = 1.0
        return v

    def ascii_layout(self) -> str:
        if self.config.kind == FOUR_ROOMS:
            return "\n".join(FOUR_ROOMS_LAYOUT)
        w, h = self.sizes if self.config.kind == TOROIDAL_GRID else self.sizes[::-1]
        return "\n".join("." * w for _ in range(h))

    def _check_state(self, state):
        if not 0 <= state < self.num_states:
            raise ContractViolation(f"state {state} out of range [0, {self.num_states})")


def uniform_index(u: float, n: int) -> int:
    # u in [0, 1); the min() guards the measure-zero rounding case u*n == n.
    return min(int(u * n), n - 1)


def start_from_uniform(u: float, n: int) -> int:
    return uniform_index(u, n)


def make_env(config: EnvConfig, task=None) -> Environment:
    return Environment(config, task)
