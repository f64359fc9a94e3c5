"""Attribution as a sequential decision process.

Each time step shows the agent one sample; the action is a group code and the
reward scores that guess. The next observation is the next sample in the
current pass over the split, whatever the action was. Episodes end after the
horizon or when the pass runs out; the following ``reset`` continues the pass
where it stopped and draws a fresh order only once the pass is exhausted.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .data import DataSplit
from .errors import ActionOutOfRange, EmptySplit, EpisodeFinished

FULL_PASS = "full-pass"


@dataclass(frozen=True)
class RewardScheme:
    correct_reward: float = 1.0
    incorrect_reward: float = 0.0

    def __post_init__(self):
        if not self.correct_reward > self.incorrect_reward:
            raise ValueError("correct_reward must exceed incorrect_reward")


@dataclass(frozen=True)
class EpisodeSchedule:
    horizon: int | str = FULL_PASS
    order: str = "shuffled"
    seed: int = 0
    vary_horizon: tuple[int, int] | None = None

    def __post_init__(self):
        if self.horizon != FULL_PASS and (not isinstance(self.horizon, int) or self.horizon < 1):
            raise ValueError(f"horizon must be a positive integer or {FULL_PASS!r}")
        if self.order not in ("shuffled", "sequential"):
            raise ValueError(f"order must be 'shuffled' or 'sequential', got {self.order!r}")
        if self.vary_horizon is not None:
            lo, hi = self.vary_horizon
            if not 1 <= lo <= hi:
                raise ValueError("vary_horizon needs 1 <= T_min <= T_max")
            object.__setattr__(self, "vary_horizon", (int(lo), int(hi)))


class AttributionEnv:
    """Gym-style ``reset``/``step`` over a label-coded split."""

    def __init__(self, split: DataSplit, reward: RewardScheme | None = None, schedule: EpisodeSchedule | None = None):
        self.split = split
        self.reward = reward or RewardScheme()
        self.schedule = schedule or EpisodeSchedule()
        self._rng = np.random.default_rng(self.schedule.seed)
        self._order = np.arange(len(split))
        self._cursor = len(split)  # forces a fresh pass on first reset
        self._passes = 0
        self.t = 0
        self.horizon = 0
        self.done = True

    def spaces(self) -> tuple[int, int]:
        return self.split.num_classes, self.split.dim

    @property
    def num_actions(self) -> int:
        return self.split.num_classes

    @property
    def observation_dim(self) -> int:
        return self.split.dim

    def _current_index(self) -> int:
        return int(self._order[self._cursor])

    @property
    def observation(self) -> np.ndarray:
        return self.split.X[self._current_index()]

    @property
    def true_label(self) -> int:
        """The hidden label of the current observation (for oracles and tests)."""
        return int(self.split.y[self._current_index()])

    def reset(self) -> np.ndarray:
        n = len(self.split)
        if n == 0:
            raise EmptySplit("cannot reset an environment over an empty split")
        if self._cursor >= n:
            if self.schedule.order == "shuffled":
                self._order = self._rng.permutation(n)
            else:
                self._order = np.arange(n)
            self._cursor = 0
            self._passes += 1
        if self.schedule.vary_horizon is not None:
            lo, hi = self.schedule.vary_horizon
            self.horizon = int(self._rng.integers(lo, hi + 1))
        elif self.schedule.horizon == FULL_PASS:
            self.horizon = n
        else:
            self.horizon = int(self.schedule.horizon)
        self.t = 0
        self.done = False
        return self.observation.copy()

    def step(self, action: int) -> tuple[np.ndarray, float, bool]:
        if self.done:
            raise EpisodeFinished("episode is over; call reset()")
        if not 0 <= int(action) < self.num_actions:
            raise ActionOutOfRange(f"action {action} outside [0, {self.num_actions})")
        hit = int(action) == self.true_label
        reward = self.reward.correct_reward if hit else self.reward.incorrect_reward
        self.t += 1
        self._cursor += 1
        exhausted = self._cursor >= len(self.split)
        self.done = self.t >= self.horizon or exhausted
        if exhausted:
            next_obs = np.zeros(self.split.dim, dtype=self.split.X.dtype)
        else:
            next_obs = self.observation.copy()
        return next_obs, float(reward), self.done

    def clone(self) -> "AttributionEnv":
        return copy.deepcopy(self)
