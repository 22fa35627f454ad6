"""Goal-reaching MDP around the snake simulator.

One environment step spans one actuation period: the agent commands the
four channel biases and the wave direction, the simulator advances a full
period, and the agent observes the goal displacement, the heading
deflection toward the goal, and the bias history. Reward combines a dense
punishment for remaining distance (relative to the starting distance) and
deflection with a sparse terminal bonus on reaching the goal neighborhood.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import PhysicalParams, SnakeState, advance_period, initial_state
from .errors import ConfigError, DomainError, EpisodeStateError
from .kinematics import ActuationConfig, BodyGrid, ChannelState

OBSERVATION_DIM = 11
ACTION_DIM = 5

REGION_KINDS = ("full_annulus", "left_half", "right_half")

# Polar-angle sector per region kind, in [0, 2*pi).
_SECTORS = {
    "full_annulus": (0.0, 2.0 * math.pi),
    "left_half": (0.5 * math.pi, 1.5 * math.pi),
    "right_half": (-0.5 * math.pi, 0.5 * math.pi),
}


def wrap_angle(angle: float) -> float:
    """Wrap into (-pi, pi]."""
    return math.pi - (math.pi - angle) % (2.0 * math.pi)


@dataclass(frozen=True)
class GoalRegion:
    """Annulus or half-annulus goal sampling region around ``center``."""

    kind: str = "full_annulus"
    r_min: float = 0.3
    r_max: float = 0.6
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.kind not in REGION_KINDS:
            raise ConfigError(f"unknown region kind {self.kind!r}")
        if not 0.0 < self.r_min < self.r_max:
            raise ConfigError(
                f"require 0 < r_min < r_max, got ({self.r_min}, {self.r_max})"
            )

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """Area-uniform goal point inside the region."""
        lo, hi = _SECTORS[self.kind]
        angle = rng.uniform(lo, hi)
        radius = math.sqrt(rng.uniform(self.r_min**2, self.r_max**2))
        return np.array(self.center) + radius * np.array(
            [math.cos(angle), math.sin(angle)]
        )

    def contains(self, point) -> bool:
        dx, dy = np.asarray(point, dtype=float) - np.asarray(self.center)
        radius = math.hypot(dx, dy)
        if not self.r_min <= radius <= self.r_max:
            return False
        lo, hi = _SECTORS[self.kind]
        angle = math.atan2(dy, dx)
        return lo <= angle < hi or lo <= angle + 2.0 * math.pi < hi


@dataclass(frozen=True)
class EpisodeConfig:
    """Task constants: success radius, step limit, reward weights."""

    success_radius: float = 0.03
    max_steps: int = 150
    success_reward: float = 50.0
    distance_weight: float = 0.15
    deflection_weight: float = 1.0
    discount: float = 0.99
    control_substeps: int = 100

    def __post_init__(self):
        if not self.success_radius > 0:
            raise ConfigError("success_radius must be > 0")
        if not self.max_steps > 0:
            raise ConfigError("max_steps must be > 0")
        if not 0.0 < self.discount < 1.0:
            raise ConfigError("discount must be in (0, 1)")
        if self.control_substeps < 20:
            raise ConfigError("control_substeps must be at least 20")


@dataclass(frozen=True)
class Observation:
    """Agent-visible state: goal displacement, deflection, bias history."""

    dx: float
    dy: float
    dtheta: float
    bias: np.ndarray
    bias_prev: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate(
            [[self.dx, self.dy, self.dtheta], self.bias, self.bias_prev]
        )


@dataclass(frozen=True)
class Action:
    """Channel biases in [0,1] and a continuous wave-direction value in
    [-1,1]; the environment discretizes the direction by sign."""

    bias: np.ndarray
    direction: float

    @staticmethod
    def from_vector(vec) -> "Action":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (ACTION_DIM,):
            raise DomainError(f"action vector must have {ACTION_DIM} entries")
        return Action(bias=vec[:4].copy(), direction=float(vec[4]))

    def clamped(self) -> "Action":
        return Action(
            bias=np.clip(self.bias, 0.0, 1.0),
            direction=float(np.clip(self.direction, -1.0, 1.0)),
        )


def compute_reward(
    d_t: float, d_0: float, dtheta: float, success: bool, cfg: EpisodeConfig
) -> float:
    """Distance/deflection punishment plus the sparse success bonus."""
    if not d_0 > 0:
        raise DomainError(f"initial distance must be positive, got {d_0}")
    r = -(
        cfg.distance_weight * d_t / d_0
        + cfg.deflection_weight * abs(dtheta) / math.pi
    )
    if success:
        r += cfg.success_reward
    return r


class SnakeEnv:
    """Single-threaded goal-reaching environment instance.

    Construct one per rollout stream; `reset` starts an episode with a
    freshly sampled goal and `step` applies one bias/direction command per
    actuation period.
    """

    def __init__(
        self,
        region: GoalRegion | None = None,
        episode: EpisodeConfig | None = None,
        actuation: ActuationConfig | None = None,
        physical: PhysicalParams | None = None,
        grid: BodyGrid | None = None,
    ):
        self.region = region or GoalRegion()
        self.episode = episode or EpisodeConfig()
        self.actuation = actuation or ActuationConfig()
        self.physical = physical or PhysicalParams()
        self.grid = grid or BodyGrid()
        self._state: SnakeState | None = None
        self._channel: ChannelState | None = None
        self._goal: np.ndarray | None = None
        self._d0 = 0.0
        self._steps = 0
        self._done = True

    def reset(self, seed=None, goal=None):
        """Start an episode: robot at the origin at rest with zero biases.

        ``seed`` may be an int or a numpy Generator; ``goal`` overrides
        sampling (used by evaluation sweeps with pre-drawn goal sets).
        Returns (observation, goal point).
        """
        rng = (
            seed
            if isinstance(seed, np.random.Generator)
            else np.random.default_rng(seed)
        )
        self._goal = (
            np.asarray(goal, dtype=float) if goal is not None else self.region.sample(rng)
        )
        self._channel = ChannelState()
        self._state = initial_state(self._channel, self.actuation, self.grid)
        self._d0 = float(np.linalg.norm(self._goal - self._state.com))
        self._steps = 0
        self._done = False
        return self._observe(), self._goal.copy()

    @property
    def state(self) -> SnakeState:
        if self._state is None:
            raise EpisodeStateError("reset() has not been called")
        return self._state

    @property
    def goal(self) -> np.ndarray:
        if self._goal is None:
            raise EpisodeStateError("reset() has not been called")
        return self._goal.copy()

    @property
    def initial_distance(self) -> float:
        return self._d0

    def _observe(self) -> Observation:
        delta = self._goal - self._state.com
        theta_g = math.atan2(delta[1], delta[0])
        return Observation(
            dx=float(delta[0]),
            dy=float(delta[1]),
            dtheta=wrap_angle(theta_g - self._state.heading),
            bias=self._channel.bias.copy(),
            bias_prev=self._channel.bias_prev.copy(),
        )

    def step(self, action: Action):
        """Apply one bias/direction command and advance one period.

        Returns (observation, reward, done, success).
        """
        if self._done or self._state is None:
            raise EpisodeStateError("step() called on a finished episode")
        act = (
            action if isinstance(action, Action) else Action.from_vector(action)
        ).clamped()
        self._channel = ChannelState(
            bias=act.bias,
            bias_prev=self._channel.bias.copy(),
            direction=1 if act.direction >= 0 else -1,
        )
        self._state = advance_period(
            self._state,
            self._channel,
            self.actuation,
            self.physical,
            self.grid,
            n_substeps=self.episode.control_substeps,
        )
        self._steps += 1
        obs = self._observe()
        d_t = math.hypot(obs.dx, obs.dy)
        success = d_t <= self.episode.success_radius
        reward = compute_reward(d_t, self._d0, obs.dtheta, success, self.episode)
        self._done = success or self._steps >= self.episode.max_steps
        return obs, reward, self._done, success

    @property
    def steps_taken(self) -> int:
        return self._steps

    @property
    def done(self) -> bool:
        return self._done
