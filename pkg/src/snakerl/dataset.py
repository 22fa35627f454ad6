"""Offline transition dataset: collection, normalization, storage, batching.

Transitions are stored as parallel arrays (observations, actions, rewards,
next observations, terminal and success flags) plus episode start indices.
The on-disk container is a single binary file: magic, version, a JSON
header describing dimensions, episode boundaries, normalization stats and
a payload checksum, then the raw little-endian float64 payload. A CSV
export exists for eyeballing.

Collection runs a behavior policy through the environment. The default
behavior source is a proportional steering controller with exploration
noise and a fraction of fully random episodes, which yields the
mixed-quality data offline RL expects.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, replace

import numpy as np

from .env import ACTION_DIM, OBSERVATION_DIM, SnakeEnv
from .errors import ContractError, DataError, FormatError

_MAGIC = b"SNKD"
_VERSION = 1
_VARIANCE_FLOOR = 1e-8

STEER_PATTERN = np.array([-1.0, 1.0, 1.0, -1.0])


@dataclass(frozen=True)
class Transition:
    observation: np.ndarray
    action: np.ndarray
    reward: float
    next_observation: np.ndarray
    terminal: bool
    success: bool


@dataclass(frozen=True)
class NormalizationStats:
    """Per-dimension action shift/scale and the reward scale."""

    action_shift: np.ndarray
    action_scale: np.ndarray
    reward_scale: float

    def normalize_action(self, a: np.ndarray) -> np.ndarray:
        return (np.asarray(a, dtype=float) - self.action_shift) / self.action_scale

    def denormalize_action(self, a: np.ndarray) -> np.ndarray:
        return np.asarray(a, dtype=float) * self.action_scale + self.action_shift

    @staticmethod
    def identity() -> "NormalizationStats":
        return NormalizationStats(
            action_shift=np.zeros(ACTION_DIM),
            action_scale=np.ones(ACTION_DIM),
            reward_scale=1.0,
        )

    def to_dict(self) -> dict:
        return {
            "action_shift": self.action_shift.tolist(),
            "action_scale": self.action_scale.tolist(),
            "reward_scale": self.reward_scale,
        }

    @staticmethod
    def from_dict(d: dict) -> "NormalizationStats":
        return NormalizationStats(
            action_shift=np.asarray(d["action_shift"], dtype=float),
            action_scale=np.asarray(d["action_scale"], dtype=float),
            reward_scale=float(d["reward_scale"]),
        )


@dataclass(frozen=True)
class OfflineDataset:
    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_observations: np.ndarray
    terminals: np.ndarray
    successes: np.ndarray
    episode_starts: np.ndarray
    stats: NormalizationStats | None = None

    def __len__(self) -> int:
        return self.observations.shape[0]

    @property
    def n_episodes(self) -> int:
        return len(self.episode_starts)

    def transition(self, i: int) -> Transition:
        return Transition(
            observation=self.observations[i].copy(),
            action=self.actions[i].copy(),
            reward=float(self.rewards[i]),
            next_observation=self.next_observations[i].copy(),
            terminal=bool(self.terminals[i]),
            success=bool(self.successes[i]),
        )

    def episode_slices(self) -> list:
        bounds = list(self.episode_starts) + [len(self)]
        return [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]

    def checksum(self) -> str:
        h = hashlib.sha256()
        for arr in (
            self.observations,
            self.actions,
            self.rewards,
            self.next_observations,
            self.terminals,
            self.successes,
        ):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()


class ScriptedSteeringPolicy:
    """Proportional steering toward the goal with exploration noise.

    The bias pattern (-,+,+,-) scaled by the clipped deflection error turns
    the gait; the wave always travels so the robot crawls forward. Noise is
    zero-mean Gaussian on all five action components, clipped back into the
    action box.
    """

    def __init__(self, gain: float = 3.0, noise_std: float = 0.1):
        self.gain = gain
        self.noise_std = noise_std

    def __call__(self, obs_vec: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        delta = np.clip(self.gain * obs_vec[2], -1.0, 1.0)
        bias = 0.5 + 0.5 * delta * STEER_PATTERN
        action = np.concatenate([bias, [1.0]])
        if self.noise_std > 0:
            action = action + rng.normal(0.0, self.noise_std, ACTION_DIM)
        action[:4] = np.clip(action[:4], 0.0, 1.0)
        action[4] = np.clip(action[4], -1.0, 1.0)
        return action


class RandomPolicy:
    """Uniform actions over the action box."""

    def __call__(self, obs_vec: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return np.concatenate([rng.uniform(0, 1, 4), rng.uniform(-1, 1, 1)])


class MixedBehaviorPolicy:
    """Scripted controller with a fraction of fully random episodes.

    The mode is drawn once per episode via ``begin_episode``.
    """

    def __init__(self, gain: float = 3.0, noise_std: float = 0.1, random_fraction: float = 0.1):
        self.scripted = ScriptedSteeringPolicy(gain=gain, noise_std=noise_std)
        self.random = RandomPolicy()
        self.random_fraction = random_fraction
        self._active = self.scripted

    def begin_episode(self, rng: np.random.Generator) -> None:
        use_random = rng.uniform() < self.random_fraction
        self._active = self.random if use_random else self.scripted

    def __call__(self, obs_vec: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self._active(obs_vec, rng)


def collect(behavior_policy, env: SnakeEnv, n_episodes: int, seed: int) -> OfflineDataset:
    """Roll out ``n_episodes`` episodes and record every transition.

    Deterministic under ``seed``: each episode gets an independent child
    seed for goal sampling and policy noise, and episodes are stored in
    order.
    """
    if n_episodes <= 0:
        raise ContractError("n_episodes must be positive")
    obs_rows, act_rows, rew_rows, next_rows = [], [], [], []
    term_rows, succ_rows, starts = [], [], []
    children = np.random.SeedSequence(seed).spawn(n_episodes)
    count = 0
    for ep, child in enumerate(children):
        rng = np.random.default_rng(child)
        if hasattr(behavior_policy, "begin_episode"):
            behavior_policy.begin_episode(rng)
        obs, _ = env.reset(seed=rng)
        starts.append(count)
        done = False
        while not done:
            vec = obs.vector()
            action = np.asarray(behavior_policy(vec, rng), dtype=float)
            if not np.all(np.isfinite(action)):
                raise DataError(f"behavior policy emitted non-finite action in episode {ep}")
            obs, reward, done, success = env.step(action)
            obs_rows.append(vec)
            act_rows.append(action)
            rew_rows.append(reward)
            next_rows.append(obs.vector())
            term_rows.append(done)
            succ_rows.append(success)
            count += 1
    return OfflineDataset(
        observations=np.asarray(obs_rows),
        actions=np.asarray(act_rows),
        rewards=np.asarray(rew_rows),
        next_observations=np.asarray(next_rows),
        terminals=np.asarray(term_rows, dtype=float),
        successes=np.asarray(succ_rows, dtype=float),
        episode_starts=np.asarray(starts, dtype=np.int64),
    )


def normalize(dataset: OfflineDataset) -> OfflineDataset:
    """Zero-mean unit-variance actions and range-scaled rewards.

    Per-dimension action variance is floored at 1e-8 so constant
    dimensions map to zero instead of blowing up. Rewards are divided by
    their max-min span. Stats are stored on the result so actions can be
    mapped back at evaluation time.
    """
    if len(dataset) == 0:
        raise ContractError("cannot normalize an empty dataset")
    if dataset.stats is not None:
        raise ContractError("dataset is already normalized")
    shift = dataset.actions.mean(axis=0)
    scale = np.sqrt(np.maximum(dataset.actions.var(axis=0), _VARIANCE_FLOOR))
    span = float(dataset.rewards.max() - dataset.rewards.min())
    reward_scale = max(span, _VARIANCE_FLOOR)
    stats = NormalizationStats(
        action_shift=shift, action_scale=scale, reward_scale=reward_scale
    )
    return replace(
        dataset,
        actions=(dataset.actions - shift) / scale,
        rewards=dataset.rewards / reward_scale,
        stats=stats,
    )


def sample_batch(
    dataset: OfflineDataset, batch_size: int, rng: np.random.Generator
) -> dict:
    """Uniform with-replacement minibatch as a dict of array views."""
    if batch_size > len(dataset):
        raise ContractError(
            f"batch_size {batch_size} exceeds dataset length {len(dataset)}"
        )
    idx = rng.integers(0, len(dataset), size=batch_size)
    return {
        "observations": dataset.observations[idx],
        "actions": dataset.actions[idx],
        "rewards": dataset.rewards[idx],
        "next_observations": dataset.next_observations[idx],
        "terminals": dataset.terminals[idx],
        "successes": dataset.successes[idx],
    }


def save(dataset: OfflineDataset, path) -> None:
    """Write the dataset container; see the module docstring for layout."""
    arrays = [
        dataset.observations,
        dataset.actions,
        dataset.rewards,
        dataset.next_observations,
        dataset.terminals,
        dataset.successes,
    ]
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    header = {
        "version": _VERSION,
        "n_transitions": len(dataset),
        "observation_dim": OBSERVATION_DIM,
        "action_dim": ACTION_DIM,
        "episode_starts": dataset.episode_starts.tolist(),
        "stats": dataset.stats.to_dict() if dataset.stats else None,
        "checksum": hashlib.sha256(payload).hexdigest(),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(np.uint32(_VERSION).tobytes())
        fh.write(np.uint64(len(blob)).tobytes())
        fh.write(blob)
        fh.write(payload)


def load(path) -> OfflineDataset:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16 or raw[:4] != _MAGIC:
        raise FormatError(f"{path}: not a dataset file")
    version = int(np.frombuffer(raw[4:8], dtype="<u4")[0])
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    hlen = int(np.frombuffer(raw[8:16], dtype="<u8")[0])
    if len(raw) < 16 + hlen:
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(raw[16 : 16 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt header") from exc
    n = int(header["n_transitions"])
    obs_dim = int(header["observation_dim"])
    act_dim = int(header["action_dim"])
    payload = raw[16 + hlen :]
    expected = n * (2 * obs_dim + act_dim + 3)
    if len(payload) != expected * 8:
        raise FormatError(f"{path}: truncated payload")
    if hashlib.sha256(payload).hexdigest() != header["checksum"]:
        raise FormatError(f"{path}: checksum mismatch")
    flat = np.frombuffer(payload, dtype="<f8")
    sizes = [n * obs_dim, n * act_dim, n, n * obs_dim, n, n]
    offsets = np.cumsum([0] + sizes)
    parts = [
        flat[offsets[i] : offsets[i + 1]].astype(float) for i in range(len(sizes))
    ]
    stats = header.get("stats")
    return OfflineDataset(
        observations=parts[0].reshape(n, obs_dim),
        actions=parts[1].reshape(n, act_dim),
        rewards=parts[2],
        next_observations=parts[3].reshape(n, obs_dim),
        terminals=parts[4],
        successes=parts[5],
        episode_starts=np.asarray(header["episode_starts"], dtype=np.int64),
        stats=NormalizationStats.from_dict(stats) if stats else None,
    )


def export_csv(dataset: OfflineDataset, path) -> None:
    """One transition per row with named columns, for inspection."""
    obs_names = [f"obs_{i}" for i in range(OBSERVATION_DIM)]
    act_names = [f"act_{i}" for i in range(ACTION_DIM)]
    next_names = [f"next_obs_{i}" for i in range(OBSERVATION_DIM)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["episode"] + obs_names + act_names + ["reward"] + next_names
            + ["terminal", "success"]
        )
        for ep, sl in enumerate(dataset.episode_slices()):
            for i in range(sl.start, sl.stop):
                writer.writerow(
                    [ep]
                    + list(dataset.observations[i])
                    + list(dataset.actions[i])
                    + [dataset.rewards[i]]
                    + list(dataset.next_observations[i])
                    + [int(dataset.terminals[i]), int(dataset.successes[i])]
                )
