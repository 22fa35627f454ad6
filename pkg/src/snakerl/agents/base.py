"""Shared machinery for the offline RL estimators.

The agents follow the scikit-learn estimator protocol: hyperparameters are
constructor arguments stored verbatim, ``fit`` consumes a normalized
OfflineDataset and sets trailing-underscore attributes, ``predict`` maps
observation rows to raw environment actions. ``get_params`` /
``set_params`` come from ``BaseEstimator``, so the agents compose with
scikit-learn tooling (cloning, grid search over configs).
"""

from __future__ import annotations

import hashlib
import json

import numpy as np
from sklearn.base import BaseEstimator

from ..dataset import NormalizationStats, OfflineDataset, sample_batch
from ..env import ACTION_DIM, OBSERVATION_DIM
from ..errors import ContractError, DimensionError, NumericError
from ..nn import (
    GaussianPolicyHead,
    load_checkpoint,
    params_checksum,
    save_checkpoint,
    squash_action,
    unsquash_action,
)


def check_observation_array(X) -> np.ndarray:
    """Validate and coerce observations to a (n, 11) float array."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != OBSERVATION_DIM:
        raise DimensionError(
            f"observations must have {OBSERVATION_DIM} columns, got shape {X.shape}"
        )
    if not np.all(np.isfinite(X)):
        raise NumericError("observations contain non-finite values")
    return X


def check_fitted(agent, attr: str = "policy_") -> None:
    if not hasattr(agent, attr):
        raise ContractError(
            f"{type(agent).__name__} is not fitted; call fit(dataset) first"
        )


def require_normalized(dataset: OfflineDataset) -> OfflineDataset:
    if dataset.stats is None:
        raise ContractError("dataset must be normalized before training")
    return dataset


def config_hash(params: dict) -> str:
    """Stable hash of an estimator's hyperparameters."""

    def default(o):
        if isinstance(o, tuple):
            return list(o)
        if isinstance(o, (np.integer, np.floating)):
            return o.item()
        raise TypeError(f"unhashable config entry {o!r}")

    blob = json.dumps(params, sort_keys=True, default=default)
    return hashlib.sha256(blob.encode()).hexdigest()


class TrainedPolicy:
    """Deterministic evaluation policy produced by ``fit``.

    Holds the Gaussian head, the dataset normalization stats needed to map
    network outputs into raw environment actions, and provenance fields
    (algorithm tag, config hash, dataset hash).
    """

    def __init__(self, head: GaussianPolicyHead, stats: NormalizationStats, provenance: dict):
        if not provenance.get("algorithm") or not provenance.get("config_hash"):
            raise ContractError("provenance must carry algorithm and config_hash")
        self.head = head
        self.stats = stats
        self.provenance = dict(provenance)

    def act(self, obs_vec: np.ndarray) -> np.ndarray:
        """Squashed-mean action in the raw action box for one observation."""
        return self.head.act(np.asarray(obs_vec, dtype=float))

    def act_batch(self, X: np.ndarray) -> np.ndarray:
        return self.head.act(check_observation_array(X))

    def save(self, path) -> None:
        arrays = {}
        for i, p in enumerate(self.head.mean_net.params()):
            arrays[f"mean_{i}"] = p.data
        arrays["log_std"] = self.head.log_std.data
        arrays["action_shift"] = self.stats.action_shift
        arrays["action_scale"] = self.stats.action_scale
        arrays["reward_scale"] = np.array([self.stats.reward_scale])
        meta = {
            "kind": "policy",
            "layer_sizes": self.head.mean_net.layer_sizes,
            "provenance": self.provenance,
        }
        save_checkpoint(path, arrays, meta)

    @staticmethod
    def load(path) -> "TrainedPolicy":
        arrays, meta = load_checkpoint(path)
        sizes = meta["layer_sizes"]
        head = GaussianPolicyHead(
            sizes[0], sizes[-1], sizes[1:-1], np.random.default_rng(0)
        )
        for i, p in enumerate(head.mean_net.params()):
            p.data = arrays[f"mean_{i}"]
        head.log_std.data = arrays["log_std"]
        stats = NormalizationStats(
            action_shift=arrays["action_shift"],
            action_scale=arrays["action_scale"],
            reward_scale=float(arrays["reward_scale"][0]),
        )
        return TrainedPolicy(head, stats, meta["provenance"])

    def checksum(self) -> str:
        return params_checksum(self.head.params())


class OfflineAgent(BaseEstimator):
    """Base class wiring batches, logging, evaluation, and provenance."""

    algorithm = "base"

    def _rng(self, seed):
        return np.random.default_rng(np.random.SeedSequence(seed))

    def _begin_fit(self, dataset: OfflineDataset):
        dataset = require_normalized(dataset)
        self._dataset_hash = dataset.checksum()
        self._batch_rng = np.random.default_rng(
            np.random.SeedSequence([self.seed, 0x5A17])
        )
        self.log_ = []
        return dataset

    def _provenance(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "config_hash": config_hash(self.get_params()),
            "dataset_hash": self._dataset_hash,
        }

    def _batch(self, dataset: OfflineDataset) -> dict:
        return sample_batch(dataset, self.batch_size, self._batch_rng)

    def _grads(self, loss_fn, params, clear):
        """Backward pass with stale-gradient hygiene across shared graphs."""
        for p in clear:
            p.grad = None
        loss = loss_fn()
        loss.backward()
        if not np.isfinite(loss.data):
            raise NumericError("non-finite training loss")
        grads = [
            p.grad if p.grad is not None else np.zeros_like(p.data) for p in params
        ]
        return loss, grads

    def _z_targets(self, batch: dict, stats: NormalizationStats) -> np.ndarray:
        """Pre-squash regression targets for dataset actions."""
        raw = stats.denormalize_action(batch["actions"])
        return unsquash_action(raw)

    def _normalized_policy_action(self, obs: np.ndarray, stats: NormalizationStats):
        """Squashed-mean action mapped into normalized action space."""
        raw = squash_action(self.policy_head_.mean_net.forward_numpy(obs))
        return stats.normalize_action(raw)

    def _evaluate_policy(self, env_factory, n_episodes: int, seed) -> tuple:
        """Deterministic rollouts on frozen parameters; returns
        (mean return, success rate)."""
        env = env_factory()
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE7A1]))
        returns, successes = [], []
        for _ in range(n_episodes):
            obs, _ = env.reset(seed=rng)
            done, total = False, 0.0
            while not done:
                action = self.policy_head_.act(obs.vector())
                obs, reward, done, success = env.step(action)
                total += reward
            returns.append(total)
            successes.append(float(success))
        return float(np.mean(returns)), float(np.mean(successes))

    def predict(self, X) -> np.ndarray:
        """Raw environment actions (squashed mean) for observation rows."""
        check_fitted(self)
        X = check_observation_array(X)
        return self.policy_.act_batch(X)

    def _finish_fit(self, trained_params) -> None:
        self.policy_ = TrainedPolicy(
            self.policy_head_, self._stats, self._provenance()
        )
        self.params_checksum_ = params_checksum(
            [p.data for p in trained_params]
        )

    def save(self, path) -> None:
        """Full parameter checkpoint (policy plus any value networks)."""
        check_fitted(self)
        arrays, meta = self._checkpoint_payload()
        save_checkpoint(path, arrays, meta)

    def _checkpoint_payload(self):
        arrays = {}
        for i, p in enumerate(self.policy_head_.mean_net.params()):
            arrays[f"policy_mean_{i}"] = p.data
        arrays["policy_log_std"] = self.policy_head_.log_std.data
        for name, net in self._value_networks().items():
            for i, p in enumerate(net.params()):
                arrays[f"{name}_{i}"] = p.data
        arrays["action_shift"] = self._stats.action_shift
        arrays["action_scale"] = self._stats.action_scale
        arrays["reward_scale"] = np.array([self._stats.reward_scale])
        meta = {
            "kind": "agent",
            "algorithm": self.algorithm,
            "layer_sizes": self.policy_head_.mean_net.layer_sizes,
            "provenance": self._provenance(),
        }
        return arrays, meta

    def _value_networks(self) -> dict:
        return {}
