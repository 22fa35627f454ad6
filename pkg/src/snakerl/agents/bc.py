"""Behavior cloning: maximum-likelihood imitation of the dataset actions."""

from __future__ import annotations

import numpy as np

from .. import autograd as ag
from ..env import ACTION_DIM, OBSERVATION_DIM
from ..nn import GaussianPolicyHead, adam_init, adam_step
from .base import OfflineAgent


class BCAgent(OfflineAgent):
    """Gaussian-policy behavior cloning.

    One gradient step maximizes the mean log-likelihood of the batch's
    (pre-squash) actions; there is no value function.
    """

    algorithm = "bc"

    def __init__(
        self,
        hidden_sizes=(256, 256),
        batch_size=256,
        n_steps=200_000,
        policy_lr=3e-4,
        eval_every=5_000,
        n_eval_episodes=10,
        seed=0,
    ):
        self.hidden_sizes = hidden_sizes
        self.batch_size = batch_size
        self.n_steps = n_steps
        self.policy_lr = policy_lr
        self.eval_every = eval_every
        self.n_eval_episodes = n_eval_episodes
        self.seed = seed

    def _build(self):
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0x1]))
        self.policy_head_ = GaussianPolicyHead(
            OBSERVATION_DIM, ACTION_DIM, self.hidden_sizes, rng
        )
        self._policy_opt = adam_init(self.policy_head_.params(), lr=self.policy_lr)

    def update(self, batch: dict) -> dict:
        """One ascent step on the batch log-likelihood; returns the NLL."""
        z_data = self._z_targets(batch, self._stats)
        obs = batch["observations"]
        params = self.policy_head_.params()

        def loss_fn():
            return ag.tmean(self.policy_head_.log_prob(obs, z_data)) * -1.0

        loss, grads = self._grads(loss_fn, params, clear=params)
        adam_step(self._policy_opt, params, grads)
        return {"policy_loss": float(loss.data)}

    def fit(self, dataset, eval_env_factory=None):
        dataset = self._begin_fit(dataset)
        self._stats = dataset.stats
        self._build()
        losses = {}
        for t in range(1, self.n_steps + 1):
            losses = self.update(self._batch(dataset))
            if self.eval_every and t % self.eval_every == 0:
                row = {"step": t, **losses}
                if eval_env_factory is not None:
                    ret, succ = self._evaluate_policy(
                        eval_env_factory, self.n_eval_episodes, self.seed + t
                    )
                    row.update(eval_return=ret, eval_success=succ)
                self.log_.append(row)
        self._finish_fit(self.policy_head_.params())
        return self
