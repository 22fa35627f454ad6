"""Conservative Q-learning with a sampled-action Q-value regularizer.

The critic loss adds alpha * (E_{a~pi}[Q(s,a)] - E_data[Q(s,a)]) on top of
the Bellman error, estimated with a fixed number of reparameterized policy
samples per state. The actor ascends the double-Q minimum at its own
(squashed, re-normalized) samples, with gradients flowing through the
action input of the frozen critics.
"""

from __future__ import annotations

import numpy as np

from .. import autograd as ag
from ..autograd import Tensor
from ..env import ACTION_DIM, OBSERVATION_DIM
from ..nn import (
    GaussianPolicyHead,
    Mlp,
    adam_init,
    adam_step,
    squash_action,
    squash_graph,
)
from .base import OfflineAgent


class CQLAgent(OfflineAgent):
    algorithm = "cql"

    def __init__(
        self,
        hidden_sizes=(256, 256),
        batch_size=256,
        n_steps=200_000,
        policy_lr=3e-4,
        q_lr=3e-4,
        discount=0.99,
        cql_alpha=1.0,
        n_sampled_actions=10,
        target_mix=0.005,
        eval_every=5_000,
        n_eval_episodes=10,
        seed=0,
    ):
        self.hidden_sizes = hidden_sizes
        self.batch_size = batch_size
        self.n_steps = n_steps
        self.policy_lr = policy_lr
        self.q_lr = q_lr
        self.discount = discount
        self.cql_alpha = cql_alpha
        self.n_sampled_actions = n_sampled_actions
        self.target_mix = target_mix
        self.eval_every = eval_every
        self.n_eval_episodes = n_eval_episodes
        self.seed = seed

    def _build(self):
        seq = np.random.SeedSequence([self.seed, 0x3])
        rngs = [np.random.default_rng(s) for s in seq.spawn(3)]
        sa_dim = OBSERVATION_DIM + ACTION_DIM
        sizes = [sa_dim, *self.hidden_sizes, 1]
        self.q1_ = Mlp(sizes, rngs[0])
        self.q2_ = Mlp(sizes, rngs[1])
        self.q1_target_ = Mlp(sizes, rngs[0])
        self.q2_target_ = Mlp(sizes, rngs[1])
        self.q1_target_.copy_from(self.q1_)
        self.q2_target_.copy_from(self.q2_)
        self.policy_head_ = GaussianPolicyHead(
            OBSERVATION_DIM, ACTION_DIM, self.hidden_sizes, rngs[2]
        )
        self._q_params = self.q1_.params() + self.q2_.params()
        self._q_opt = adam_init(self._q_params, lr=self.q_lr)
        self._policy_opt = adam_init(self.policy_head_.params(), lr=self.policy_lr)
        self._noise_rng = np.random.default_rng(
            np.random.SeedSequence([self.seed, 0xCC1])
        )

    def _value_networks(self) -> dict:
        return {
            "q1": self.q1_,
            "q2": self.q2_,
            "q1_target": self.q1_target_,
            "q2_target": self.q2_target_,
        }

    def _all_trained_params(self):
        return (
            self._q_params
            + self.policy_head_.params()
            + self.q1_target_.params()
            + self.q2_target_.params()
        )

    def _sampled_normalized_actions(self, obs: np.ndarray, n: int) -> np.ndarray:
        """Reparameterized policy samples mapped to normalized action space,
        detached; shape (len(obs)*n, act_dim)."""
        mean = self.policy_head_.mean_net.forward_numpy(obs)
        std = self.policy_head_.std()
        noise = self._noise_rng.standard_normal((len(obs), n, ACTION_DIM))
        z = mean[:, None, :] + std * noise
        raw = squash_action(z.reshape(-1, ACTION_DIM))
        return self._stats.normalize_action(raw)

    def update(self, batch: dict) -> dict:
        """One critic + actor step; returns bellman and conservative parts."""
        obs = batch["observations"]
        next_obs = batch["next_observations"]
        sa = np.concatenate([obs, batch["actions"]], axis=1)
        rew = batch["rewards"][:, None]
        not_done = (1.0 - batch["terminals"])[:, None]

        # Bellman target through the policy's deterministic next action.
        next_act = self._normalized_policy_action(next_obs, self._stats)
        nsa = np.concatenate([next_obs, next_act], axis=1)
        q_next = np.minimum(
            self.q1_target_.forward_numpy(nsa), self.q2_target_.forward_numpy(nsa)
        )
        target = rew + self.discount * not_done * q_next

        sampled = self._sampled_normalized_actions(obs, self.n_sampled_actions)
        sa_sampled = np.concatenate(
            [np.repeat(obs, self.n_sampled_actions, axis=0), sampled], axis=1
        )

        parts = {}

        def q_loss_fn():
            q1d = self.q1_.forward(sa)
            q2d = self.q2_.forward(sa)
            bellman = ag.add(
                ag.tmean(ag.power(ag.sub(q1d, target), 2.0)),
                ag.tmean(ag.power(ag.sub(q2d, target), 2.0)),
            )
            gap1 = ag.sub(ag.tmean(self.q1_.forward(sa_sampled)), ag.tmean(q1d))
            gap2 = ag.sub(ag.tmean(self.q2_.forward(sa_sampled)), ag.tmean(q2d))
            conservative = ag.add(gap1, gap2)
            parts["bellman"] = float(bellman.data)
            parts["conservative"] = float(conservative.data)
            return ag.add(bellman, ag.mul(conservative, self.cql_alpha))

        _, q_grads = self._grads(q_loss_fn, self._q_params, clear=self._q_params)
        adam_step(self._q_opt, self._q_params, q_grads)

        # Actor: ascend min-Q at one reparameterized sample per state, with
        # the critics held constant so gradients reach only the policy.
        noise = self._noise_rng.standard_normal((len(obs), ACTION_DIM))
        p_params = self.policy_head_.params()
        for p in self._q_params:
            p.requires_grad = False
        try:

            def pi_loss_fn():
                mean = self.policy_head_.mean_net.forward(obs)
                std = self.policy_head_.std()
                z = ag.add(mean, std * noise)
                raw = squash_graph(z)
                nrm = ag.mul(
                    ag.sub(raw, self._stats.action_shift),
                    1.0 / self._stats.action_scale,
                )
                x = ag.concat(Tensor(obs), nrm, axis=1)
                q = ag.minimum(self.q1_.forward(x), self.q2_.forward(x))
                return ag.tmean(q) * -1.0

            pi_loss, pi_grads = self._grads(pi_loss_fn, p_params, clear=p_params)
        finally:
            for p in self._q_params:
                p.requires_grad = True
        adam_step(self._policy_opt, p_params, pi_grads)

        self.q1_target_.soft_update_from(self.q1_, self.target_mix)
        self.q2_target_.soft_update_from(self.q2_, self.target_mix)

        return {
            "bellman_loss": parts["bellman"],
            "conservative_loss": parts["conservative"],
            "policy_loss": float(pi_loss.data),
        }

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
        self._finish_fit(self._all_trained_params())
        return self
