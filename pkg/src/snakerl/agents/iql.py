"""Implicit Q-learning with expectile value regression and AWR extraction.

The value net is regressed toward the (double-Q minimum) target-network
values with the asymmetric expectile loss; Q nets bootstrap through the
value net only, so unseen actions are never queried; the policy maximizes
advantage-weighted log-likelihood of dataset actions.

The update accepts an optional per-sample penalty vector. Vanilla IQL
passes zeros, the distribution-shift-aware subclass supplies count-based
penalties; both therefore run the identical code path, which is what makes
the zero-penalty equivalence exact.
"""

from __future__ import annotations

import numpy as np

from .. import autograd as ag
from ..autograd import Tensor
from ..env import ACTION_DIM, OBSERVATION_DIM
from ..nn import (
    FlatAdam,
    FlatParams,
    FlatSoftTarget,
    GaussianPolicyHead,
    Mlp,
    expectile_loss,
)
from .base import OfflineAgent


class IQLAgent(OfflineAgent):
    algorithm = "iql"

    def __init__(
        self,
        hidden_sizes=(256, 256),
        batch_size=256,
        n_steps=200_000,
        policy_lr=3e-4,
        q_lr=3e-4,
        v_lr=3e-4,
        discount=0.99,
        expectile=0.3,
        temperature=3.0,
        max_weight=100.0,
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
        self.v_lr = v_lr
        self.discount = discount
        self.expectile = expectile
        self.temperature = temperature
        self.max_weight = max_weight
        self.target_mix = target_mix
        self.eval_every = eval_every
        self.n_eval_episodes = n_eval_episodes
        self.seed = seed

    # -- construction --------------------------------------------------------

    def _build(self):
        seq = np.random.SeedSequence([self.seed, 0x2])
        rngs = [np.random.default_rng(s) for s in seq.spawn(4)]
        sa_dim = OBSERVATION_DIM + ACTION_DIM
        sizes = [sa_dim, *self.hidden_sizes, 1]
        self.q1_ = Mlp(sizes, rngs[0])
        self.q2_ = Mlp(sizes, rngs[1])
        self.q1_target_ = Mlp(sizes, rngs[0])
        self.q2_target_ = Mlp(sizes, rngs[1])
        self.q1_target_.copy_from(self.q1_)
        self.q2_target_.copy_from(self.q2_)
        self.v_ = Mlp([OBSERVATION_DIM, *self.hidden_sizes, 1], rngs[2])
        self.policy_head_ = GaussianPolicyHead(
            OBSERVATION_DIM, ACTION_DIM, self.hidden_sizes, rngs[3]
        )
        self._q_params = self.q1_.params() + self.q2_.params()
        self._q_opt = adam_init(self._q_params, lr=self.q_lr)
        self._v_opt = adam_init(self.v_.params(), lr=self.v_lr)
        self._policy_opt = adam_init(self.policy_head_.params(), lr=self.policy_lr)

    def _value_networks(self) -> dict:
        return {
            "q1": self.q1_,
            "q2": self.q2_,
            "q1_target": self.q1_target_,
            "q2_target": self.q2_target_,
            "v": self.v_,
        }

    def _all_trained_params(self):
        return (
            self._q_params
            + self.v_.params()
            + self.policy_head_.params()
            + self.q1_target_.params()
            + self.q2_target_.params()
        )

    # -- update --------------------------------------------------------------

    def update(self, batch: dict, penalty_vec: np.ndarray | None = None) -> dict:
        """One IQL step; ``penalty_vec`` shifts Bellman targets and
        advantages downward per sample (zeros = vanilla IQL)."""
        obs = batch["observations"]
        next_obs = batch["next_observations"]
        sa = np.concatenate([obs, batch["actions"]], axis=1)
        rew = batch["rewards"][:, None]
        not_done = (1.0 - batch["terminals"])[:, None]
        if penalty_vec is None:
            penalty_vec = np.zeros(len(rew))
        pen = penalty_vec[:, None]

        # value step: expectile regression toward min of target critics
        q_min = np.minimum(
            self.q1_target_.forward_numpy(sa), self.q2_target_.forward_numpy(sa)
        )
        v_params = self.v_.params()

        def v_loss_fn():
            residual = ag.sub(Tensor(q_min), self.v_.forward(obs))
            return ag.tmean(expectile_loss(residual, self.expectile))

        v_loss, v_grads = self._grads(v_loss_fn, v_params, clear=v_params)
        adam_step(self._v_opt, v_params, v_grads)

        # policy step: advantage-weighted regression on dataset actions
        v_now = self.v_.forward_numpy(obs)
        advantage = (q_min - v_now) - pen
        weights = np.minimum(
            np.exp(advantage / self.temperature), self.max_weight
        )
        z_data = self._z_targets(batch, self._stats)
        p_params = self.policy_head_.params()

        def pi_loss_fn():
            logp = self.policy_head_.log_prob(obs, z_data)
            return ag.tmean(ag.mul(logp, weights[:, 0])) * -1.0

        pi_loss, pi_grads = self._grads(pi_loss_fn, p_params, clear=p_params)
        adam_step(self._policy_opt, p_params, pi_grads)

        # critic step: bootstrap through the fresh value net, penalty inside
        # the (1 - d)-masked bracket
        v_next = self.v_.forward_numpy(next_obs)
        target = rew + self.discount * not_done * (v_next - pen)

        def q_loss_fn():
            e1 = ag.sub(self.q1_.forward(sa), target)
            e2 = ag.sub(self.q2_.forward(sa), target)
            return ag.add(ag.tmean(ag.power(e1, 2.0)), ag.tmean(ag.power(e2, 2.0)))

        q_loss, q_grads = self._grads(q_loss_fn, self._q_params, clear=self._q_params)
        adam_step(self._q_opt, self._q_params, q_grads)

        self.q1_target_.soft_update_from(self.q1_, self.target_mix)
        self.q2_target_.soft_update_from(self.q2_, self.target_mix)

        return {
            "value_loss": float(v_loss.data),
            "q_loss": float(q_loss.data),
            "policy_loss": float(pi_loss.data),
        }

    def _penalties(self, batch: dict, t: int) -> np.ndarray | None:
        return None

    def _log_extra(self, t: int) -> dict:
        return {}

    def fit(self, dataset, eval_env_factory=None):
        dataset = self._begin_fit(dataset)
        self._stats = dataset.stats
        self._build()
        self._prepare(dataset)
        losses = {}
        for t in range(1, self.n_steps + 1):
            batch = self._batch(dataset)
            losses = self.update(batch, self._penalties(batch, t))
            if self.eval_every and t % self.eval_every == 0:
                row = {"step": t, **losses, **self._log_extra(t)}
                if eval_env_factory is not None:
                    ret, succ = self._evaluate_policy(
                        eval_env_factory, self.n_eval_episodes, self.seed + t
                    )
                    row.update(eval_return=ret, eval_success=succ)
                self.log_.append(row)
        self._finish_fit(self._all_trained_params())
        return self

    def _prepare(self, dataset) -> None:
        pass
