"""Distribution-shift-aware IQL: count-based penalties on IQL's updates.

Builds a visitation counter over the dataset once, then runs the IQL
update with a per-sample penalty subtracted inside the Bellman target and
from the advantage used for policy extraction. The robustness coefficient
decays linearly to zero over the training horizon, so late training
anneals back to vanilla IQL. With ``alpha0 = 0`` the whole run is exactly
vanilla IQL, checkpoint bits included.

Penalties are evaluated only at dataset (s, a) pairs (the batch rows),
never at policy samples. Both penalty placements can be disabled
independently for ablations.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from .iql import IQLAgent
from .penalties import (
    PENALTY_KINDS,
    PenaltyConfig,
    alpha_at,
    build_counter,
    penalty_from_counts,
)


class DisaIqlAgent(IQLAgent):
    algorithm = "disa_iql"

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
        penalty_kind="kl",
        alpha0=1.0,
        t_max=None,
        bin_width=0.25,
        penalty_in_target=True,
        penalty_in_advantage=True,
    ):
        super().__init__(
            hidden_sizes=hidden_sizes,
            batch_size=batch_size,
            n_steps=n_steps,
            policy_lr=policy_lr,
            q_lr=q_lr,
            v_lr=v_lr,
            discount=discount,
            expectile=expectile,
            temperature=temperature,
            max_weight=max_weight,
            target_mix=target_mix,
            eval_every=eval_every,
            n_eval_episodes=n_eval_episodes,
            seed=seed,
        )
        if penalty_kind not in PENALTY_KINDS:
            raise ConfigError(f"unknown penalty kind {penalty_kind!r}")
        self.penalty_kind = penalty_kind
        self.alpha0 = alpha0
        self.t_max = t_max
        self.bin_width = bin_width
        self.penalty_in_target = penalty_in_target
        self.penalty_in_advantage = penalty_in_advantage

    def _penalty_config(self) -> PenaltyConfig:
        horizon = self.t_max if self.t_max is not None else self.n_steps
        return PenaltyConfig(kind=self.penalty_kind, alpha0=self.alpha0, t_max=horizon)

    def _prepare(self, dataset) -> None:
        # Counts are built once from the dataset and never touched by
        # training (offline contract).
        self.counter_ = build_counter(dataset, bin_width=self.bin_width)
        self._penalty_cfg = self._penalty_config()
        self._alpha_t = self._penalty_cfg.alpha0

    def _penalties(self, batch: dict, t: int) -> np.ndarray:
        self._alpha_t = alpha_at(t, self._penalty_cfg)
        counts = self.counter_.counts(batch["observations"], batch["actions"])
        return penalty_from_counts(counts, self.penalty_kind, self._alpha_t)

    def update(self, batch: dict, penalty_vec: np.ndarray | None = None) -> dict:
        if penalty_vec is not None and not (
            self.penalty_in_target and self.penalty_in_advantage
        ):
            return self._update_split_penalty(batch, penalty_vec)
        return super().update(batch, penalty_vec)

    def _update_split_penalty(self, batch, penalty_vec):
        # Ablation path: apply the penalty on only one side.
        target_pen = penalty_vec if self.penalty_in_target else np.zeros_like(penalty_vec)
        adv_pen = penalty_vec if self.penalty_in_advantage else np.zeros_like(penalty_vec)
        return self._update_with(batch, target_pen, adv_pen)

    def _update_with(self, batch, target_pen, adv_pen):
        # Mirrors IQLAgent.update with independent penalty vectors; kept
        # separate so the main path stays byte-equivalent to vanilla IQL.
        from .. import autograd as ag
        from ..autograd import Tensor
        from ..nn import adam_step, expectile_loss

        obs = batch["observations"]
        next_obs = batch["next_observations"]
        sa = np.concatenate([obs, batch["actions"]], axis=1)
        rew = batch["rewards"][:, None]
        not_done = (1.0 - batch["terminals"])[:, None]

        q_min = np.minimum(
            self.q1_target_.forward_numpy(sa), self.q2_target_.forward_numpy(sa)
        )
        v_params = self.v_.params()

        def v_loss_fn():
            residual = ag.sub(Tensor(q_min), self.v_.forward(obs))
            return ag.tmean(expectile_loss(residual, self.expectile))

        v_loss, v_grads = self._grads(v_loss_fn, v_params, clear=v_params)
        adam_step(self._v_opt, v_params, v_grads)

        v_now = self.v_.forward_numpy(obs)
        advantage = (q_min - v_now) - adv_pen[:, None]
        weights = np.minimum(np.exp(advantage / self.temperature), self.max_weight)
        z_data = self._z_targets(batch, self._stats)
        p_params = self.policy_head_.params()

        def pi_loss_fn():
            logp = self.policy_head_.log_prob(obs, z_data)
            return ag.tmean(ag.mul(logp, weights[:, 0])) * -1.0

        pi_loss, pi_grads = self._grads(pi_loss_fn, p_params, clear=p_params)
        adam_step(self._policy_opt, p_params, pi_grads)

        v_next = self.v_.forward_numpy(next_obs)
        target = rew + self.discount * not_done * (v_next - target_pen[:, None])

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

    def _log_extra(self, t: int) -> dict:
        return {"alpha_t": self._alpha_t}
