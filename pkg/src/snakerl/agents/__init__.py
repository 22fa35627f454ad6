"""Offline RL estimators: BC, CQL, IQL, and distribution-shift-aware IQL."""

from __future__ import annotations

from ..errors import ConfigError
from .base import OfflineAgent, TrainedPolicy, check_observation_array
from .bc import BCAgent
from .cql import CQLAgent
from .disa import DisaIqlAgent
from .iql import IQLAgent
from .penalties import (
    PENALTY_KINDS,
    PenaltyConfig,
    VisitationCounter,
    alpha_at,
    build_counter,
    penalty,
    penalty_from_counts,
)

ALGORITHMS = {
    "bc": BCAgent,
    "cql": CQLAgent,
    "iql": IQLAgent,
    "disa_iql": DisaIqlAgent,
}


def make_agent(algorithm: str, **params) -> OfflineAgent:
    """Instantiate an agent by tag; unknown keys are rejected upstream."""
    if algorithm not in ALGORITHMS:
        raise ConfigError(
            f"unknown algorithm {algorithm!r}; expected one of {sorted(ALGORITHMS)}"
        )
    return ALGORITHMS[algorithm](**params)


def train(algorithm: str, dataset, eval_env_factory=None, **params):
    """Fit an agent on a normalized dataset; returns (policy, log, agent)."""
    agent = make_agent(algorithm, **params)
    agent.fit(dataset, eval_env_factory=eval_env_factory)
    return agent.policy_, agent.log_, agent


__all__ = [
    "ALGORITHMS",
    "BCAgent",
    "CQLAgent",
    "DisaIqlAgent",
    "IQLAgent",
    "OfflineAgent",
    "PenaltyConfig",
    "PENALTY_KINDS",
    "TrainedPolicy",
    "VisitationCounter",
    "alpha_at",
    "build_counter",
    "check_observation_array",
    "make_agent",
    "penalty",
    "penalty_from_counts",
    "train",
]
