"""Visitation counting and count-based robustness penalties.

State-action pairs are discretized on a uniform grid over the joint
16-dimensional (observation, normalized action) space and counted in a
sparse hash map. Rarely visited cells get large penalties, which the
distribution-shift-aware trainer subtracts from Bellman targets and
advantages. Four penalty shapes are available, each the radius term of a
different uncertainty set:

    wasserstein        alpha / sqrt(N + 1)
    kl                 alpha * sqrt(2 / (N + 1))
    chi_square         alpha / (N + 1)
    total_variation    alpha / (N + 1)

The chi-square and total-variation forms coincide as specified. The
robustness coefficient decays linearly to zero over the training horizon.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dataset import OfflineDataset
from ..errors import ConfigError, DataError, DomainError

PENALTY_KINDS = ("wasserstein", "kl", "chi_square", "total_variation")


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty shape, initial coefficient, and decay horizon."""

    kind: str = "kl"
    alpha0: float = 1.0
    t_max: int = 200_000

    def __post_init__(self):
        if self.kind not in PENALTY_KINDS:
            raise ConfigError(f"unknown penalty kind {self.kind!r}")
        if self.alpha0 < 0:
            raise ConfigError("alpha0 must be >= 0")
        if self.t_max <= 0:
            raise ConfigError("t_max must be > 0")


def alpha_at(t: int, cfg: PenaltyConfig) -> float:
    """Linearly decayed robustness coefficient, clamped at zero."""
    if t < 0:
        raise DomainError(f"gradient step must be >= 0, got {t}")
    return cfg.alpha0 * max(0.0, 1.0 - t / cfg.t_max)


class VisitationCounter:
    """Sparse visit counts over uniform bins of the joint (s, a) space."""

    def __init__(self, bin_width: float = 0.25, dim: int = 16):
        if not bin_width > 0:
            raise ConfigError("bin_width must be positive")
        self.bin_width = bin_width
        self.dim = dim
        self._counts: dict = {}
        self.total = 0

    def _keys(self, obs: np.ndarray, act: np.ndarray) -> list:
        joint = np.concatenate([obs, act], axis=1)
        if joint.shape[1] != self.dim:
            raise DataError(
                f"joint dimension {joint.shape[1]} does not match counter ({self.dim})"
            )
        if not np.all(np.isfinite(joint)):
            idx = int(np.where(~np.all(np.isfinite(joint), axis=1))[0][0])
            raise DataError(f"non-finite state-action pair at index {idx}")
        cells = np.floor(joint / self.bin_width).astype(np.int64)
        return [tuple(row) for row in cells]

    def insert(self, obs: np.ndarray, act: np.ndarray) -> None:
        for key in self._keys(np.atleast_2d(obs), np.atleast_2d(act)):
            self._counts[key] = self._counts.get(key, 0) + 1
            self.total += 1

    def counts(self, obs: np.ndarray, act: np.ndarray) -> np.ndarray:
        """Visit count per row; unseen cells count 0."""
        get = self._counts.get
        return np.array(
            [get(k, 0) for k in self._keys(np.atleast_2d(obs), np.atleast_2d(act))],
            dtype=float,
        )

    @property
    def n_cells(self) -> int:
        return len(self._counts)


def build_counter(dataset: OfflineDataset, bin_width: float = 0.25) -> VisitationCounter:
    """Count every dataset transition's (observation, action) cell once."""
    counter = VisitationCounter(
        bin_width=bin_width,
        dim=dataset.observations.shape[1] + dataset.actions.shape[1],
    )
    counter.insert(dataset.observations, dataset.actions)
    return counter


def penalty_from_counts(counts: np.ndarray, kind: str, alpha: float) -> np.ndarray:
    """Penalty values for given visit counts; vectorized and >= 0."""
    if alpha < 0:
        raise DomainError("alpha must be >= 0")
    if kind not in PENALTY_KINDS:
        raise ConfigError(f"unknown penalty kind {kind!r}")
    n1 = np.asarray(counts, dtype=float) + 1.0
    if kind == "wasserstein":
        return alpha / np.sqrt(n1)
    if kind == "kl":
        return alpha * np.sqrt(2.0 / n1)
    return alpha / n1


def penalty(
    counter: VisitationCounter, obs: np.ndarray, act: np.ndarray, kind: str, alpha: float
) -> np.ndarray:
    """Penalty at the given state-action pairs, read from the counter."""
    return penalty_from_counts(counter.counts(obs, act), kind, alpha)
