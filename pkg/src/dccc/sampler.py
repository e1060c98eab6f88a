"""P x K batch sampling over pseudo-labels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dccc.clustering import PseudoLabeling
from dccc.errors import ConfigError, DegenerateEpochError


@dataclass(frozen=True)
class PkConfig:
    P: int = 8
    K: int = 4

    def __post_init__(self) -> None:
        if self.P < 1 or self.K < 1:
            raise ConfigError(f"P and K must be >= 1, got P={self.P}, K={self.K}")

    @property
    def batch_size(self) -> int:
        return self.P * self.K


def pk_sample(
    labels: PseudoLabeling, cfg: PkConfig, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Return (indices, pseudo_labels), both of length P*K, grouped by cluster.

    Clusters smaller than K are filled by sampling with replacement.
    """
    if labels.num_clusters < cfg.P:
        raise DegenerateEpochError(
            f"{labels.num_clusters} clusters available, {cfg.P} needed per batch"
        )
    chosen = rng.choice(labels.num_clusters, size=cfg.P, replace=False)
    indices = []
    for c in chosen:
        members = labels.members(int(c))
        indices.append(rng.choice(members, size=cfg.K, replace=members.size < cfg.K))
    return np.concatenate(indices), np.repeat(chosen, cfg.K)
