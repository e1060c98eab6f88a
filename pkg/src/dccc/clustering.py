"""DBSCAN over a precomputed distance matrix and the per-epoch eps scheduler."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from dccc.distance import DistanceMatrix
from dccc.errors import ConfigError, ContractError

OUTLIER = -1
SCHEDULER_KINDS = ("step", "linear", "expo")


@dataclass(frozen=True)
class PseudoLabeling:
    assignment: np.ndarray  # (N,), cluster index or OUTLIER
    num_clusters: int

    @property
    def outlier_mask(self) -> np.ndarray:
        return self.assignment == OUTLIER

    @property
    def num_outliers(self) -> int:
        return int(np.count_nonzero(self.outlier_mask))

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == cluster)


@dataclass(frozen=True)
class DbscanParams:
    eps: float
    min_samples: int = 4

    def __post_init__(self) -> None:
        if not self.eps > 0:
            raise ConfigError(f"eps must be > 0, got {self.eps}")
        if self.min_samples < 1:
            raise ConfigError(f"min_samples must be >= 1, got {self.min_samples}")


@dataclass(frozen=True)
class EpsSchedule:
    """Per-epoch DBSCAN radius.

    expo:   eps_begin * decay**epoch
    linear: eps_begin - decrement * epoch
    step:   the linear schedule held constant for ``step_size`` epochs at a time,
            so ``step_size == 1`` is exactly the linear schedule
    All three are clamped from below at ``floor``.
    """

    kind: str = "expo"
    eps_begin: float = 0.7
    decay: float = 1.0
    decrement: float = 0.0
    step_size: int = 1
    floor: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in SCHEDULER_KINDS:
            raise ConfigError(f"scheduler kind must be one of {SCHEDULER_KINDS}, got {self.kind!r}")
        if not self.eps_begin > 0:
            raise ConfigError(f"eps_begin must be > 0, got {self.eps_begin}")
        if self.floor is None:
            object.__setattr__(self, "floor", self.eps_begin / 2)
        if not 0 < self.floor <= self.eps_begin:
            raise ConfigError(f"floor must be in (0, eps_begin], got {self.floor}")
        if not 0 < self.decay <= 1:
            raise ConfigError(f"decay must be in (0, 1], got {self.decay}")
        if self.decrement < 0:
            raise ConfigError(f"decrement must be >= 0, got {self.decrement}")
        if self.step_size < 1:
            raise ConfigError(f"step_size must be >= 1, got {self.step_size}")

    @classmethod
    def from_half_life(
        cls,
        kind: str,
        eps_begin: float = 0.7,
        half_life: float = 7.5,
        floor: float | None = None,
        step_size: int = 5,
    ) -> "EpsSchedule":
        """Schedule that reaches the floor after ``half_life`` epochs.

        With the default floor of eps_begin / 2 the expo decay is
        0.5 ** (1 / half_life); the linear decrement covers the same drop.
        """
        if not half_life > 0:
            raise ConfigError(f"half_life must be > 0, got {half_life}")
        floor = eps_begin / 2 if floor is None else floor
        if not 0 < floor <= eps_begin:
            raise ConfigError(f"floor must be in (0, eps_begin], got {floor}")
        decay = (floor / eps_begin) ** (1.0 / half_life)
        decrement = (eps_begin - floor) / half_life
        return cls(kind, eps_begin, decay, decrement, step_size, floor)

    @classmethod
    def constant(cls, eps: float) -> "EpsSchedule":
        return cls("expo", eps, decay=1.0, floor=eps)


def eps_at(s: EpsSchedule, epoch: int) -> float:
    if epoch < 0:
        raise ContractError(f"epoch must be >= 0, got {epoch}")
    if s.kind == "expo":
        eps = s.eps_begin * s.decay**epoch
    elif s.kind == "linear":
        eps = s.eps_begin - s.decrement * epoch
    else:
        eps = s.eps_begin - s.decrement * s.step_size * (epoch // s.step_size)
    return max(s.floor, eps)


def dbscan(d: DistanceMatrix, p: DbscanParams) -> PseudoLabeling:
    """Deterministic DBSCAN; ``min_samples`` counts the point itself.

    Clusters are numbered in order of their lowest-index core point. A border
    point reachable from several clusters joins the first one that reaches it.
    """
    values = np.asarray(d.values)
    n = values.shape[0]
    if values.shape != (n, n):
        raise ContractError(f"distance matrix must be square, got {values.shape}")
    if np.any(np.diag(values) != 0):
        raise ContractError("distance matrix must have a zero diagonal")
    if not np.allclose(values, values.T, rtol=0.0, atol=1e-9):
        raise ContractError("distance matrix must be symmetric")

    adjacency = values <= p.eps
    neighbors = [np.flatnonzero(row) for row in adjacency]
    core = adjacency.sum(axis=1) >= p.min_samples

    labels = np.full(n, OUTLIER, dtype=np.int64)
    cluster = 0
    for i in range(n):
        if labels[i] != OUTLIER or not core[i]:
            continue
        labels[i] = cluster
        queue = deque([i])
        while queue:
            j = queue.popleft()
            for nb in neighbors[j]:
                if labels[nb] == OUTLIER:
                    labels[nb] = cluster
                    if core[nb]:
                        queue.append(nb)
        cluster += 1
    return PseudoLabeling(labels, cluster)

