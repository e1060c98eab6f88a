"""Cluster memory: one unit vector per pseudo-class, refreshed from mini-batches.

Update modes
    instance  every batch feature is folded in one at a time (the plain
              Cluster-Contrast style update used as the ablation baseline)
    avg       the batch centroid is the unweighted group mean
    hardest   the batch centroid is the least similar group member
    dynamic   hardness-weighted mean, weights = softmax(-c.z / tau_w)

Every mode then applies ``c <- gamma * c + (1 - gamma) * c_hat`` and
re-normalizes, so memory rows stay unit length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dccc.clustering import OUTLIER, PseudoLabeling
from dccc.errors import ConfigError, ContractError, NumericalError

MEMORY_MODES = ("instance", "avg", "hardest", "dynamic")


@dataclass
class ClusterMemory:
    vectors: np.ndarray  # (C, D), unit rows
    gamma: float = 0.1
    mode: str = "dynamic"
    tau_w: float = 0.09

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.mode not in MEMORY_MODES:
            raise ConfigError(f"memory mode must be one of {MEMORY_MODES}, got {self.mode!r}")
        if not self.tau_w > 0:
            raise ConfigError(f"tau_w must be > 0, got {self.tau_w}")

    @property
    def num_clusters(self) -> int:
        return self.vectors.shape[0]

    def copy(self) -> "ClusterMemory":
        return ClusterMemory(self.vectors.copy(), self.gamma, self.mode, self.tau_w)

    def to_json_dict(self) -> dict:
        return {
            "memory": self.vectors.tolist(),
            "gamma": self.gamma,
            "mode": self.mode,
            "tau_w": self.tau_w,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ClusterMemory":
        return cls(np.asarray(obj["memory"], dtype=np.float64), obj["gamma"], obj["mode"], obj["tau_w"])


def _normalize(v: np.ndarray, what: str) -> np.ndarray:
    norm = np.linalg.norm(v)
    if not norm > 1e-12:
        raise NumericalError(f"{what} has (near) zero norm and cannot be normalized")
    return v / norm


def init_memory(
    f: np.ndarray,
    labels: PseudoLabeling,
    gamma: float = 0.1,
    mode: str = "dynamic",
    tau_w: float = 0.09,
) -> ClusterMemory:
    """Normalized mean feature of every cluster; outliers are ignored."""
    if labels.num_clusters < 1:
        raise ContractError("cannot build a memory without clusters")
    f = np.asarray(f, dtype=np.float64)
    if f.shape[0] != labels.assignment.shape[0]:
        raise ContractError("feature count does not match the labeling")
    rows = []
    for c in range(labels.num_clusters):
        idx = labels.members(c)
        if idx.size == 0:
            raise ContractError(f"cluster {c} is empty")
        rows.append(_normalize(f[idx].mean(axis=0), f"mean of cluster {c}"))
    return ClusterMemory(np.vstack(rows), gamma, mode, tau_w)


def dynamic_weights(c: np.ndarray, group: np.ndarray, tau_w: float) -> np.ndarray:
    """softmax over the group of -c.z_j / tau_w: less similar members weigh more."""
    if not tau_w > 0:
        raise ConfigError(f"tau_w must be > 0, got {tau_w}")
    logits = -(np.atleast_2d(group) @ c) / tau_w
    logits -= logits.max()
    w = np.exp(logits)
    return w / w.sum()


def dynamic_centroid(w: np.ndarray, group: np.ndarray) -> np.ndarray:
    """Weighted sum of the group rows (not normalized)."""
    group = np.atleast_2d(group)
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (group.shape[0],):
        raise ContractError(f"{w.shape[0]} weights for {group.shape[0]} group members")
    if abs(w.sum() - 1.0) > 1e-6:
        raise ContractError(f"weights must sum to 1, got {w.sum()}")
    return w @ group


def momentum_update(m: ClusterMemory, cluster_id: int, c_hat: np.ndarray) -> ClusterMemory:
    """c_i <- normalize(gamma * c_i + (1 - gamma) * c_hat); other rows untouched."""
    if not 0 <= cluster_id < m.num_clusters:
        raise ContractError(f"cluster id {cluster_id} out of range for {m.num_clusters} clusters")
    vectors = m.vectors.copy()
    mixed = m.gamma * vectors[cluster_id] + (1.0 - m.gamma) * np.asarray(c_hat)
    vectors[cluster_id] = _normalize(mixed, f"updated memory row {cluster_id}")
    return ClusterMemory(vectors, m.gamma, m.mode, m.tau_w)


def batch_centroid(m: ClusterMemory, cluster_id: int, group: np.ndarray) -> np.ndarray:
    c = m.vectors[cluster_id]
    if m.mode == "avg":
        return group.mean(axis=0)
    if m.mode == "hardest":
        return group[np.argmin(group @ c)]
    if m.mode == "dynamic":
        return dynamic_centroid(dynamic_weights(c, group, m.tau_w), group)
    raise ContractError(f"mode {m.mode!r} has no single batch centroid")


def batch_update(m: ClusterMemory, features: np.ndarray, labels: np.ndarray) -> ClusterMemory:
    """Fold a batch of student features into the memory, cluster by cluster."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.asarray(labels)
    if labels.shape != (features.shape[0],):
        raise ContractError("one pseudo-label per batch feature is required")
    bad = labels[(labels < 0) | (labels >= m.num_clusters)]
    if bad.size:
        label = "outlier" if bad[0] == OUTLIER else str(bad[0])
        raise ContractError(f"batch label {label} is not a memory cluster")

    if m.mode == "instance":
        for z, y in zip(features, labels):
            m = momentum_update(m, int(y), z)
        return m
    for cluster_id in np.unique(labels):
        group = features[labels == cluster_id]
        m = momentum_update(m, int(cluster_id), batch_centroid(m, int(cluster_id), group))
    return m
