"""Pairwise distances, k-nearest-neighbour sets and the kNN-set Jaccard distance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dccc.errors import ContractError, NumericalError

METRICS = ("euclidean", "cosine", "jaccard")


@dataclass(frozen=True)
class DistanceMatrix:
    values: np.ndarray  # (N, N)
    metric: str

    def __post_init__(self) -> None:
        if self.metric not in METRICS:
            raise ContractError(f"unknown metric {self.metric!r}")

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class NeighborSets:
    indices: np.ndarray  # (N, min(k, N-1)), nearest first
    k: int


def _check_features(f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] < 2:
        raise ContractError(f"need an (N >= 2, D) feature matrix, got shape {f.shape}")
    if not np.all(np.isfinite(f)):
        raise NumericalError("features contain non-finite values")
    return f


def pairwise_distance(f: np.ndarray, metric: str = "cosine") -> DistanceMatrix:
    """Euclidean or cosine distance between all rows (rows assumed unit-norm for cosine)."""
    f = _check_features(f)
    gram = f @ f.T
    if metric == "cosine":
        d = 1.0 - gram
    elif metric == "euclidean":
        sq = np.diag(gram)
        d = np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2.0 * gram, 0.0))
    else:
        raise ContractError(f"pairwise_distance supports euclidean/cosine, got {metric!r}")
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    np.maximum(d, 0.0, out=d)
    return DistanceMatrix(d, metric)


def knn_sets(d: DistanceMatrix, k: int) -> NeighborSets:
    """The ``k`` nearest other points of every row; ties go to the lower index."""
    if k < 1:
        raise ContractError(f"k must be >= 1, got {k}")
    n = len(d)
    kk = min(k, n - 1)
    masked = d.values.copy()
    np.fill_diagonal(masked, np.inf)
    order = np.argsort(masked, axis=1, kind="stable")[:, :kk]
    return NeighborSets(order, k)


def jaccard_from_neighbors(nbrs: NeighborSets) -> DistanceMatrix:
    n = nbrs.indices.shape[0]
    member = np.zeros((n, n), dtype=np.float64)
    rows = np.repeat(np.arange(n), nbrs.indices.shape[1])
    member[rows, nbrs.indices.ravel()] = 1.0
    member[np.arange(n), np.arange(n)] = 1.0
    sizes = member.sum(axis=1)
    inter = member @ member.T  # small integer counts, exact in float64
    union = sizes[:, None] + sizes[None, :] - inter
    d = 1.0 - inter / union
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(d, "jaccard")


def jaccard_distance(f: np.ndarray, k: int) -> DistanceMatrix:
    """1 - |S_i & S_j| / |S_i | S_j| with S_i = cosine kNN of i plus i itself."""
    return jaccard_from_neighbors(knn_sets(pairwise_distance(f, "cosine"), k))
