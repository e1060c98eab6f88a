"""Retrieval (mAP, CMC), clustering agreement (NMI, ARI) and distance statistics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from dccc.clustering import OUTLIER, PseudoLabeling
from dccc.errors import ContractError

CMC_RANKS = (1, 5, 10)


@dataclass(frozen=True)
class RetrievalResult:
    mAP: float
    cmc: dict = field(default_factory=dict)  # rank -> fraction of queries hit within rank
    num_valid_queries: int = 0
    num_skipped_queries: int = 0


@dataclass(frozen=True)
class ClusterQuality:
    nmi: float | None
    ari: float | None
    num_clusters: int
    num_outliers: int


def evaluate_retrieval(
    query_feats: np.ndarray,
    gallery_feats: np.ndarray,
    q_ids: np.ndarray,
    g_ids: np.ndarray,
    q_cams: np.ndarray,
    g_cams: np.ndarray,
    ranks: tuple[int, ...] = CMC_RANKS,
) -> RetrievalResult:
    """Rank the gallery by cosine similarity for every query.

    Gallery items sharing both identity and camera with the query are removed
    before ranking. Queries left without any relevant item are skipped and
    counted in ``num_skipped_queries``.
    """
    query_feats = np.atleast_2d(query_feats)
    gallery_feats = np.atleast_2d(gallery_feats)
    if query_feats.shape[0] == 0 or gallery_feats.shape[0] == 0:
        raise ContractError("query and gallery must be nonempty")
    q_ids, g_ids = np.asarray(q_ids), np.asarray(g_ids)
    q_cams, g_cams = np.asarray(q_cams), np.asarray(g_cams)

    sim = query_feats @ gallery_feats.T
    # stable sort on -sim: equal similarities keep ascending gallery index
    order = np.argsort(-sim, axis=1, kind="stable")

    aps = []
    hits = np.zeros(len(ranks))
    skipped = 0
    for qi in range(sim.shape[0]):
        ranked = order[qi]
        keep = ~((g_ids[ranked] == q_ids[qi]) & (g_cams[ranked] == q_cams[qi]))
        relevant = g_ids[ranked][keep] == q_ids[qi]
        if not relevant.any():
            skipped += 1
            continue
        positions = np.flatnonzero(relevant) + 1
        aps.append(np.mean(np.arange(1, positions.size + 1) / positions))
        first = positions[0]
        hits += np.array([first <= r for r in ranks], dtype=np.float64)

    valid = len(aps)
    if valid == 0:
        return RetrievalResult(float("nan"), {r: float("nan") for r in ranks}, 0, skipped)
    cmc = {r: float(h / valid) for r, h in zip(ranks, hits)}
    return RetrievalResult(float(np.mean(aps)), cmc, valid, skipped)


def _contingency(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.float64)
    np.add.at(table, (ai, bi), 1.0)
    return table


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi_score(a: np.ndarray, b: np.ndarray) -> float:
    """Mutual information over the arithmetic mean of the two entropies."""
    table = _contingency(a, b)
    n = table.sum()
    h_a = _entropy(table.sum(axis=1))
    h_b = _entropy(table.sum(axis=0))
    if table.shape[0] == 1 and table.shape[1] == 1:
        return 1.0
    if h_a == 0.0 or h_b == 0.0:
        return 0.0
    nz = table > 0
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))
    mi = float((table[nz] / n * np.log(table[nz] * n / outer[nz])).sum())
    return float(np.clip(mi / ((h_a + h_b) / 2.0), 0.0, 1.0))


def ari_score(a: np.ndarray, b: np.ndarray) -> float:
    table = _contingency(a, b)
    n = table.sum()

    def pairs(x):
        return (x * (x - 1) / 2.0).sum()

    index = pairs(table)
    sum_a = pairs(table.sum(axis=1))
    sum_b = pairs(table.sum(axis=0))
    total = n * (n - 1) / 2.0
    expected = sum_a * sum_b / total if total > 0 else 0.0
    max_index = (sum_a + sum_b) / 2.0
    if max_index == expected:
        # both partitions trivial (all singletons or one block): perfect agreement
        return 1.0
    return float((index - expected) / (max_index - expected))


def clustering_quality(pseudo: PseudoLabeling, truth: np.ndarray) -> ClusterQuality:
    """NMI and ARI of the non-outlier instances against the true identities."""
    truth = np.asarray(truth)
    if truth.shape != pseudo.assignment.shape:
        raise ContractError("pseudo-labels and truth have different lengths")
    keep = pseudo.assignment != OUTLIER
    n_out = int(np.count_nonzero(~keep))
    if not keep.any():
        return ClusterQuality(None, None, pseudo.num_clusters, n_out)
    a, b = pseudo.assignment[keep], truth[keep]
    return ClusterQuality(nmi_score(a, b), ari_score(a, b), pseudo.num_clusters, n_out)


def distance_stats(features: np.ndarray, truth_ids: np.ndarray) -> tuple[float | None, float | None]:
    """Mean cosine distance over same-identity pairs and over cross-identity pairs."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    truth_ids = np.asarray(truth_ids)
    n = features.shape[0]
    d = 1.0 - features @ features.T
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    same = truth_ids[:, None] == truth_ids[None, :]

    _, counts = np.unique(truth_ids, return_counts=True)
    intra = float(d[upper & same].mean()) if counts.size and counts.min() >= 2 else None
    inter = float(d[upper & ~same].mean()) if counts.size >= 2 else None
    return intra, inter
