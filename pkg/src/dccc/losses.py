"""Contrastive losses against the cluster memory, with gradients w.r.t. the
(unit-norm) student query features. Memory rows and teacher features are
constants: no gradient flows into them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dccc.errors import ConfigError, ContractError


@dataclass
class LossOutput:
    loss: float
    grad: np.ndarray  # (B, D)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _check_memory(memory, tau: float) -> np.ndarray:
    memory = getattr(memory, "vectors", memory)  # accept a ClusterMemory too
    memory = np.atleast_2d(np.asarray(memory, dtype=np.float64))
    if memory.shape[0] == 0:
        raise ContractError("memory has no clusters")
    if not tau > 0:
        raise ConfigError(f"temperature must be > 0, got {tau}")
    return memory


def similarity_probs(q: np.ndarray, memory: np.ndarray, tau: float) -> np.ndarray:
    """softmax_k(q . c_k / tau) for one query or row-wise for a batch."""
    memory = _check_memory(memory, tau)
    return np.exp(_log_softmax(np.asarray(q) @ memory.T / tau))


def _check_batch(q: np.ndarray, labels: np.ndarray, memory: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape[0] != q.shape[0]:
        raise ContractError(f"{labels.shape[0]} labels for {q.shape[0]} queries")
    if q.shape[1] != memory.shape[1]:
        raise ContractError("query and memory dimensions differ")
    if np.any(labels < 0):
        raise ContractError("outlier-labeled query reached the loss")
    if np.any(labels >= memory.shape[0]):
        raise ContractError(f"label {labels.max()} out of range for {memory.shape[0]} clusters")
    return q, labels


def _soft_target_loss(q: np.ndarray, target: np.ndarray, memory: np.ndarray, tau: float) -> LossOutput:
    """Batch mean of sum_k -target_k * log softmax(q . c / tau)_k."""
    b = q.shape[0]
    log_p = _log_softmax(q @ memory.T / tau)
    loss = float(-(target * log_p).sum() / b)
    grad = (np.exp(log_p) - target) @ memory / (b * tau)
    return LossOutput(loss, grad)


def cluster_nce(q_s: np.ndarray, labels: np.ndarray, memory: np.ndarray, tau: float = 0.05) -> LossOutput:
    memory = _check_memory(memory, tau)
    q_s, labels = _check_batch(q_s, labels, memory)
    one_hot = np.zeros((q_s.shape[0], memory.shape[0]))
    one_hot[np.arange(q_s.shape[0]), labels] = 1.0
    return _soft_target_loss(q_s, one_hot, memory, tau)


# cross-entropy against the one-hot pseudo-label is exactly the ClusterNCE loss
cross_entropy_loss = cluster_nce


def smooth_label(y_t: np.ndarray, one_hot_class, mu_s: float) -> np.ndarray:
    """mu_s * y_t + (1 - mu_s) * onehot(class); row-wise when y_t is 2-D."""
    if not 0.0 <= mu_s <= 1.0:
        raise ConfigError(f"mu_s must be in [0, 1], got {mu_s}")
    y_t = np.asarray(y_t, dtype=np.float64)
    rows = np.atleast_2d(y_t)
    cls = np.asarray(one_hot_class, dtype=np.int64).reshape(-1)
    if cls.shape[0] != rows.shape[0]:
        raise ContractError("one class index per soft label is required")
    if np.any(cls < 0) or np.any(cls >= rows.shape[1]):
        raise ContractError(f"class index out of range for {rows.shape[1]} classes")
    one_hot = np.zeros_like(rows)
    one_hot[np.arange(rows.shape[0]), cls] = 1.0
    out = mu_s * rows + (1.0 - mu_s) * one_hot
    return out.reshape(y_t.shape)


def label_smooth_soft_loss(
    q_s: np.ndarray,
    q_t: np.ndarray,
    labels: np.ndarray,
    memory: np.ndarray,
    tau: float = 0.05,
    mu_s: float = 0.3,
) -> LossOutput:
    """Cross-entropy of the student's memory similarities against the teacher's
    similarities smoothed toward the one-hot pseudo-label."""
    memory = _check_memory(memory, tau)
    q_s, labels = _check_batch(q_s, labels, memory)
    q_t = np.atleast_2d(np.asarray(q_t, dtype=np.float64))
    if q_t.shape != q_s.shape:
        raise ContractError(f"teacher features {q_t.shape} do not match student {q_s.shape}")
    target = smooth_label(similarity_probs(q_t, memory, tau), labels, mu_s)
    return _soft_target_loss(q_s, target, memory, tau)


def soft_target_loss(q_s: np.ndarray, target: np.ndarray, memory: np.ndarray, tau: float) -> LossOutput:
    """Loss against an explicit, frozen target distribution per query."""
    memory = _check_memory(memory, tau)
    q_s = np.atleast_2d(np.asarray(q_s, dtype=np.float64))
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    if target.shape != (q_s.shape[0], memory.shape[0]):
        raise ContractError("target must have one distribution over clusters per query")
    return _soft_target_loss(q_s, target, memory, tau)


def mixed_loss(
    q_s: np.ndarray,
    q_t: np.ndarray,
    labels: np.ndarray,
    memory: np.ndarray,
    tau: float = 0.05,
    mu_s: float = 0.3,
    ce_weight: float = 0.7,
) -> LossOutput:
    """ce_weight * cross-entropy + (1 - ce_weight) * label-smoothed soft loss."""
    if not 0.0 <= ce_weight <= 1.0:
        raise ConfigError(f"ce_weight must be in [0, 1], got {ce_weight}")
    ce = cross_entropy_loss(q_s, labels, memory, tau)
    ss = label_smooth_soft_loss(q_s, q_t, labels, memory, tau, mu_s)
    return LossOutput(
        ce_weight * ce.loss + (1 - ce_weight) * ss.loss,
        ce_weight * ce.grad + (1 - ce_weight) * ss.grad,
    )
