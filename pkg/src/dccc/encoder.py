"""Linear + L2-normalization encoder with a hand-written backward pass.

The same parameter container serves as student and teacher. The student is
trained with Adam (decoupled weight decay on the weight matrix only); the
teacher follows the student through an exponential moving average and never
sees a gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dccc.errors import ConfigError, ContractError, NumericalError


@dataclass
class EncoderParams:
    weight: np.ndarray  # (D_out, D_in)
    bias: np.ndarray  # (D_out,)

    def __post_init__(self) -> None:
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ContractError(
                f"weight {self.weight.shape} and bias {self.bias.shape} do not match"
            )
        if self.weight.shape[0] < 2:
            raise ContractError("output dimension must be >= 2")

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.weight.copy(), self.bias.copy())

    def to_json_dict(self) -> dict:
        return {"weight": self.weight.tolist(), "bias": self.bias.tolist()}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "EncoderParams":
        return cls(np.asarray(obj["weight"]), np.asarray(obj["bias"]))


def init_params(in_dim: int, out_dim: int, rng: np.random.Generator) -> EncoderParams:
    """Gaussian weights with variance 1/in_dim, zero bias."""
    weight = rng.standard_normal((out_dim, in_dim)) / np.sqrt(in_dim)
    return EncoderParams(weight, np.zeros(out_dim))


@dataclass
class ForwardCache:
    inputs: np.ndarray  # (B, D_in)
    outputs: np.ndarray  # (B, D_out), unit rows
    norms: np.ndarray  # (B,), norm of the pre-normalization activation


@dataclass
class Gradients:
    weight: np.ndarray
    bias: np.ndarray
    inputs: np.ndarray


def forward(p: EncoderParams, batch: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.shape[1] != p.in_dim:
        raise ContractError(f"batch has {batch.shape[1]} columns, encoder expects {p.in_dim}")
    act = batch @ p.weight.T + p.bias
    norms = np.linalg.norm(act, axis=1)
    bad = np.flatnonzero(~(norms > 0) | ~np.isfinite(norms))
    if bad.size:
        raise NumericalError(f"pre-normalization activation of sample {bad[0]} has norm {norms[bad[0]]}")
    out = act / norms[:, None]
    return out, ForwardCache(batch, out, norms)


def backward(p: EncoderParams, cache: ForwardCache, grad_out: np.ndarray) -> Gradients:
    """Chain ``dL/dy`` through y = v/|v| and v = W x + b."""
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != cache.outputs.shape:
        raise ContractError(
            f"gradient shape {grad_out.shape} does not match output {cache.outputs.shape}"
        )
    if cache.inputs.shape[1] != p.in_dim:
        raise ContractError("cache was produced by an encoder of a different shape")
    y = cache.outputs
    radial = np.sum(grad_out * y, axis=1, keepdims=True)
    grad_act = (grad_out - radial * y) / cache.norms[:, None]
    return Gradients(
        weight=grad_act.T @ cache.inputs,
        bias=grad_act.sum(axis=0),
        inputs=grad_act @ p.weight,
    )


@dataclass
class AdamState:
    m_weight: np.ndarray
    v_weight: np.ndarray
    m_bias: np.ndarray
    v_bias: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 5e-4

    @classmethod
    def zeros_like(cls, p: EncoderParams, **hyper) -> "AdamState":
        return cls(
            np.zeros_like(p.weight),
            np.zeros_like(p.weight),
            np.zeros_like(p.bias),
            np.zeros_like(p.bias),
            **hyper,
        )

    def copy(self) -> "AdamState":
        return AdamState(
            self.m_weight.copy(),
            self.v_weight.copy(),
            self.m_bias.copy(),
            self.v_bias.copy(),
            self.step,
            self.beta1,
            self.beta2,
            self.eps,
            self.weight_decay,
        )

    def to_json_dict(self) -> dict:
        return {
            "m_weight": self.m_weight.tolist(),
            "v_weight": self.v_weight.tolist(),
            "m_bias": self.m_bias.tolist(),
            "v_bias": self.v_bias.tolist(),
            "step": self.step,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "weight_decay": self.weight_decay,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "AdamState":
        arrays = {k: np.asarray(obj[k], dtype=np.float64) for k in ("m_weight", "v_weight", "m_bias", "v_bias")}
        return cls(**arrays, step=int(obj["step"]), beta1=obj["beta1"], beta2=obj["beta2"],
                   eps=obj["eps"], weight_decay=obj["weight_decay"])


def adam_step(
    state: AdamState, p: EncoderParams, grads: Gradients, lr: float
) -> tuple[AdamState, EncoderParams]:
    """One AdamW step. Returns new objects; the inputs are left untouched."""
    if lr < 0:
        raise ContractError(f"learning rate must be >= 0, got {lr}")
    if not (np.all(np.isfinite(grads.weight)) and np.all(np.isfinite(grads.bias))):
        raise NumericalError("non-finite gradient passed to adam_step")
    if grads.weight.shape != p.weight.shape or grads.bias.shape != p.bias.shape:
        raise ContractError("gradient shapes do not match parameters")

    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    m_w = b1 * state.m_weight + (1 - b1) * grads.weight
    v_w = b2 * state.v_weight + (1 - b2) * grads.weight**2
    m_b = b1 * state.m_bias + (1 - b1) * grads.bias
    v_b = b2 * state.v_bias + (1 - b2) * grads.bias**2
    c1 = 1 - b1**t
    c2 = 1 - b2**t

    weight = p.weight - lr * state.weight_decay * p.weight
    weight = weight - lr * (m_w / c1) / (np.sqrt(v_w / c2) + state.eps)
    bias = p.bias - lr * (m_b / c1) / (np.sqrt(v_b / c2) + state.eps)

    new_state = AdamState(m_w, v_w, m_b, v_b, t, b1, b2, state.eps, state.weight_decay)
    return new_state, EncoderParams(weight, bias)


def warmup_lr(epoch: int, base_lr: float, warmup_epochs: int) -> float:
    """Linear ramp over the first ``warmup_epochs`` epochs, flat afterwards."""
    if warmup_epochs < 1:
        raise ConfigError(f"warmup_epochs must be >= 1, got {warmup_epochs}")
    if epoch + 1 >= warmup_epochs:
        return base_lr
    return base_lr * (epoch + 1) / warmup_epochs


@dataclass(frozen=True)
class EmaConfig:
    lam: float = 0.999

    def __post_init__(self) -> None:
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"EMA coefficient must be in [0, 1], got {self.lam}")


def ema_update(teacher: EncoderParams, student: EncoderParams, cfg: EmaConfig) -> EncoderParams:
    """teacher <- lam * teacher + (1 - lam) * student, entrywise."""
    if teacher.weight.shape != student.weight.shape or teacher.bias.shape != student.bias.shape:
        raise ContractError("teacher and student shapes differ")
    lam = cfg.lam
    return EncoderParams(
        lam * teacher.weight + (1 - lam) * student.weight,
        lam * teacher.bias + (1 - lam) * student.bias,
    )
