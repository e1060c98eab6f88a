"""Experiment configuration as a flat ``key = value`` text file.

Blank lines and ``#`` comments are ignored, unknown keys are rejected and
missing keys keep their defaults. ``write_config`` emits every key, so
``parse_config(write_config(cfg)) == cfg``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from dccc.clustering import SCHEDULER_KINDS, DbscanParams, EpsSchedule
from dccc.encoder import EmaConfig
from dccc.errors import ConfigError
from dccc.memory import MEMORY_MODES
from dccc.sampler import PkConfig
from dccc.synthetic import AugmentParams, DatasetSpec

LOSS_KINDS = ("lss", "cluster_nce", "ce_plus_lss")
EVAL_NETWORKS = ("student", "teacher")


@dataclass(frozen=True)
class TrainConfig:
    # synthetic data (train and test splits share these)
    num_ids: int = 32
    images_per_id: int = 16
    input_dim: int = 64
    id_spread: float = 1.0
    intra_noise: float = 0.08
    num_cameras: int = 4
    camera_shift: float = 0.5
    query_per_id: int = 2
    # encoder and optimizer
    out_dim: int = 32
    base_lr: float = 0.001
    warmup_epochs: int = 20
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 5e-4
    ema_lambda: float = 0.999
    # view perturbation
    aug_noise: float = 0.05
    aug_dropout: float = 0.1
    # clustering
    dcps: bool = True
    scheduler: str = "expo"
    eps_begin: float = 0.7
    eps_floor: float = 0.35
    eps_half_life: float = 7.5
    eps_step_size: int = 5
    min_samples: int = 4
    k: int = 15
    # memory and loss
    memory_mode: str = "dynamic"
    gamma: float = 0.1
    tau_w: float = 0.09
    loss_kind: str = "lss"
    tau: float = 0.05
    mu_s: float = 0.3
    ce_weight: float = 0.7
    # schedule of the run
    P: int = 8
    K: int = 4
    epochs: int = 15
    iters_per_epoch: int = 50
    seed: int = 0
    eval_network: str = "student"

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        self.dataset_spec().validate()
        self.augment_params().validate()
        self.schedule()
        DbscanParams(self.eps_begin, self.min_samples)
        EmaConfig(self.ema_lambda)
        PkConfig(self.P, self.K)
        _choice("scheduler", self.scheduler, SCHEDULER_KINDS)
        _choice("memory_mode", self.memory_mode, MEMORY_MODES)
        _choice("loss_kind", self.loss_kind, LOSS_KINDS)
        _choice("eval_network", self.eval_network, EVAL_NETWORKS)
        checks = [
            ("out_dim", self.out_dim >= 2),
            ("query_per_id", 1 <= self.query_per_id < self.images_per_id),
            ("base_lr", self.base_lr >= 0),
            ("warmup_epochs", self.warmup_epochs >= 1),
            ("beta1", 0 <= self.beta1 < 1),
            ("beta2", 0 <= self.beta2 < 1),
            ("adam_eps", self.adam_eps > 0),
            ("weight_decay", self.weight_decay >= 0),
            ("k", self.k >= 1),
            ("gamma", 0 <= self.gamma <= 1),
            ("tau_w", self.tau_w > 0),
            ("tau", self.tau > 0),
            ("mu_s", 0 <= self.mu_s <= 1),
            ("ce_weight", 0 <= self.ce_weight <= 1),
            ("epochs", self.epochs >= 1),
            ("iters_per_epoch", self.iters_per_epoch >= 1),
        ]
        for name, ok in checks:
            if not ok:
                raise ConfigError(f"invalid value for {name}: {getattr(self, name)!r}")

    def dataset_spec(self) -> DatasetSpec:
        return DatasetSpec(
            self.num_ids,
            self.images_per_id,
            self.input_dim,
            self.id_spread,
            self.intra_noise,
            self.num_cameras,
            self.camera_shift,
            self.seed,
        )

    def augment_params(self) -> AugmentParams:
        return AugmentParams(self.aug_noise, self.aug_dropout)

    def schedule(self) -> EpsSchedule:
        """The eps schedule; with ``dcps`` off eps stays at ``eps_begin``."""
        if not self.dcps:
            return EpsSchedule.constant(self.eps_begin)
        return EpsSchedule.from_half_life(
            self.scheduler, self.eps_begin, self.eps_half_life, self.eps_floor, self.eps_step_size
        )

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


def _choice(name: str, value: str, allowed: tuple[str, ...]) -> None:
    if value not in allowed:
        raise ConfigError(f"{name} must be one of {allowed}, got {value!r}")


_FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def convert_value(key: str, raw: str):
    """Convert the text of one config value to the type of field ``key``."""
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"cannot parse {raw!r} as {kind} for key {key!r}") from None
    return raw


def parse_config_text(text: str, source: str = "<config>") -> TrainConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        try:
            values[key] = convert_value(key, raw)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    try:
        return TrainConfig(**values)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def parse_config(path) -> TrainConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text, str(path))


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def write_config(cfg: TrainConfig) -> str:
    return "".join(f"{f.name} = {format_value(getattr(cfg, f.name))}\n" for f in fields(cfg))


def config_to_dict(cfg: TrainConfig) -> dict:
    return dataclasses.asdict(cfg)
