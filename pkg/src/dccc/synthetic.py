"""Synthetic identity blobs standing in for pedestrian images.

Each identity is a mean vector near a shared base direction; every sample is
that mean plus isotropic Gaussian noise plus a fixed per-camera offset. Raw
samples are left unnormalized, normalization belongs to the encoder.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from dccc.errors import ConfigError, ContractError

_SPLIT_CODES = {"train": 0, "test": 1}


@dataclass(frozen=True)
class DatasetSpec:
    num_ids: int = 32
    images_per_id: int = 16
    input_dim: int = 64
    id_spread: float = 1.0
    intra_noise: float = 0.08
    num_cameras: int = 4
    camera_shift: float = 0.5
    seed: int = 0

    def validate(self) -> None:
        if self.num_ids < 2:
            raise ConfigError(f"num_ids must be >= 2, got {self.num_ids}")
        if self.images_per_id < 2:
            raise ConfigError(f"images_per_id must be >= 2, got {self.images_per_id}")
        if self.input_dim < 1:
            raise ConfigError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.id_spread < 0:
            raise ConfigError(f"id_spread must be >= 0, got {self.id_spread}")
        if self.intra_noise < 0:
            raise ConfigError(f"intra_noise must be >= 0, got {self.intra_noise}")
        if self.num_cameras < 1:
            raise ConfigError(f"num_cameras must be >= 1, got {self.num_cameras}")
        if self.camera_shift < 0:
            raise ConfigError(f"camera_shift must be >= 0, got {self.camera_shift}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SyntheticDataset:
    spec: DatasetSpec
    samples: np.ndarray  # (N, input_dim), unnormalized
    true_ids: np.ndarray  # (N,)
    cam_ids: np.ndarray  # (N,)

    def __len__(self) -> int:
        return self.samples.shape[0]

    def to_json_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "samples": self.samples.tolist(),
            "true_ids": self.true_ids.tolist(),
            "cam_ids": self.cam_ids.tolist(),
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "SyntheticDataset":
        spec = DatasetSpec(**obj["spec"])
        samples = np.asarray(obj["samples"], dtype=np.float64)
        true_ids = np.asarray(obj["true_ids"], dtype=np.int64)
        cam_ids = np.asarray(obj["cam_ids"], dtype=np.int64)
        if samples.ndim != 2 or len(true_ids) != len(samples) or len(cam_ids) != len(samples):
            raise ContractError("dataset arrays have inconsistent lengths")
        return cls(spec, samples, true_ids, cam_ids)


@dataclass(frozen=True)
class AugmentParams:
    noise_std: float = 0.05
    dropout_prob: float = 0.1

    def validate(self) -> None:
        if self.noise_std < 0:
            raise ConfigError(f"noise_std must be >= 0, got {self.noise_std}")
        if not 0.0 <= self.dropout_prob < 1.0:
            raise ConfigError(f"dropout_prob must be in [0, 1), got {self.dropout_prob}")


def _unit_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    v = rng.standard_normal((n, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def generate_dataset(spec: DatasetSpec, split: str = "train") -> SyntheticDataset:
    """Draw a labeled dataset.

    The base direction and the camera offsets depend on ``spec.seed`` only, so
    the ``"train"`` and ``"test"`` splits share one world but hold disjoint,
    independently drawn identities.
    """
    spec.validate()
    if split not in _SPLIT_CODES:
        raise ConfigError(f"split must be one of {sorted(_SPLIT_CODES)}, got {split!r}")

    world = np.random.default_rng(np.random.SeedSequence([spec.seed, 0]))
    base = _unit_rows(world, 1, spec.input_dim)[0]
    cam_offsets = spec.camera_shift * _unit_rows(world, spec.num_cameras, spec.input_dim)

    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 1, _SPLIT_CODES[split]]))
    means = base + spec.id_spread * _unit_rows(rng, spec.num_ids, spec.input_dim)
    cam_start = rng.integers(0, spec.num_cameras, size=spec.num_ids)
    # unit-variance draws scaled afterwards, so noise levels share random numbers
    noise = rng.standard_normal((spec.num_ids, spec.images_per_id, spec.input_dim))

    true_ids = np.repeat(np.arange(spec.num_ids), spec.images_per_id)
    within = np.tile(np.arange(spec.images_per_id), spec.num_ids)
    cam_ids = (within + cam_start[true_ids]) % spec.num_cameras

    samples = (
        means[true_ids]
        + spec.intra_noise * noise.reshape(-1, spec.input_dim)
        + cam_offsets[cam_ids]
    )
    return SyntheticDataset(spec, samples, true_ids.astype(np.int64), cam_ids.astype(np.int64))


def split_query_gallery(
    ds: SyntheticDataset, query_per_id: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Pick ``query_per_id`` queries per identity; everything else is gallery."""
    counts = np.bincount(ds.true_ids)
    if query_per_id < 1:
        raise ConfigError(f"query_per_id must be >= 1, got {query_per_id}")
    if query_per_id >= counts[counts > 0].min():
        raise ConfigError(
            f"query_per_id={query_per_id} must be smaller than images per id "
            f"({counts[counts > 0].min()})"
        )
    rng = np.random.default_rng(seed)
    query = []
    for pid in np.unique(ds.true_ids):
        members = np.flatnonzero(ds.true_ids == pid)
        query.extend(rng.choice(members, size=query_per_id, replace=False).tolist())
    query = np.sort(np.asarray(query, dtype=np.int64))
    gallery = np.setdiff1d(np.arange(len(ds)), query)
    return query, gallery


def augment(x: np.ndarray, p: AugmentParams, rng: np.random.Generator) -> np.ndarray:
    """Noisy, randomly zeroed copy of a sample (or of every row of a batch)."""
    p.validate()
    x = np.asarray(x, dtype=np.float64)
    out = x + p.noise_std * rng.standard_normal(x.shape) if p.noise_std > 0 else x.copy()
    if p.dropout_prob > 0:
        out[rng.random(x.shape) < p.dropout_prob] = 0.0
    return out
