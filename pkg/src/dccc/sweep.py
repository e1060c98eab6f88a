"""Grid runs over one configuration axis and several seeds.

Every (value, seed) pair is one full training run; the final epoch's metrics
become one CSV row. A run that raises is recorded with its error status and
the sweep moves on. Rows are followed by one median row per value.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass

import numpy as np

from dccc.clustering import SCHEDULER_KINDS
from dccc.config import LOSS_KINDS, TrainConfig, convert_value
from dccc.errors import ConfigError, DcccError
from dccc.memory import MEMORY_MODES
from dccc.trainer import train

log = logging.getLogger(__name__)

SWEEP_COLUMNS = ("axis", "value", "seed", "map", "r1", "ari", "nmi", "status")
COMPONENTS = ("dcps", "dycl", "lss")
AXES = ("scheduler_kind", "memory_mode", "loss_kind", "tau_w", "mu_s", "step_size", "components")

# the component grid: every subset of the three additions to the baseline
COMPONENT_GRID = ("base", "dcps", "dycl", "lss", "dcps+dycl", "dcps+lss", "dycl+lss", "dcps+dycl+lss")


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple[str, ...]
    base: TrainConfig
    seeds: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.axis not in AXES:
            raise ConfigError(f"axis must be one of {AXES}, got {self.axis!r}")
        if not self.values:
            raise ConfigError("a sweep needs at least one value")
        if not self.seeds:
            raise ConfigError("a sweep needs at least one seed")
        for v in self.values:
            apply_value(self.base, self.axis, v)


def _components(base: TrainConfig, value: str) -> TrainConfig:
    parts = value.split("+")
    if value == "base":
        parts = []
    unknown = set(parts) - set(COMPONENTS)
    if unknown or len(set(parts)) != len(parts):
        raise ConfigError(f"bad component combination {value!r}; use 'base' or a '+' join of {COMPONENTS}")
    return base.replace(
        dcps="dcps" in parts,
        memory_mode="dynamic" if "dycl" in parts else "instance",
        loss_kind="lss" if "lss" in parts else "cluster_nce",
    )


def apply_value(base: TrainConfig, axis: str, value: str) -> TrainConfig:
    """The base config with one axis set to ``value`` (given as text)."""
    value = value.strip()
    if axis == "scheduler_kind":
        if value == "none":
            return base.replace(dcps=False)
        if value not in SCHEDULER_KINDS:
            raise ConfigError(f"scheduler_kind must be 'none' or one of {SCHEDULER_KINDS}, got {value!r}")
        return base.replace(dcps=True, scheduler=value)
    if axis == "memory_mode":
        if value not in MEMORY_MODES:
            raise ConfigError(f"memory_mode must be one of {MEMORY_MODES}, got {value!r}")
        return base.replace(memory_mode=value)
    if axis == "loss_kind":
        if value not in LOSS_KINDS:
            raise ConfigError(f"loss_kind must be one of {LOSS_KINDS}, got {value!r}")
        return base.replace(loss_kind=value)
    if axis in ("tau_w", "mu_s"):
        return base.replace(**{axis: convert_value(axis, value)})
    if axis == "step_size":
        return base.replace(dcps=True, scheduler="step", eps_step_size=convert_value("eps_step_size", value))
    if axis == "components":
        return _components(base, value)
    raise ConfigError(f"unknown sweep axis {axis!r}")


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return f"{v:.6f}"


def run_one(cfg: TrainConfig) -> tuple[dict, str]:
    try:
        reports, _ = train(cfg)
    except (DcccError, ArithmeticError, ValueError) as exc:
        log.warning("run failed (seed %d): %s", cfg.seed, exc)
        return {}, f"error: {type(exc).__name__}: {exc}".replace("\n", " ")
    last = reports[-1]
    return {"map": last.mAP, "r1": last.rank1, "ari": last.ari, "nmi": last.nmi}, "ok"


def _median(values) -> float | None:
    vals = [v for v in values if v is not None and not math.isnan(v)]
    return float(np.median(vals)) if vals else None


def run_sweep(spec: SweepSpec) -> tuple[list[dict], str]:
    """Run the grid; return the per-run results and the CSV text.

    Each row uses its seed as the config's ``seed``, so the same seed list
    gives paired runs across values.
    """
    results = []
    for value in spec.values:
        for seed in spec.seeds:
            cfg = apply_value(spec.base, spec.axis, value).replace(seed=seed)
            log.info("sweep %s=%s seed=%d", spec.axis, value, seed)
            metrics, status = run_one(cfg)
            results.append({"value": value, "seed": seed, "status": status, **metrics})

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for r in results:
        writer.writerow([spec.axis, r["value"], r["seed"]]
                        + [_fmt(r.get(m)) for m in ("map", "r1", "ari", "nmi")] + [r["status"]])
    for value in spec.values:
        rows = [r for r in results if r["value"] == value]
        ok = [r for r in rows if r["status"] == "ok"]
        meds = [_fmt(_median([r[m] for r in ok])) for m in ("map", "r1", "ari", "nmi")]
        writer.writerow([spec.axis, value, "median"] + meds + [f"summary {len(ok)}/{len(rows)} ok"])
    return results, buf.getvalue()


def summary(results: list[dict], value: str) -> dict:
    """Median of each final metric over the successful runs of one value."""
    ok = [r for r in results if r["value"] == value and r["status"] == "ok"]
    return {m: _median([r[m] for r in ok]) for m in ("map", "r1", "ari", "nmi")} | {
        "ok": len(ok),
        "runs": sum(r["value"] == value for r in results),
    }
