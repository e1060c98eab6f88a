"""The epoch loop: cluster student features, rebuild the memory, then train
the student against it while the teacher tracks the student by EMA."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from dccc import encoder, losses, memory
from dccc.clustering import DbscanParams, PseudoLabeling, dbscan, eps_at
from dccc.config import TrainConfig, config_to_dict
from dccc.distance import jaccard_distance
from dccc.encoder import AdamState, EmaConfig, EncoderParams
from dccc.errors import DegenerateEpochError
from dccc.memory import ClusterMemory
from dccc.metrics import clustering_quality, distance_stats, evaluate_retrieval
from dccc.sampler import PkConfig, pk_sample
from dccc.synthetic import SyntheticDataset, augment, generate_dataset, split_query_gallery

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("epoch", "eps", "clusters", "outliers", "loss", "nmi", "ari",
                  "intra", "inter", "map", "r1", "r5", "r10")


@dataclass
class EpochReport:
    epoch: int
    eps: float
    num_clusters: int
    num_outliers: int
    loss: float | None
    nmi: float | None
    ari: float | None
    intra_mean: float | None
    inter_mean: float | None
    mAP: float | None
    rank1: float | None
    rank5: float | None
    rank10: float | None

    def row(self) -> list[str]:
        out = [str(self.epoch)]
        for f in fields(self)[1:]:
            v = getattr(self, f.name)
            if v is None or (isinstance(v, float) and math.isnan(v)):
                out.append("")
            elif isinstance(v, int):
                out.append(str(v))
            else:
                out.append(f"{v:.6f}")
        return out


@dataclass
class TrainState:
    student: EncoderParams
    teacher: EncoderParams
    adam: AdamState
    train: SyntheticDataset
    test: SyntheticDataset
    query: np.ndarray
    gallery: np.ndarray
    sample_rng: np.random.Generator
    augment_rng: np.random.Generator
    memory: ClusterMemory | None = None
    labels: PseudoLabeling | None = None
    epoch: int = 0


def init_state(cfg: TrainConfig) -> TrainState:
    spec = cfg.dataset_spec()
    train = generate_dataset(spec, "train")
    test = generate_dataset(spec, "test")
    query, gallery = split_query_gallery(test, cfg.query_per_id, cfg.seed)
    init_ss, sample_ss, aug_ss = np.random.SeedSequence([cfg.seed, 2]).spawn(3)
    student = encoder.init_params(cfg.input_dim, cfg.out_dim, np.random.default_rng(init_ss))
    adam = AdamState.zeros_like(
        student,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        eps=cfg.adam_eps,
        weight_decay=cfg.weight_decay,
    )
    return TrainState(
        student=student,
        teacher=student.copy(),
        adam=adam,
        train=train,
        test=test,
        query=query,
        gallery=gallery,
        sample_rng=np.random.default_rng(sample_ss),
        augment_rng=np.random.default_rng(aug_ss),
    )


def extract(p: EncoderParams, samples: np.ndarray) -> np.ndarray:
    return encoder.forward(p, samples)[0]


def pseudo_label(features: np.ndarray, cfg: TrainConfig, eps: float) -> PseudoLabeling:
    return dbscan(jaccard_distance(features, cfg.k), DbscanParams(eps, cfg.min_samples))


def compute_loss(cfg: TrainConfig, q_s, q_t, labels, mem: ClusterMemory) -> losses.LossOutput:
    if cfg.loss_kind == "cluster_nce":
        return losses.cluster_nce(q_s, labels, mem.vectors, cfg.tau)
    if cfg.loss_kind == "lss":
        return losses.label_smooth_soft_loss(q_s, q_t, labels, mem.vectors, cfg.tau, cfg.mu_s)
    return losses.mixed_loss(q_s, q_t, labels, mem.vectors, cfg.tau, cfg.mu_s, cfg.ce_weight)


def train_iteration(state: TrainState, cfg: TrainConfig, epoch: int) -> float:
    """One PK batch: losses against the current memory, then the student step,
    the teacher EMA step and finally the memory update."""
    idx, batch_labels = pk_sample(state.labels, PkConfig(cfg.P, cfg.K), state.sample_rng)
    x = state.train.samples[idx]
    aug = cfg.augment_params()
    view_s = augment(x, aug, state.augment_rng)
    view_t = augment(x, aug, state.augment_rng)

    q_s, cache = encoder.forward(state.student, view_s)
    q_t, _ = encoder.forward(state.teacher, view_t)
    out = compute_loss(cfg, q_s, q_t, batch_labels, state.memory)

    grads = encoder.backward(state.student, cache, out.grad)
    lr = encoder.warmup_lr(epoch, cfg.base_lr, cfg.warmup_epochs)
    state.adam, state.student = encoder.adam_step(state.adam, state.student, grads, lr)
    state.teacher = encoder.ema_update(state.teacher, state.student, EmaConfig(cfg.ema_lambda))
    state.memory = memory.batch_update(state.memory, q_s, batch_labels)
    return out.loss


def run_epoch(state: TrainState, cfg: TrainConfig, epoch: int) -> tuple[TrainState, EpochReport]:
    eps = eps_at(cfg.schedule(), epoch)
    feats = extract(state.student, state.train.samples)
    state.labels = pseudo_label(feats, cfg, eps)

    mean_loss = None
    try:
        if state.labels.num_clusters < cfg.P:
            raise DegenerateEpochError(
                f"{state.labels.num_clusters} clusters, {cfg.P} needed per batch"
            )
        state.memory = memory.init_memory(
            feats, state.labels, cfg.gamma, cfg.memory_mode, cfg.tau_w
        )
        batch_losses = [train_iteration(state, cfg, epoch) for _ in range(cfg.iters_per_epoch)]
        mean_loss = float(np.mean(batch_losses))
    except DegenerateEpochError as exc:
        log.warning("epoch %d skipped: %s", epoch, exc)
        state.memory = None

    quality = clustering_quality(state.labels, state.train.true_ids)
    intra, inter = distance_stats(extract(state.student, state.train.samples), state.train.true_ids)

    net = state.student if cfg.eval_network == "student" else state.teacher
    test_feats = extract(net, state.test.samples)
    q, g = state.query, state.gallery
    ret = evaluate_retrieval(
        test_feats[q], test_feats[g],
        state.test.true_ids[q], state.test.true_ids[g],
        state.test.cam_ids[q], state.test.cam_ids[g],
    )
    state.epoch = epoch + 1
    report = EpochReport(
        epoch=epoch,
        eps=eps,
        num_clusters=quality.num_clusters,
        num_outliers=quality.num_outliers,
        loss=mean_loss,
        nmi=quality.nmi,
        ari=quality.ari,
        intra_mean=intra,
        inter_mean=inter,
        mAP=ret.mAP,
        rank1=ret.cmc.get(1),
        rank5=ret.cmc.get(5),
        rank10=ret.cmc.get(10),
    )
    log.info("epoch %d eps=%.4f clusters=%d outliers=%d loss=%s mAP=%.4f",
             epoch, eps, report.num_clusters, report.num_outliers, mean_loss, ret.mAP)
    return state, report


def train(cfg: TrainConfig, out_dir=None) -> tuple[list[EpochReport], dict]:
    """Run every epoch; when ``out_dir`` is given, write reports.csv and checkpoint.json there."""
    state = init_state(cfg)
    reports = []
    for epoch in range(cfg.epochs):
        state, report = run_epoch(state, cfg, epoch)
        reports.append(report)
    ckpt = checkpoint(state, cfg)
    if out_dir is not None:
        out_dir = Path(out_dir)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "reports.csv").write_text(reports_csv(reports))
            (out_dir / "checkpoint.json").write_text(json.dumps(ckpt))
        except OSError as exc:
            raise OSError(f"cannot write results to {out_dir}: {exc.strerror}") from exc
    return reports, ckpt


def reports_csv(reports: list[EpochReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for r in reports:
        writer.writerow(r.row())
    return buf.getvalue()


def checkpoint(state: TrainState, cfg: TrainConfig) -> dict:
    ckpt = {
        "student": state.student.to_json_dict(),
        "teacher": state.teacher.to_json_dict(),
        "adam": state.adam.to_json_dict(),
        "epoch": state.epoch,
        "config": config_to_dict(cfg),
    }
    if state.memory is not None:
        ckpt.update(state.memory.to_json_dict())
    return ckpt
