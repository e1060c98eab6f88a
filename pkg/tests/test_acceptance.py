"""Acceptance suite. Each test covers one numbered criterion; a summary line
per criterion is printed at the end of the pytest run."""

import time

import numpy as np
import pytest

from helpers import unit_rows
from oracles import average_precision_reference, dbscan_reference, same_partition
from dccc.cli import main
from dccc.clustering import SCHEDULER_KINDS, DbscanParams, EpsSchedule, dbscan, eps_at
from dccc.config import TrainConfig, write_config
from dccc.distance import DistanceMatrix
from dccc.losses import cluster_nce, label_smooth_soft_loss
from dccc.memory import ClusterMemory, batch_update, dynamic_weights, init_memory
from dccc.clustering import PseudoLabeling
from dccc.metrics import evaluate_retrieval
from dccc.sweep import COMPONENT_GRID, SweepSpec, run_sweep, summary
from dccc.trainer import train

SEEDS = (0, 1, 2, 3, 4)


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)


def fd_grad(fn, q, h=1e-5):
    g = np.zeros_like(q)
    for idx in np.ndindex(q.shape):
        up, down = q.copy(), q.copy()
        up[idx] += h
        down[idx] -= h
        g[idx] = (fn(up) - fn(down)) / (2 * h)
    return g


@pytest.mark.criterion(1)
def test_gradient_suite(detail):
    start = time.perf_counter()
    worst = {"cluster_nce": 0.0, "label_smooth_soft_loss": 0.0}
    for seed in range(25):
        rng = np.random.default_rng(1000 + seed)
        q_s, q_t, mem = unit_rows(rng, 4, 8), unit_rows(rng, 4, 8), unit_rows(rng, 5, 8)
        labels = rng.integers(0, 5, 4)
        nce = cluster_nce(q_s, labels, mem)
        num = fd_grad(lambda x: cluster_nce(x, labels, mem).loss, q_s)
        worst["cluster_nce"] = max(worst["cluster_nce"], rel_err(nce.grad, num))
        lss = label_smooth_soft_loss(q_s, q_t, labels, mem)
        num = fd_grad(lambda x: label_smooth_soft_loss(x, q_t, labels, mem).loss, q_s)
        worst["label_smooth_soft_loss"] = max(worst["label_smooth_soft_loss"], rel_err(lss.grad, num))
    elapsed = time.perf_counter() - start
    detail.append("25 instances each, worst relative error "
                  + ", ".join(f"{k} {v:.2e}" for k, v in worst.items()) + f", {elapsed:.2f} s")
    assert all(v <= 1e-4 for v in worst.values())
    assert elapsed < 5


@pytest.mark.criterion(2)
def test_dbscan_oracle(detail):
    start = time.perf_counter()
    for seed in range(100):
        rng = np.random.default_rng(2000 + seed)
        n = int(rng.integers(2, 41))
        pts = rng.uniform(0, 4, size=(n, 2))
        d = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
        eps, ms = float(rng.uniform(0.1, 1.2)), int(rng.integers(1, 8))
        got = dbscan(DistanceMatrix(d, "euclidean"), DbscanParams(eps, ms)).assignment
        ref, _ = dbscan_reference(d, eps, ms)
        assert np.array_equal(got == -1, ref == -1), f"outliers differ, seed {seed}"
        assert same_partition(got, ref) and same_partition(ref, got), f"partition differs, seed {seed}"
    elapsed = time.perf_counter() - start
    detail.append(f"100 instances match the closure reference, {elapsed:.2f} s")
    assert elapsed < 10


@pytest.mark.criterion(3)
def test_scheduler_contract(detail):
    base = TrainConfig()
    # the desk half-life and a slow one that keeps eps above the floor for ~70 epochs
    for kind, half_life in [(k, h) for h in (base.eps_half_life, 69.0) for k in SCHEDULER_KINDS]:
        s = EpsSchedule.from_half_life(kind, base.eps_begin, half_life, base.eps_floor,
                                       base.eps_step_size)
        values = np.array([eps_at(s, e) for e in range(200)])
        assert values[0] == base.eps_begin
        assert np.all(np.diff(values) <= 0)
        assert values.min() >= s.floor
        if kind == "expo":
            closed = base.eps_begin * s.decay ** np.arange(200)
            free = closed > s.floor
            assert np.max(np.abs(values[free] - closed[free])) <= 1e-12
            detail.append(f"expo (half-life {half_life}) matches the closed form on "
                          f"{free.sum()} epochs before the floor")
        detail.append(f"{kind} (half-life {half_life}): eps(0)={values[0]}, "
                      f"eps(199)={values[-1]:.6f}, floor {s.floor}")


@pytest.mark.criterion(4)
def test_memory_laws(detail):
    rng = np.random.default_rng(4000)
    worst_sum = 0.0
    for _ in range(1000):
        n, d = int(rng.integers(1, 20)), int(rng.integers(2, 16))
        w = dynamic_weights(unit_rows(rng, 1, d)[0], unit_rows(rng, n, d), float(rng.uniform(0.01, 1)))
        worst_sum = max(worst_sum, abs(w.sum() - 1))
    assert worst_sum <= 1e-9

    worst_avg = worst_hard = worst_norm = 0.0
    for seed in range(50):
        rng = np.random.default_rng(4100 + seed)
        feats = unit_rows(rng, 40, 8)
        labels = PseudoLabeling(rng.integers(0, 5, 40), 5)
        if len(np.unique(labels.assignment)) < 5:
            continue
        mems = {mode: init_memory(feats, labels, 0.1, mode, 0.09)
                for mode in ("instance", "avg", "hardest", "dynamic")}
        for _ in range(10):
            idx = rng.choice(40, 12, replace=False)
            z, y = unit_rows(rng, 12, 8), labels.assignment[idx]
            for mode, m in mems.items():
                mems[mode] = batch_update(m, z, y)
                worst_norm = max(worst_norm, np.abs(np.linalg.norm(mems[mode].vectors, axis=1) - 1).max())
            base = mems["dynamic"].vectors
            big = batch_update(ClusterMemory(base, 0.1, "dynamic", 1e9), z, y).vectors
            avg = batch_update(ClusterMemory(base, 0.1, "avg"), z, y).vectors
            small = batch_update(ClusterMemory(base, 0.1, "dynamic", 1e-6), z, y).vectors
            hard = batch_update(ClusterMemory(base, 0.1, "hardest"), z, y).vectors
            worst_avg = max(worst_avg, np.abs(big - avg).max())
            worst_hard = max(worst_hard, np.abs(small - hard).max())
    detail.append(f"weight sum error {worst_sum:.2e}, large tau vs avg {worst_avg:.2e}, "
                  f"small tau vs hardest {worst_hard:.2e}, unit-norm error {worst_norm:.2e}")
    assert worst_avg <= 1e-6 and worst_hard <= 1e-6 and worst_norm <= 1e-9


@pytest.mark.criterion(5)
def test_loss_reduction(detail):
    worst_val = worst_grad = 0.0
    for seed in range(50):
        rng = np.random.default_rng(5000 + seed)
        q_s, q_t, mem = unit_rows(rng, 4, 8), unit_rows(rng, 4, 8), unit_rows(rng, 5, 8)
        labels = rng.integers(0, 5, 4)
        a = label_smooth_soft_loss(q_s, q_t, labels, mem, 0.05, 0.0)
        b = cluster_nce(q_s, labels, mem, 0.05)
        worst_val = max(worst_val, abs(a.loss - b.loss))
        worst_grad = max(worst_grad, np.abs(a.grad - b.grad).max())
    detail.append(f"50 instances, max value gap {worst_val:.2e}, max gradient gap {worst_grad:.2e}")
    assert worst_val <= 1e-10 and worst_grad <= 1e-10


@pytest.mark.criterion(6)
def test_retrieval_oracle(detail):
    q = np.array([[1.0, 0.0]])
    g = np.array([[1.0, 0.0], [0.9, np.sqrt(0.19)], [0.5, np.sqrt(0.75)]])
    hand = evaluate_retrieval(q, g, [0], [0, 1, 0], [0], [1, 1, 1]).mAP
    assert abs(hand - 0.8333) <= 1e-4

    worst = 0.0
    for seed in range(200):
        rng = np.random.default_rng(6000 + seed)
        nq, ng = int(rng.integers(1, 5)), int(rng.integers(2, 12))
        f = rng.integers(-2, 3, (nq + ng, 3)).astype(float)
        f[np.all(f == 0, axis=1), 0] = 1.0
        f /= np.linalg.norm(f, axis=1, keepdims=True)
        ids, cams = rng.integers(0, 3, nq + ng), rng.integers(0, 2, nq + ng)
        r = evaluate_retrieval(f[:nq], f[nq:], ids[:nq], ids[nq:], cams[:nq], cams[nq:])
        sims = f[:nq] @ f[nq:].T
        refs = [average_precision_reference(sims[j], ids[j], cams[j], ids[nq:], cams[nq:]) for j in range(nq)]
        refs = [x for x in refs if x[0] is not None]
        assert r.num_valid_queries == len(refs)
        if not refs:
            continue
        worst = max(worst, abs(r.mAP - np.mean([x[0] for x in refs])))
        for k in (1, 5, 10):
            worst = max(worst, abs(r.cmc[k] - np.mean([x[1] <= k for x in refs])))
    detail.append(f"hand AP {hand:.6f}, 200 instances max gap {worst:.2e}")
    assert worst <= 1e-12


@pytest.mark.criterion(7)
def test_end_to_end_convergence(detail):
    finals, first_intra, last_intra, first_inter, last_inter, times = [], [], [], [], [], []
    for seed in SEEDS:
        start = time.perf_counter()
        reports, _ = train(TrainConfig(seed=seed))
        times.append(time.perf_counter() - start)
        finals.append(reports[-1])
        first_intra.append(reports[0].intra_mean)
        last_intra.append(reports[-1].intra_mean)
        first_inter.append(reports[0].inter_mean)
        last_inter.append(reports[-1].inter_mean)
    ari = np.median([r.ari for r in finals])
    mAP = np.median([r.mAP for r in finals])
    trend = [a > b and c < d for a, b, c, d in zip(first_intra, last_intra, first_inter, last_inter)]
    detail.append(f"median final ARI {ari:.4f}, median final mAP {mAP:.4f}, slowest run {max(times):.1f} s")
    detail.append(f"intra {np.median(first_intra):.4f} -> {np.median(last_intra):.4f}, "
                  f"inter {np.median(first_inter):.4f} -> {np.median(last_inter):.4f}, "
                  f"trend holds for {sum(trend)}/{len(trend)} seeds")
    assert ari >= 0.8 and mAP >= 0.85
    assert np.median(last_intra) < np.median(first_intra)
    assert np.median(last_inter) > np.median(first_inter)
    assert max(times) <= 120


GRIDS = {
    "components": COMPONENT_GRID,
    "scheduler_kind": ("none", "step", "linear", "expo"),
    "memory_mode": ("instance", "avg", "hardest", "dynamic"),
    "loss_kind": ("cluster_nce", "lss", "ce_plus_lss"),
    "tau_w": tuple(f"{v:.2f}" for v in np.arange(0.01, 0.14, 0.02)),
    "mu_s": ("0", "0.1", "0.3", "0.5", "0.7", "0.9"),
    "step_size": ("1", "5", "10", "15"),
}


@pytest.mark.criterion(8)
def test_ablation_harness(detail, tmp_path):
    assert len(GRIDS["components"]) == 8 and len(GRIDS["tau_w"]) == 7
    base = TrainConfig()
    failures = []
    for axis, values in GRIDS.items():
        results, text = run_sweep(SweepSpec(axis, values, base, SEEDS))
        (tmp_path / f"{axis}.csv").write_text(text)
        assert len(results) == len(values) * len(SEEDS)
        cells = []
        for v in values:
            s = summary(results, v)
            ari = s["ari"] if s["ari"] is not None else float("nan")
            cells.append(f"{v}: mAP {s['map']:.3f} ARI {ari:.3f}")
            if s["ok"] != s["runs"] or not ari >= 0.6:
                failures.append(f"{axis}={v} ({s['ok']}/{s['runs']} ok, median ARI {ari})")
        detail.append(f"{axis} | " + "; ".join(cells))
    if failures:
        detail.append("below bar: " + ", ".join(failures))
    assert not failures


@pytest.mark.criterion(9)
def test_determinism(detail, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(write_config(TrainConfig()))
    for run in ("a", "b"):
        assert main(["train", "--config", str(cfg), "--out-dir", str(tmp_path / run)]) == 0
        assert main(["sweep", "--axis", "memory_mode", "--values", "avg,dynamic", "--config", str(cfg),
                     "--seeds", "0,1", "--out", str(tmp_path / run / "sweep.csv")]) == 0
    for name in ("reports.csv", "checkpoint.json", "sweep.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
    detail.append("train and sweep outputs byte-identical across repeated invocations")
