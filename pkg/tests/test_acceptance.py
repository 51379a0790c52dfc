"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Criteria 5-9 share one reference experiment (seeds 1, 2, 3 at 64x64 with
``configs/reference.yaml``), run once per session.  The "full" ablation
variant of each seed is the reference adaptation run; the same pretrained
state seeds the mask-only and +edge variants.
"""

import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
import torch

from oracles import (
    conv2d_same_zero_pad,
    dice_count,
    flood_fill_components,
    h95_oracle,
    lesion_counts_oracle,
    seg_loss_oracle,
)
from spatial_uda import cli
from spatial_uda.config import load_config
from spatial_uda.losses import LossWeights, seg_loss
from spatial_uda.metrics import connected_components, dsc, hausdorff95, lesion_f1, lesion_recall
from spatial_uda.monitoring import MonitorState, mask_distance, should_stop, window_variance
from spatial_uda.spatial_encoding import SOBEL_X, SOBEL_Y, encode_spatial, sobel_x, sobel_y
from spatial_uda.training import TrainingLog

REFERENCE = Path(__file__).resolve().parents[1] / "configs" / "reference.yaml"
SEEDS = (1, 2, 3)


# ---------------------------------------------------------------------------
# 1-4: exactness and oracle checks


def test_criterion_1_spatial_encoding(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    sums_exact = True
    for _ in range(1000):
        h, w = rng.integers(3, 17, size=2)
        P = rng.random((h, w))
        enc = encode_spatial(P)
        J = np.ones_like(P)
        for a, b in ((0, 1), (2, 4), (3, 5)):
            sums_exact &= bool(np.array_equal(enc[a] + enc[b], J))
    worst = 0.0
    for _ in range(100):
        P = rng.random((8, 8))
        worst = max(worst, np.abs(sobel_x(P) - np.abs(conv2d_same_zero_pad(P, SOBEL_X)) / 4).max())
        worst = max(worst, np.abs(sobel_y(P) - np.abs(conv2d_same_zero_pad(P, SOBEL_Y)) / 4).max())
    elapsed = time.perf_counter() - t0
    ok = sums_exact and worst <= 1e-9 and elapsed < 5
    verdict(1, ok, f"pair sums exact={sums_exact}, sobel max err={worst:.2e}, {elapsed:.1f}s")
    assert ok


def _fd_relative_error(rng):
    n = int(rng.integers(1, 25))
    p = rng.uniform(0.05, 0.95, n)
    y = (rng.random(n) < 0.4).astype(np.float64)
    lam = float(rng.uniform(0, 1))
    s = float(rng.choice([0.5, 1.0, 2.0]))
    pt = torch.tensor(p, requires_grad=True)
    seg_loss(pt, torch.tensor(y), LossWeights(lam=lam, smooth=s)).backward()
    h = 1e-6
    worst = 0.0
    for i in range(n):
        up, down = p.copy(), p.copy()
        up[i] += h
        down[i] -= h
        fd = (seg_loss_oracle(up, y, lam, s) - seg_loss_oracle(down, y, lam, s)) / (2 * h)
        an = pt.grad[i].item()
        worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-8))
    return worst


def test_criterion_2_loss(verdict):
    t0 = time.perf_counter()
    ones = torch.ones(50, dtype=torch.float64)
    zeros = torch.zeros(50, dtype=torch.float64)
    perfect = seg_loss(ones, ones, LossWeights(lam=0.5, smooth=1.0)).item()
    empty = seg_loss(zeros, zeros, LossWeights(lam=1.0, smooth=1.0)).item()
    single = seg_loss(torch.tensor([0.5], dtype=torch.float64), torch.tensor([1.0], dtype=torch.float64),
                      LossWeights(lam=0.5, smooth=1.0)).item()
    rng = np.random.default_rng(202)
    worst = max(_fd_relative_error(rng) for _ in range(60))
    elapsed = time.perf_counter() - t0
    checks = {
        "perfect=-0.5": abs(perfect + 0.5) <= 1e-6,
        "empty=-1": abs(empty + 1.0) <= 1e-6,
        "single=-0.5423": abs(single + 0.5423) <= 1e-4,
        "grad": worst <= 1e-3,
        "time": elapsed < 30,
    }
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    verdict(2, ok, f"perfect={perfect:.6f} empty={empty:.6f} single-voxel={single:.4f} "
                   f"(stated -0.5423), fd max rel err={worst:.1e}, {elapsed:.1f}s"
                   + (f"; failed: {failed}" if failed else ""))
    assert ok, failed


def test_criterion_3_metric_oracles(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(303)
    mismatches = 0
    pairs = 0
    while pairs < 200:
        G = (rng.random((16, 16)) < rng.uniform(0.03, 0.4)).astype(np.uint8)
        P = (rng.random((16, 16)) < rng.uniform(0.03, 0.4)).astype(np.uint8)
        if not G.any() or not P.any():
            continue
        pairs += 1
        n_g, n_c, n_f = lesion_counts_oracle(G, P)
        checks = [
            abs(dsc(G, P) - dice_count(G, P)) <= 1e-12,
            abs(hausdorff95(G, P) - h95_oracle(G, P)) <= 1e-12,
            connected_components(G).count == len(flood_fill_components(G, 8)),
            connected_components(P).count == len(flood_fill_components(P, 8)),
            abs(lesion_recall(G, P) - n_c / n_g) <= 1e-12,
            abs(lesion_f1(G, P) - n_c / (n_c + n_f)) <= 1e-12,
        ]
        mismatches += checks.count(False)
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 60
    verdict(3, ok, f"{pairs} pairs, {mismatches} mismatches, {elapsed:.1f}s")
    assert ok


def test_criterion_4_monitoring(verdict):
    A0 = np.zeros((1, 8, 8), np.uint8)
    Ai = A0.copy()
    Ai[0, :3, :3] = 1
    d = mask_distance(Ai, A0)
    var = window_variance([1.0, 2.0, 3.0], 3)

    def state(history, **kw):
        s = MonitorState(np.zeros((1, 2, 2), np.uint8), **{"k": 3, "eps1": 0.1, "eps2": 6.0, "min_epochs": 0, **kw})
        s.d_history.extend(history)
        return s

    table = [
        should_stop(state([8.0, 8.2, 7.9]), 5) is True,
        should_stop(state([7.0] * 3), 5) is True,
        should_stop(state([0.0, 0.5, 0.1], eps1=math.inf, eps2=0.0, min_epochs=1), 1) is True,
        should_stop(state([7.0] * 3, eps1=0.0), 5) is False,
        should_stop(state([7.0] * 3, min_epochs=6), 5) is False,
        should_stop(state([5.0] * 3), 5) is False,
        should_stop(state([1.0, 10.0, 20.0]), 5) is False,
        should_stop(state([7.0, 7.0]), 5) is False,
    ]
    ok = d == 3.0 and var == 2 / 3 and all(table)
    verdict(4, ok, f"d={d!r}, sigma2={var!r}, truth table {sum(table)}/{len(table)}")
    assert ok


# ---------------------------------------------------------------------------
# 5-9: reference experiment


@pytest.fixture(scope="session")
def reference(tmp_path_factory):
    cfg = load_config(REFERENCE)
    out = tmp_path_factory.mktemp("reference")
    rows = []
    for seed in SEEDS:
        rows.extend(cli.run_ablation_seed(cfg, seed, out))
    return cfg, out, rows


def _full(rows):
    return [r for r in rows if r["variant"] == "full"]


@pytest.mark.slow
def test_criterion_5_uda_gain(reference, verdict):
    cfg, _, rows = reference
    full = _full(rows)
    gains = [r["final_tgt_dice"] - r["pretrain_tgt_dice"] for r in full]
    wins = sum(g >= 0.05 for g in gains)
    cpu = sum(r["pretrain_cpu_s"] + r["adapt_cpu_s"] for r in full)
    ok = wins >= 2 and cpu <= 1800
    detail = ", ".join(f"seed {r['seed']}: {r['pretrain_tgt_dice']:.3f}->{r['final_tgt_dice']:.3f}" for r in full)
    verdict(5, ok, f"{detail}; {wins}/3 seeds gain >= 0.05; {cpu / 60:.1f} CPU-min")
    assert ok


@pytest.mark.slow
def test_criterion_6_source_stability(reference, verdict):
    _, out, rows = reference
    drops = {}
    for r in _full(rows):
        log = TrainingLog.read(out / "ablate" / f"seed{r['seed']}" / "full" / "adapt_log.csv")
        epochs = [x for x in log if x["src_dice"] is not None]
        before = [x["src_dice"] for x in epochs if x["epoch"] == 0][0]
        drops[r["seed"]] = max(before - x["src_dice"] for x in epochs if x["epoch"] >= 1)
    ok = all(v <= 0.03 for v in drops.values())
    verdict(6, ok, "max source Dice drop per seed " + ", ".join(f"{s}: {v:+.3f}" for s, v in drops.items()))
    assert ok


@pytest.mark.slow
def test_criterion_7_stopping_quality(reference, verdict):
    cfg, _, rows = reference
    parts, ok = [], True
    for r in _full(rows):
        fired = r["converged"] and r["stop_epoch"] < cfg.train.max_adapt_epochs
        gap = r["best_tgt_dice"] - r["final_tgt_dice"]
        ok &= fired and gap <= 0.02
        parts.append(f"seed {r['seed']}: stop@{r['stop_epoch']} fired={fired} gap={gap:.3f}")
    verdict(7, ok, "; ".join(parts))
    assert ok


@pytest.mark.slow
def test_criterion_8_ablation_trend(reference, verdict):
    cfg, _, rows = reference
    means = {v: float(np.mean([r["final_tgt_dice"] for r in rows if r["variant"] == v])) for v in cfg.encodings}
    chain = means["mask"] <= means["edge"] <= means["full"]
    ok = means["full"] >= means["mask"]
    verdict(8, ok, f"mean target Dice mask={means['mask']:.3f} edge={means['edge']:.3f} "
                   f"full={means['full']:.3f}; monotone chain={chain} (reported only)")
    assert ok


@pytest.mark.slow
def test_criterion_9_determinism(reference, tmp_path, verdict):
    cfg, out, _ = reference
    cli.run_ablation_seed(replace(cfg, encodings=("full",)), SEEDS[0], tmp_path)
    same = []
    for rel in ("pretrain_log.csv", "full/adapt_log.csv"):
        a = (out / "ablate" / f"seed{SEEDS[0]}" / rel).read_text().splitlines()
        b = (tmp_path / "ablate" / f"seed{SEEDS[0]}" / rel).read_text().splitlines()
        same.append(a[0].startswith("# created") and a[1:] == b[1:])
    for rel in ("pretrain.ckpt", "full/final.ckpt"):
        a = (out / "ablate" / f"seed{SEEDS[0]}" / rel).read_bytes()
        b = (tmp_path / "ablate" / f"seed{SEEDS[0]}" / rel).read_bytes()
        same.append(a == b)
    ok = all(same)
    verdict(9, ok, f"seed {SEEDS[0]} rerun: logs identical={same[:2]}, checkpoints identical={same[2:]}")
    assert ok
