"""The ten acceptance gates, one test per numbered criterion.

Each test prints a single pass/fail line (streamed live even under pytest's
capture) with the measured quantities pinned next to their tolerances. Run
``pytest tests/test_acceptance.py -v`` for the gate alone; the trend tests
(06, 07) train many small models and dominate the runtime.
"""

import json
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from lart.cli import main as cli_main
from lart.evaluation import (ArmSpec, InferenceConfig, average_precision,
                             evaluate, infer_poi, match_detections,
                             pooled_probability, run_arm)
from lart.scenegen import GeneratorConfig, generate_dataset
from lart.seeds import substream
from lart.tokens import (TokenConfig, apply_mask_tokens, assemble_grid,
                         build_attention, positional_encoding,
                         positional_encoding_grid, sample_grid_indices)
from lart.tracklets import TokenGrid  # re-exported? see import fix below
from lart.training import TrainConfig, lr_at, train_stage
from lart.transformer import (ModelConfig, bce_loss_and_grad, init_parameters,
                              model_backward, model_forward)


def _line(capsys, num: int, name: str, ok: bool, detail: str):
    with capsys.disabled():
        print(f"\nACCEPTANCE {num:02d} {name}: "
              f"{'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {num} {name}: {detail}"


# ---------------------------------------------------------------------------
# shared tiny-profile fixtures
# ---------------------------------------------------------------------------

TINY_M = ModelConfig(layers=4, heads=4, d_model=64, dropout=0.0,
                     drop_path=0.0, n_classes=12)
TINY_T = TokenConfig(d_model=64, n_tracks=3, window=16, pose_embed=64,
                     appearance_embed=0, mask_ratio=0.0)


def _noiseless_clips(n=4):
    # constant per-track labels: no pairs, no solo programs, no occlusion
    gcfg = GeneratorConfig(n_people=3, num_frames=16, fps=4,
                           pair_fraction=0.0, solo_motion_rate=0.0,
                           carry_rate=0.5, phone_rate=0.3, seed=5)
    return generate_dataset(gcfg, n)


def _tiny_grid(params):
    clips = _noiseless_clips(1)
    rng = substream(0, "acceptance-grid")
    poi, sup, start = sample_grid_indices(clips[0], TINY_T, rng)
    g = assemble_grid(clips[0], poi, sup, TINY_T, params, start)
    return apply_mask_tokens(g, 0.25, params, TINY_T, rng)


# ---------------------------------------------------------------------------
# 1. gradient correctness
# ---------------------------------------------------------------------------


def test_01_gradient_correctness(capsys):
    t0 = time.perf_counter()
    params = init_parameters(TINY_M, TINY_T, 0)
    g = _tiny_grid(params)

    def loss_of(p):
        logits = model_forward(p, TINY_M, TINY_T, [g], train=True,
                               rng=substream(9, "fd"))
        return bce_loss_and_grad(logits, g.labels[None], g.loss_mask[None])[0]

    logits, cache = model_forward(params, TINY_M, TINY_T, [g], train=True,
                                  rng=substream(9, "fd"), want_cache=True)
    _, d_logits = bce_loss_and_grad(logits, g.labels[None], g.loss_mask[None])
    grads = model_backward(d_logits, cache)

    eps = 1e-6
    rng = np.random.default_rng(404)
    worst = 0.0
    n_checked = 0

    def check(n, a, f):
        nonlocal worst, n_checked
        err = abs(a - f) / max(abs(a), abs(f), 1e-300)
        ok = abs(a - f) <= max(1e-4 * max(abs(a), abs(f)), 1e-6)
        worst = max(worst, abs(a - f) / max(1e-4 * max(abs(a), abs(f)), 1e-6))
        n_checked += 1
        assert ok, f"{n}: analytic {a:.3e} vs fd {f:.3e} (rel {err:.2e})"

    for name in sorted(params):
        p = params[name]
        flat = p.reshape(-1)
        g_flat = grads[name].reshape(-1)
        if p.size <= 256:
            idx = np.arange(p.size)            # small tensors: every element
        else:
            idx = rng.choice(p.size, 40, replace=False)
        for i in idx:
            keep = flat[i]
            flat[i] = keep + eps
            up = loss_of(params)
            flat[i] = keep - eps
            dn = loss_of(params)
            flat[i] = keep
            check(f"{name}[{i}]", g_flat[i], (up - dn) / (2 * eps))
        # a dense random direction touches every remaining element
        d = rng.standard_normal(p.size)
        d /= np.linalg.norm(d)
        params[name] = (flat + eps * d).reshape(p.shape)
        up = loss_of(params)
        params[name] = (flat - eps * d).reshape(p.shape)
        dn = loss_of(params)
        params[name] = flat.reshape(p.shape)
        check(f"{name}[dir]", float(g_flat @ d), (up - dn) / (2 * eps))

    dt = time.perf_counter() - t0
    _line(capsys, 1, "gradient-correctness", dt < 120.0,
          f"{n_checked} checks incl. every element of small tensors, "
          f"worst err {worst:.2f}x tolerance, {dt:.0f}s < 120s")


# ---------------------------------------------------------------------------
# 2. masking isolation
# ---------------------------------------------------------------------------


def test_02_masking_isolation(capsys):
    t0 = time.perf_counter()
    mcfg = ModelConfig(layers=2, heads=2, d_model=16, dropout=0.0,
                       drop_path=0.0, n_classes=4)
    tcfg = TokenConfig(d_model=16, n_tracks=3, window=8, pose_embed=16,
                       appearance_embed=0, mask_ratio=0.0)
    params = init_parameters(mcfg, tcfg, 1)
    s = tcfg.n_tracks * tcfg.window
    rng = np.random.default_rng(2002)
    violations = 0

    for trial in range(1000):
        present = rng.random(s) < 0.6
        present[rng.integers(0, s)] = True
        masked = np.zeros(s, dtype=bool)
        vis_idx = np.flatnonzero(present)
        n_mask = max(1, int(0.3 * vis_idx.size))
        mask_at = rng.choice(vis_idx, n_mask, replace=False)
        masked[mask_at] = True
        present[mask_at] = False
        if not present.any():
            present[rng.choice(np.flatnonzero(~masked))] = True
        grid = _make_grid(rng, s, mcfg, present, masked, tcfg)
        base = model_forward(params, mcfg, tcfg, [grid], train=False)

        kind = trial % 3
        poked = grid.tokens.copy()
        if kind == 0:      # gap poke: nothing else may move
            gaps = np.flatnonzero(~present & ~masked)
            if gaps.size == 0:
                continue
            j = int(rng.choice(gaps))
            poked[j] += rng.standard_normal(poked.shape[1])
            out = model_forward(params, mcfg, tcfg,
                                [replace(grid, tokens=poked)], train=False)
            keep = np.ones(s, dtype=bool)
            keep[j] = False
            if not np.array_equal(base[0, keep], out[0, keep]):
                violations += 1
        elif kind == 1:    # mask-content poke: non-mask tokens frozen
            j = int(rng.choice(np.flatnonzero(masked)))
            poked[j] += rng.standard_normal(poked.shape[1])
            out = model_forward(params, mcfg, tcfg,
                                [replace(grid, tokens=poked)], train=False)
            if not np.array_equal(base[0, ~masked], out[0, ~masked]):
                violations += 1
        else:              # present poke: every masked token must move
            j = int(rng.choice(np.flatnonzero(present)))
            poked[j] += 1.0 + rng.random(poked.shape[1])
            out = model_forward(params, mcfg, tcfg,
                                [replace(grid, tokens=poked)], train=False)
            moved = ~np.all(base[0] == out[0], axis=-1)
            if not moved[masked].all():
                violations += 1

    dt = time.perf_counter() - t0
    _line(capsys, 2, "masking-isolation", violations == 0,
          f"1000 randomized trials, {violations} violations, {dt:.0f}s")


def _make_grid(rng, s, mcfg, present, masked, tcfg):
    from lart.tokens import TokenGrid

    tokens = rng.standard_normal((s, mcfg.d_model))
    tokens[~present & ~masked] = 0.0
    labels = np.zeros((s, mcfg.n_classes))
    return TokenGrid(tokens=tokens, present=present, masked=masked,
                     attention=build_attention(
                         present.reshape(tcfg.n_tracks, tcfg.window),
                         masked.reshape(tcfg.n_tracks, tcfg.window)),
                     labels=labels, loss_mask=present.copy(),
                     slot_tracks=np.arange(tcfg.n_tracks),
                     window_start=0)


# ---------------------------------------------------------------------------
# 3. evaluator oracle equivalence
# ---------------------------------------------------------------------------


def _oracle_match(boxes, scores, gt, thr):
    """Exhaustive-assignment reference: full IoU table, score-ordered claims."""
    def iou(a, b):
        ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
        iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
        inter = ix * iy
        ua = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
        return inter / ua if ua > 0 else 0.0

    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    claimed = set()
    tp = [False] * len(scores)
    for i in order:
        best, best_iou = None, thr
        for j in range(len(gt)):
            if j in claimed:
                continue
            v = iou(boxes[i], gt[j])
            if v > best_iou or (v == best_iou and best is None and v >= thr):
                if v >= thr and (best is None or v > best_iou
                                 or (v == best_iou and j < best)):
                    best, best_iou = j, v
        if best is not None:
            claimed.add(best)
            tp[i] = True
    return tp


def _oracle_ap(scores, tp, n_pos):
    """Brute force: every threshold, literal all-point interpolation."""
    if n_pos == 0:
        return None
    pts = []
    for tau in sorted(set(scores), reverse=True):
        sel = [i for i, s in enumerate(scores) if s >= tau]
        tps = sum(1 for i in sel if tp[i])
        pts.append((tps / n_pos, tps / len(sel)))
    ap = 0.0
    prev_r = 0.0
    for r, _ in sorted(pts):
        if r <= prev_r:
            continue
        p_env = max(p for rr, p in pts if rr >= r)
        ap += (r - prev_r) * p_env
        prev_r = r
    return ap


def test_03_evaluator_oracle_equivalence(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(303)
    worst = 0.0
    n_ap = 0
    for _ in range(500):
        n_classes = int(rng.integers(1, 6))
        per = max(1, 40 // n_classes)
        for _ in range(n_classes):
            n_det = int(rng.integers(0, per + 1))
            n_gt = int(rng.integers(0, 7))
            boxes = _rand_boxes(rng, n_det)
            gt = _rand_boxes(rng, n_gt)
            scores = rng.random(n_det)
            if rng.random() < 0.5 and n_det:
                scores = np.round(scores, 1)  # force score ties
            tp = match_detections(boxes, scores, gt, iou_threshold=0.5)
            ref_tp = _oracle_match(boxes.tolist(), scores.tolist(),
                                   gt.tolist(), 0.5)
            assert tp.tolist() == ref_tp, "matcher disagrees with oracle"
            ap = average_precision(scores.tolist(), tp.tolist(), n_gt)
            ref = _oracle_ap(scores.tolist(), ref_tp, n_gt)
            if ref is None:
                assert ap is None
                continue
            n_ap += 1
            worst = max(worst, abs(ap - ref))
            assert abs(ap - ref) <= 1e-12, f"AP {ap} vs oracle {ref}"
    dt = time.perf_counter() - t0
    _line(capsys, 3, "evaluator-oracle-equivalence", True,
          f"500 instances, {n_ap} defined APs, worst |dAP| "
          f"{worst:.2e} <= 1e-12, matcher exact, {dt:.0f}s")


def _rand_boxes(rng, n):
    x1 = rng.random(n) * 0.7
    y1 = rng.random(n) * 0.7
    w = 0.1 + rng.random(n) * 0.3
    h = 0.1 + rng.random(n) * 0.3
    return np.stack([x1, y1, x1 + w, y1 + h], axis=1) if n else np.zeros((0, 4))


# ---------------------------------------------------------------------------
# 4. positional-encoding contract
# ---------------------------------------------------------------------------


def test_04_positional_encoding_contract(capsys):
    pe = positional_encoding_grid(8, 512, 64)       # (slots, times, D)
    flat = pe.reshape(-1, 64)
    n_unique = np.unique(flat, axis=0).shape[0]
    zero_one = positional_encoding(0, 0, 64)
    quarter = 16
    pattern_ok = (np.all(zero_one[:quarter] == 0.0)
                  and np.all(zero_one[quarter:2 * quarter] == 1.0)
                  and np.all(zero_one[2 * quarter:3 * quarter] == 0.0)
                  and np.all(zero_one[3 * quarter:] == 1.0))
    spot = positional_encoding(3, 7, 8)
    s3 = abs(spot[0] - math.sin(3.0))
    s7 = abs(spot[4] - math.sin(7.0))
    ok = n_unique == 8 * 512 and pattern_ok and s3 <= 1e-9 and s7 <= 1e-9
    _line(capsys, 4, "positional-encoding-contract", ok,
          f"{n_unique}/4096 distinct, 0/1 pattern {'exact' if pattern_ok else 'BROKEN'}, "
          f"|PE-sin(3)| {s3:.1e}, |PE-sin(7)| {s7:.1e} <= 1e-9")


# ---------------------------------------------------------------------------
# 5. overfit sanity
# ---------------------------------------------------------------------------


def test_05_overfit_sanity(capsys):
    t0 = time.perf_counter()
    clips = _noiseless_clips(4)
    cfg = TrainConfig(total_epochs=500, warmup_epochs=5, batch_size=4,
                      base_lr=3e-3, mask_ratio=0.0, layer_wise_decay=None,
                      drop_path=0.0, seed=0)
    params = init_parameters(TINY_M, TINY_T, 0)
    params, report = train_stage(clips, params, TINY_M, TINY_T, cfg,
                                 "memorize", "labels")
    res = evaluate(clips, params, TINY_M, TINY_T,
                   InferenceConfig(n_tracks=3, pooling_width=12, seed=0))
    dt = time.perf_counter() - t0
    loss = report.epoch_losses[-1]
    ok = loss < 0.05 and res.map == 1.0 and dt < 600.0
    _line(capsys, 5, "overfit-sanity", ok,
          f"4 clips, 500 epochs: loss {loss:.5f} < 0.05, "
          f"mAP {res.map} == 1.0, {dt:.0f}s < 600s")


# ---------------------------------------------------------------------------
# 6. end-to-end trend: appearance-only < appearance+pose
# ---------------------------------------------------------------------------


def test_06_trend_pose_beats_appearance_only(capsys):
    t0 = time.perf_counter()
    gcfg = GeneratorConfig(n_people=3, num_frames=36, fps=12, seed=60,
                           with_appearance=True, appearance_sigma=0.5)
    clips = generate_dataset(gcfg, 500)
    train, ev = clips[:400], clips[400:]
    mcfg = ModelConfig(layers=2, heads=4, d_model=64, dropout=0.0,
                       drop_path=0.0, n_classes=12)
    cfg = TrainConfig(total_epochs=10, warmup_epochs=1, batch_size=16,
                      base_lr=3e-3, mask_ratio=0.0, layer_wise_decay=None,
                      drop_path=0.0)
    arms = [ArmSpec("appearance_only", 0, 64, 3), ArmSpec("fused", 32, 32, 3)]
    gaps = {}
    for seed in (0, 1, 2):
        maps = {}
        for arm in arms:
            res, _ = run_arm(arm, train, ev, mcfg, cfg, seed)
            maps[arm.name] = res.map
        gaps[seed] = maps["fused"] - maps["appearance_only"]
    dt = time.perf_counter() - t0
    ok = all(g > 0 for g in gaps.values()) and dt < 7200.0
    _line(capsys, 6, "trend-pose-beats-appearance-only", ok,
          "fused minus appearance-only mAP per seed: "
          + ", ".join(f"s{s}: {g:+.4f}" for s, g in gaps.items())
          + f"; all > 0, {dt:.0f}s < 7200s")


# ---------------------------------------------------------------------------
# 7. multi-person trend over N
# ---------------------------------------------------------------------------


def test_07_trend_supporting_tracks(capsys):
    t0 = time.perf_counter()
    gcfg = GeneratorConfig(n_people=5, num_frames=48, fps=12, seed=70,
                           pair_fraction=0.9, solo_motion_rate=0.5)
    clips = generate_dataset(gcfg, 160)
    train, ev = clips[:120], clips[120:]
    mcfg = ModelConfig(layers=2, heads=4, d_model=64, dropout=0.0,
                       drop_path=0.0, n_classes=12)
    cfg = TrainConfig(total_epochs=10, warmup_epochs=1, batch_size=16,
                      base_lr=3e-3, mask_ratio=0.0, layer_wise_decay=None,
                      drop_path=0.0)
    seeds = (0, 1, 2)
    ns = (1, 2, 3, 4, 5)
    maps = np.zeros((len(seeds), len(ns)))
    pis = np.zeros((len(seeds), len(ns)))
    for si, seed in enumerate(seeds):
        for ni, n in enumerate(ns):
            arm = ArmSpec(f"pose_n{n}", 64, 0, n)
            res, _ = run_arm(arm, train, ev, mcfg, cfg, seed)
            maps[si, ni] = res.map
            pis[si, ni] = res.category_means["PI"]
    med = np.median(maps, axis=0)
    std = np.std(maps, axis=0)
    inversions = []
    for i in range(len(ns) - 1):
        if med[i + 1] < med[i]:
            inversions.append((ns[i + 1], med[i] - med[i + 1],
                               max(std[i], std[i + 1])))
    mono_ok = len(inversions) <= 1 and all(d <= s for _, d, s in inversions)
    pi_ok = all(pis[si, 0] < pis[si, 1:].min() for si in range(len(seeds)))
    dt = time.perf_counter() - t0
    detail = ("median mAP over N=1..5: "
              + ", ".join(f"{m:.4f}" for m in med)
              + f"; inversions {[(n, round(d, 4)) for n, d, _ in inversions]}"
              + "; PI N=1 vs min N>=2 per seed: "
              + ", ".join(f"{pis[si, 0]:.3f}<{pis[si, 1:].min():.3f}"
                          for si in range(len(seeds)))
              + f"; {dt:.0f}s")
    _line(capsys, 7, "trend-supporting-tracks", mono_ok and pi_ok, detail)


# ---------------------------------------------------------------------------
# 8. recipe fidelity
# ---------------------------------------------------------------------------


def test_08_recipe_fidelity(capsys, tmp_path):
    # schedule pins first: warmup midpoint, peak, terminal zero, exactly
    cfg = TrainConfig()
    spe = 100
    mid = lr_at(250, spe, cfg)
    peak = lr_at(5 * spe, spe, cfg)
    last = lr_at(30 * spe, spe, cfg)
    sched_ok = mid == 0.5e-3 and peak == 1e-3 and last == 0.0

    # manifests from default-recipe CLI runs (model shrunk, recipe untouched)
    (tmp_path / "g.cfg").write_text(
        "gen.n_clips = 4\ngen.n_people = 2\ngen.num_frames = 12\n"
        "gen.fps = 4\ngen.seed = 8\ngen.with_teacher = true\n")
    (tmp_path / "t.cfg").write_text(
        "model.layers = 1\nmodel.heads = 2\nmodel.d_model = 16\n"
        "tokens.n_tracks = 2\ntokens.window = 12\n")
    assert cli_main(["gen", "--config", str(tmp_path / "g.cfg"),
                     "--out", str(tmp_path / "d")]) == 0
    assert cli_main(["pretrain", "--config", str(tmp_path / "t.cfg"),
                     "--data", str(tmp_path / "d"),
                     "--out", str(tmp_path / "pre")]) == 0
    assert cli_main(["finetune", "--config", str(tmp_path / "t.cfg"),
                     "--data", str(tmp_path / "d"),
                     "--checkpoint", str(tmp_path / "pre" / "checkpoint.ckpt"),
                     "--out", str(tmp_path / "fine")]) == 0
    pre = json.load(open(tmp_path / "pre" / "manifest.json"))["config"]["train"]
    fin = json.load(open(tmp_path / "fine" / "manifest.json"))["config"]["train"]
    shared = dict(betas=[0.9, 0.95], weight_decay=0.05, warmup_epochs=5,
                  base_lr=1e-3, batch_size=64, total_epochs=30)
    man_ok = (all(pre[k] == v for k, v in shared.items())
              and all(fin[k] == v for k, v in shared.items())
              and pre["mask_ratio"] == 0.4
              and pre["layer_wise_decay"] is None
              and fin["mask_ratio"] == 0.0
              and fin["layer_wise_decay"] == 0.9
              and fin["drop_path"] == 0.1)
    _line(capsys, 8, "recipe-fidelity", sched_ok and man_ok,
          f"schedule mid {mid} peak {peak} end {last} exact; "
          f"both manifests carry the default recipe verbatim: {man_ok}")


# ---------------------------------------------------------------------------
# 9. determinism end to end
# ---------------------------------------------------------------------------


def test_09_pipeline_determinism(capsys, tmp_path):
    t0 = time.perf_counter()
    (tmp_path / "g.cfg").write_text(
        "gen.n_clips = 4\ngen.n_people = 2\ngen.num_frames = 12\n"
        "gen.fps = 4\ngen.seed = 21\ngen.with_teacher = true\n")
    (tmp_path / "t.cfg").write_text(
        "model.layers = 1\nmodel.heads = 2\nmodel.d_model = 32\n"
        "tokens.n_tracks = 2\ntokens.window = 12\n"
        "train.total_epochs = 2\ntrain.warmup_epochs = 1\n"
        "train.batch_size = 4\ntrain.seed = 13\n")

    def run(tag):
        base = tmp_path / tag
        assert cli_main(["gen", "--config", str(tmp_path / "g.cfg"),
                         "--out", str(base / "d")]) == 0
        assert cli_main(["pretrain", "--config", str(tmp_path / "t.cfg"),
                         "--data", str(base / "d"),
                         "--out", str(base / "pre")]) == 0
        assert cli_main(["finetune", "--config", str(tmp_path / "t.cfg"),
                         "--data", str(base / "d"),
                         "--checkpoint", str(base / "pre" / "checkpoint.ckpt"),
                         "--out", str(base / "fine")]) == 0
        assert cli_main(["eval", "--checkpoint",
                         str(base / "fine" / "checkpoint.ckpt"),
                         "--data", str(base / "d"), "--n-tracks", "2",
                         "--out", str(base / "ev")]) == 0
        return base

    a = run("a")
    b = run("b")
    compared = []
    for rel in ("d/clip_00000.clip", "d/clip_00003.clip",
                "pre/checkpoint.ckpt", "pre/train_report.json",
                "fine/checkpoint.ckpt", "fine/train_report.json",
                "fine/train_report.csv", "ev/eval.csv", "ev/eval.txt",
                "ev/eval.json"):
        same = (a / rel).read_bytes() == (b / rel).read_bytes()
        compared.append((rel, same))
    dt = time.perf_counter() - t0
    bad = [r for r, same in compared if not same]
    _line(capsys, 9, "pipeline-determinism", not bad,
          f"{len(compared)} artifacts byte-compared across two full runs"
          + (f", mismatches: {bad}" if bad else ", all identical")
          + f", {dt:.0f}s")


# ---------------------------------------------------------------------------
# 10. pooling contract
# ---------------------------------------------------------------------------


def test_10_pooling_contract(capsys):
    clips = generate_dataset(
        GeneratorConfig(n_people=2, num_frames=30, fps=4, seed=3), 1)
    mcfg = ModelConfig(layers=1, heads=2, d_model=32, dropout=0.0,
                       drop_path=0.0, n_classes=12)
    tcfg = TokenConfig(d_model=32, n_tracks=2, window=30, pose_embed=32,
                       appearance_embed=0, mask_ratio=0.0)
    params = init_parameters(mcfg, tcfg, 0)
    tid = clips[0].track_ids()[0]
    pred = infer_poi(clips[0], tid, params, mcfg, tcfg,
                     InferenceConfig(n_tracks=2, pooling_width=12, seed=0))
    anchor = 16                      # interior: full 12-frame window fits
    lo = anchor - 12 // 2
    manual = np.array([sum(pred.probs[lo + r, k] for r in range(12)) / 12.0
                       for k in range(pred.probs.shape[1])])
    pooled = pooled_probability(pred.probs, anchor, 12)
    err = float(np.max(np.abs(pooled - manual)))
    one = pooled_probability(pred.probs, anchor, 1)
    center_ok = np.array_equal(one, pred.probs[anchor])
    ok = err <= 1e-12 and center_ok
    _line(capsys, 10, "pooling-contract", ok,
          f"pooled vs mean of 12 per-frame sigmoids: max err {err:.2e} "
          f"<= 1e-12; width-1 equals center frame: {center_ok}")
