"""Inference and protocol scoring.

Inference builds a full-clip token grid per person of interest (slot 0),
infills tracking gaps with the mask token, runs the encoder once, and turns
per-frame logits into per-class sigmoids. Scores at an annotated frame are
the arithmetic mean of the per-frame probabilities over a pooling window
centered there (clamped at clip edges) — mean of sigmoids, never sigmoid of
the mean.

Scoring follows the frame-level detection protocol: per annotated frame and
class, predictions are greedily matched to ground-truth boxes in descending
score order at IoU >= 0.5; average precision uses all-point interpolation
(precision envelope) with threshold semantics for tied scores. Macro mAP
averages the defined per-class APs; classes with no positives stay
undefined. Category means (PM / OM / PI) recompute from per-class APs.
"""

import json
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .scenegen import anchor_frames
from .seeds import substream
from .tokens import TokenConfig, assemble_grid, infill_gaps
from .tracklets import InvariantError, PredictionTrack
from .transformer import ModelConfig, model_forward


@dataclass(frozen=True)
class InferenceConfig:
    n_tracks: int = 5
    pooling_width: int = 12
    anchor_hz: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_tracks < 1 or self.pooling_width < 1:
            raise InvariantError("n_tracks and pooling_width must be >= 1")
        if self.anchor_hz <= 0:
            raise InvariantError("anchor_hz must be positive")


def pooled_probability(probs: np.ndarray, anchor: int, width: int) -> np.ndarray:
    """Mean of per-frame probability vectors over the window centered on
    ``anchor``, intersected with the clip range."""
    t = probs.shape[0]
    lo = max(0, anchor - width // 2)
    hi = min(t, anchor - width // 2 + width)
    if lo >= hi:
        raise InvariantError("pooling window is empty")
    return probs[lo:hi].mean(axis=0)


def infer_poi(clip, track_id, params, mcfg: ModelConfig, tcfg: TokenConfig,
              cfg: InferenceConfig) -> PredictionTrack:
    """Predictions for one person of interest over the whole clip."""
    ids = clip.track_ids()
    if track_id not in ids:
        raise InvariantError(f"clip {clip.clip_id} has no track {track_id}")
    rng = substream(cfg.seed, "infer", clip.clip_id, track_id)
    others = [i for i in ids if i != track_id]
    n_support = min(cfg.n_tracks - 1, len(others))
    supporting = [int(s) for s in rng.permutation(others)[:n_support]]

    grid_cfg = replace(tcfg, n_tracks=cfg.n_tracks, window=clip.num_frames)
    g = assemble_grid(clip, track_id, supporting, grid_cfg, params)
    g = infill_gaps(g, params, grid_cfg)
    logits = model_forward(params, mcfg, grid_cfg, [g], train=False)[0, 0]
    probs = 0.5 * (1.0 + np.tanh(0.5 * logits))  # sigmoid, overflow-safe

    stride = max(1, round(clip.fps / cfg.anchor_hz))
    pooled = {
        int(a): pooled_probability(probs, a, cfg.pooling_width)
        for a in range(0, clip.num_frames, stride)
    }
    return PredictionTrack(track_id=track_id, probs=probs, pooled=pooled)


# ---------------------------------------------------------------------------
# matching and AP
# ---------------------------------------------------------------------------


def box_iou(a, b) -> float:
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    ix = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    iy = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = ix * iy
    if inter == 0.0:
        return 0.0
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union


def match_detections(boxes, scores, gt_boxes, iou_threshold: float = 0.5):
    """Greedy single-class matching for one frame.

    Predictions are visited in descending score order (ties by input index);
    each takes the unmatched ground truth with the highest IoU when that IoU
    clears the threshold (IoU ties go to the lowest GT index). Returns a
    boolean TP flag per prediction, in the input order.
    """
    n = len(boxes)
    tp = np.zeros(n, dtype=bool)
    taken = np.zeros(len(gt_boxes), dtype=bool)
    order = sorted(range(n), key=lambda i: (-scores[i], i))
    for i in order:
        best, best_iou = -1, 0.0
        for j in range(len(gt_boxes)):
            if taken[j]:
                continue
            iou = box_iou(boxes[i], gt_boxes[j])
            if iou > best_iou:
                best, best_iou = j, iou
        if best >= 0 and best_iou >= iou_threshold:
            taken[best] = True
            tp[i] = True
    return tp


def average_precision(scores, tp_flags, n_positives: int) -> Optional[float]:
    """All-point interpolated AP with threshold semantics for tied scores.

    Returns None when the class has no positives (undefined, excluded from
    the macro mean).
    """
    if n_positives == 0:
        return None
    scores = np.asarray(scores, dtype=float)
    tp_flags = np.asarray(tp_flags, dtype=bool)
    if scores.size == 0:
        return 0.0

    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    t = tp_flags[order]
    # tied scores cross any threshold together
    boundary = np.flatnonzero(np.diff(s) != 0)
    ends = np.append(boundary, s.size - 1)
    cum_tp = np.cumsum(t)[ends]
    cum_n = ends + 1

    recall = cum_tp / n_positives
    precision = cum_tp / cum_n
    env = np.maximum.accumulate(precision[::-1])[::-1]
    prev = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev) * env))


# ---------------------------------------------------------------------------
# dataset evaluation
# ---------------------------------------------------------------------------


@dataclass
class EvalResult:
    class_names: list
    class_categories: list
    ap: list                      # per class, None where undefined
    support: list                 # GT positives per class at annotated frames
    map: Optional[float]
    category_means: dict          # category -> mean AP or None
    pr_points: dict = field(default_factory=dict)  # name -> [[recall, precision], ...]

    def to_csv(self) -> str:
        lines = ["class,category,ap,support"]
        for n, c, a, s in zip(self.class_names, self.class_categories, self.ap,
                              self.support):
            lines.append(f"{n},{c},{'' if a is None else format(a, '.9g')},{s}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        w = max(len(n) for n in self.class_names)
        lines = [f"{'class'.ljust(w)}  cat  {'AP':>9}  support"]
        for n, c, a, s in zip(self.class_names, self.class_categories, self.ap,
                              self.support):
            ap = "   undef " if a is None else f"{a:9.4f}"
            lines.append(f"{n.ljust(w)}  {c:3}  {ap}  {s:7d}")
        lines.append("")
        for cat in ("PM", "OM", "PI"):
            m = self.category_means.get(cat)
            lines.append(f"{cat} mean: {'undef' if m is None else format(m, '.4f')}")
        lines.append(f"mAP: {'undef' if self.map is None else format(self.map, '.4f')}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1)


def evaluate(dataset, params, mcfg: ModelConfig, tcfg: TokenConfig,
             cfg: InferenceConfig, iou_threshold: float = 0.5,
             want_pr_points: bool = False) -> EvalResult:
    """Protocol scoring over a dataset of ground-truth clips.

    Every present, labeled track at an annotated frame is a ground-truth
    instance; every present track emits one detection per class there, scored
    by its pooled probability and located at its own box.
    """
    if not dataset:
        raise InvariantError("empty dataset")
    catalog = dataset[0].class_catalog
    for c in dataset:
        if c.class_catalog != catalog:
            raise InvariantError("clips disagree on the class catalog")
    k = len(catalog)
    scores = [[] for _ in range(k)]
    flags = [[] for _ in range(k)]
    n_pos = [0] * k

    for clip in dataset:
        preds = {
            tid: infer_poi(clip, tid, params, mcfg, tcfg, cfg)
            for tid in clip.track_ids()
        }
        stride = max(1, round(clip.fps / cfg.anchor_hz))
        for a in range(0, clip.num_frames, stride):
            rows = []  # (track, box) of tracks present at the anchor
            for tid in clip.track_ids():
                box = clip.tracklet(tid).box_at(a)
                if box is not None:
                    rows.append((tid, box))
            if not rows:
                continue
            label_at = {}
            for tid, _ in rows:
                vec = clip.labels.get(tid, {}).get(a)
                if vec is not None:
                    label_at[tid] = vec
            for ki in range(k):
                gt_boxes = [b for tid, b in rows
                            if tid in label_at and label_at[tid][ki]]
                n_pos[ki] += len(gt_boxes)
                det_boxes = [b for _, b in rows]
                det_scores = [float(preds[tid].pooled[a][ki]) for tid, _ in rows]
                tp = match_detections(det_boxes, det_scores, gt_boxes, iou_threshold)
                scores[ki].extend(det_scores)
                flags[ki].extend(tp.tolist())

    ap = [average_precision(scores[i], flags[i], n_pos[i]) for i in range(k)]
    defined = [a for a in ap if a is not None]
    cat_means = {}
    for cat in ("PM", "OM", "PI"):
        vals = [a for a, cls in zip(ap, catalog) if cls.category == cat and a is not None]
        cat_means[cat] = float(np.mean(vals)) if vals else None
    result = EvalResult(
        class_names=[c.name for c in catalog],
        class_categories=[c.category for c in catalog],
        ap=ap,
        support=n_pos,
        map=float(np.mean(defined)) if defined else None,
        category_means=cat_means,
    )
    if want_pr_points:
        for i, cls in enumerate(catalog):
            if n_pos[i] == 0 or not scores[i]:
                continue
            order = np.argsort(-np.asarray(scores[i]), kind="stable")
            t = np.asarray(flags[i], dtype=bool)[order]
            cum_tp = np.cumsum(t)
            rec = cum_tp / n_pos[i]
            prec = cum_tp / np.arange(1, t.size + 1)
            result.pr_points[cls.name] = np.stack([rec, prec], axis=1).tolist()
    return result


# ---------------------------------------------------------------------------
# ablations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ArmSpec:
    name: str
    pose_embed: int
    appearance_embed: int
    n_tracks: int


def standard_arms(d_model: int = 64, n_tracks: int = 3, pose_n=(1, 2, 3, 4, 5)):
    """The comparison set: appearance-only, fused, pose-only across N."""
    half = d_model // 2
    arms = [
        ArmSpec("appearance_only", 0, d_model, n_tracks),
        ArmSpec("fused", half, d_model - half, n_tracks),
    ]
    for n in pose_n:
        arms.append(ArmSpec(f"pose_n{n}", d_model, 0, n))
    return arms


@dataclass
class AblationReport:
    rows: list          # dicts: arm, seed, map, pm, om, pi, ap (per class)
    summary: dict       # arm -> {"mean": float, "std": float, "n": int}
    class_names: list = field(default_factory=list)

    def class_gains(self) -> dict:
        """Per-class AP delta of each arm against the first arm, averaged
        over seeds. Classes undefined under either arm contribute None."""
        order = []
        for r in self.rows:
            if r["arm"] not in order:
                order.append(r["arm"])
        if len(order) < 2:
            raise InvariantError("gain table needs at least two arms")

        def mean_ap(arm):
            aps = [r["ap"] for r in self.rows if r["arm"] == arm]
            out = []
            for ki in range(len(self.class_names)):
                vals = [a[ki] for a in aps if a[ki] is not None]
                out.append(float(np.mean(vals)) if vals else None)
            return out

        base = mean_ap(order[0])
        gains = {}
        for arm in order[1:]:
            cur = mean_ap(arm)
            gains[arm] = [
                None if b is None or c is None else c - b
                for b, c in zip(base, cur)
            ]
        return {"baseline": order[0], "gains": gains}

    def gains_csv(self) -> str:
        g = self.class_gains()
        arms = list(g["gains"])
        lines = ["class," + ",".join(arms)]
        for ki, name in enumerate(self.class_names):
            vals = [g["gains"][a][ki] for a in arms]
            cells = ["" if v is None else format(v, ".9g") for v in vals]
            lines.append(name + "," + ",".join(cells))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        lines = ["arm,seed,map,pm,om,pi"]
        for r in self.rows:
            vals = [r["arm"], str(r["seed"])]
            for key in ("map", "pm", "om", "pi"):
                v = r[key]
                vals.append("" if v is None else format(v, ".9g"))
            lines.append(",".join(vals))
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        w = max(len(r["arm"]) for r in self.rows)
        lines = [f"{'arm'.ljust(w)}  {'mAP mean':>9}  {'std':>9}  runs"]
        for arm, s in self.summary.items():
            lines.append(f"{arm.ljust(w)}  {s['mean']:9.4f}  {s['std']:9.4f}  {s['n']:4d}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps({"rows": self.rows, "summary": self.summary},
                          sort_keys=True, indent=1)


def run_arm(arm: ArmSpec, train_clips, eval_clips, mcfg: ModelConfig,
            train_cfg, seed: int, infer_seed: int = 0):
    """Train one configuration from scratch on ground truth and score it."""
    from dataclasses import replace as dc_replace

    from .training import train_stage
    from .transformer import init_parameters

    tcfg = TokenConfig(
        d_model=mcfg.d_model,
        n_tracks=arm.n_tracks,
        window=train_clips[0].num_frames,
        pose_embed=arm.pose_embed,
        appearance_embed=arm.appearance_embed,
        mask_ratio=0.0,
    )
    cfg = dc_replace(train_cfg, seed=seed)
    params = init_parameters(mcfg, tcfg, seed)
    params, report = train_stage(train_clips, params, mcfg, tcfg, cfg,
                                 f"ablate-{arm.name}", "labels")
    icfg = InferenceConfig(n_tracks=arm.n_tracks, seed=infer_seed)
    result = evaluate(eval_clips, params, mcfg, tcfg, icfg)
    return result, report


def ablation_suite(train_clips, eval_clips, mcfg: ModelConfig, train_cfg,
                   seeds, arms=None) -> AblationReport:
    """Every arm trained and scored on identical data and seeds."""
    arms = list(arms) if arms is not None else standard_arms(mcfg.d_model)
    rows = []
    for arm in arms:
        for seed in seeds:
            result, _ = run_arm(arm, train_clips, eval_clips, mcfg, train_cfg, seed)
            rows.append({
                "arm": arm.name,
                "seed": int(seed),
                "map": result.map,
                "pm": result.category_means.get("PM"),
                "om": result.category_means.get("OM"),
                "pi": result.category_means.get("PI"),
                "ap": result.ap,
            })
    summary = {}
    for arm in arms:
        vals = [r["map"] for r in rows if r["arm"] == arm.name and r["map"] is not None]
        if vals:
            summary[arm.name] = {
                "mean": float(np.mean(vals)),
                "std": float(np.std(vals)),
                "n": len(vals),
            }
    names = [c.name for c in eval_clips[0].class_catalog]
    return AblationReport(rows=rows, summary=summary, class_names=names)
