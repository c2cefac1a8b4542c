"""Two-stage training: pseudo-label pretraining, ground-truth finetuning.

The recipe is AdamW with betas (0.9, 0.95), weight decay 0.05, base lr 1e-3,
5 warmup epochs, cosine decay to zero over 30 epochs, batch 64. The stages
differ in their supervision source (teacher pseudo labels vs ground truth)
and three knobs: mask_ratio 0.4 / 0.0, layer-wise lr decay off / 0.9,
drop path 0.0 / 0.1.

Supervision is dense: every label-bearing token in the grid contributes to
the loss, supporting tracks included, not just the person of interest.

Everything is deterministic per seed. TrainReport.to_json() excludes wall
clock time so two same-seed runs serialize identically; timing is returned
separately on the report object.
"""

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .seeds import substream
from .tokens import TokenConfig, apply_mask_tokens, assemble_grid, sample_grid_indices
from .tracklets import InvariantError
from .transformer import (
    ModelConfig,
    bce_loss_and_grad,
    load_checkpoint,
    model_backward,
    model_forward,
    save_checkpoint,
)

_ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    base_lr: float = 1e-3
    betas: tuple = (0.9, 0.95)
    weight_decay: float = 0.05
    warmup_epochs: int = 5
    total_epochs: int = 30
    batch_size: int = 64
    mask_ratio: float = 0.4
    layer_wise_decay: Optional[float] = None
    drop_path: float = 0.0
    clip_grad: Optional[float] = 1.0
    eval_every: int = 0
    seed: int = 0

    def __post_init__(self):
        if not (0 <= self.warmup_epochs <= self.total_epochs):
            raise InvariantError("need 0 <= warmup_epochs <= total_epochs")
        if self.total_epochs < 1 or self.batch_size < 1:
            raise InvariantError("total_epochs and batch_size must be >= 1")
        if self.base_lr <= 0 or self.weight_decay < 0:
            raise InvariantError("base_lr must be > 0 and weight_decay >= 0")
        b1, b2 = self.betas
        if not (0 <= b1 < 1 and 0 <= b2 < 1):
            raise InvariantError("betas must lie in [0, 1)")
        if not (0 <= self.mask_ratio < 1):
            raise InvariantError("mask_ratio must lie in [0, 1)")
        if self.layer_wise_decay is not None and not (0 < self.layer_wise_decay <= 1):
            raise InvariantError("layer_wise_decay must lie in (0, 1]")
        if not (0 <= self.drop_path < 1):
            raise InvariantError("drop_path must lie in [0, 1)")
        if self.clip_grad is not None and self.clip_grad <= 0:
            raise InvariantError("clip_grad must be positive or None")
        if self.eval_every < 0:
            raise InvariantError("eval_every must be >= 0")


def pretrain_defaults(**kw) -> TrainConfig:
    return TrainConfig(**{**dict(mask_ratio=0.4, layer_wise_decay=None, drop_path=0.0), **kw})


def finetune_defaults(**kw) -> TrainConfig:
    return TrainConfig(**{**dict(mask_ratio=0.0, layer_wise_decay=0.9, drop_path=0.1), **kw})


# ---------------------------------------------------------------------------
# schedule
# ---------------------------------------------------------------------------


def lr_at(step: int, steps_per_epoch: int, cfg: TrainConfig) -> float:
    """Linear ramp to base_lr over the warmup steps, then cosine to zero.

    The final step index (total_epochs * steps_per_epoch) maps to exactly 0.
    """
    if step < 0 or steps_per_epoch < 1:
        raise InvariantError("step must be >= 0 and steps_per_epoch >= 1")
    warm = cfg.warmup_epochs * steps_per_epoch
    total = cfg.total_epochs * steps_per_epoch
    if step < warm:
        return cfg.base_lr * step / warm
    if total == warm:
        return 0.0 if step >= total else cfg.base_lr
    progress = (step - warm) / (total - warm)
    progress = min(progress, 1.0)
    return cfg.base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def layerwise_lr(layer_index: int, total_layers: int, decay: float) -> float:
    """decay^(total_layers - layer_index); the top index gets multiplier 1."""
    if not (0 < decay <= 1):
        raise InvariantError("decay must lie in (0, 1]")
    return decay ** (total_layers - layer_index)


def parameter_group_index(name: str, n_layers: int) -> int:
    """Depth index for layer-wise lr decay.

    Token projections and the mask token sit at 0 (deepest decay),
    transformer layer i at i+1, the classifier head and final norm at the
    top index n_layers (multiplier 1).
    """
    if name.startswith(("pose_proj.", "app_proj.")) or name == "mask_token":
        return 0
    if name.startswith("layers."):
        return int(name.split(".")[1]) + 1
    return n_layers


def _decay_exempt(name: str) -> bool:
    # layer-norm gains/biases and the mask token never get weight decay
    return ".ln" in name or name.startswith("final_ln") or name == "mask_token"


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------


@dataclass
class OptimizerState:
    m: dict
    v: dict
    t: int = 0
    skipped: int = 0


def init_optimizer(params: dict) -> OptimizerState:
    return OptimizerState(
        m={k: np.zeros_like(v) for k, v in params.items()},
        v={k: np.zeros_like(v) for k, v in params.items()},
    )


def clip_gradients(grads: dict, max_norm: Optional[float]) -> float:
    """Scale all gradients so their global l2 norm is at most max_norm."""
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm is not None and norm > max_norm and norm > 0:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def optimizer_step(params, grads, state: OptimizerState, lr: float, cfg: TrainConfig,
                   multipliers: Optional[dict] = None) -> None:
    """Decoupled AdamW update in place.

    Non-finite gradients skip the whole step (counter bumped, parameters and
    moments untouched), so parameters can never go NaN here.
    """
    for g in grads.values():
        if not np.isfinite(g).all():
            state.skipped += 1
            return
    b1, b2 = cfg.betas
    state.t += 1
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for k, p in params.items():
        g = grads[k]
        m = state.m[k]
        v = state.v[k]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        step_lr = lr if multipliers is None else lr * multipliers[k]
        upd = (m / c1) / (np.sqrt(v / c2) + _ADAM_EPS)
        if cfg.weight_decay > 0 and not _decay_exempt(k):
            upd = upd + cfg.weight_decay * p
        p -= step_lr * upd


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class TrainReport:
    stage: str
    seed: int
    config_hash: str
    train_config: dict
    model_config: dict
    token_config: dict
    epoch_losses: list = field(default_factory=list)
    eval_maps: dict = field(default_factory=dict)  # epoch -> mAP
    steps: int = 0
    skipped_steps: int = 0
    dataset_size: int = 0
    wall_clock_s: float = 0.0  # excluded from to_json: keeps reports reproducible

    def to_json(self) -> str:
        d = {k: v for k, v in asdict(self).items() if k != "wall_clock_s"}
        d["eval_maps"] = {str(k): v for k, v in self.eval_maps.items()}
        return json.dumps(d, sort_keys=True, indent=1)

    def to_csv(self) -> str:
        lines = ["epoch,loss,eval_map"]
        for i, loss in enumerate(self.epoch_losses):
            ev = self.eval_maps.get(i, "")
            lines.append(f"{i},{loss:.9g},{ev if ev == '' else format(ev, '.9g')}")
        return "\n".join(lines) + "\n"


def config_hash(tcfg: TokenConfig, mcfg: ModelConfig, cfg: TrainConfig) -> str:
    blob = json.dumps(
        {"tokens": asdict(tcfg), "model": asdict(mcfg), "train": asdict(cfg)},
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# the loop
# ---------------------------------------------------------------------------


def _draw_grid(clip, tcfg, params, cfg, label_source, rng):
    """One training grid; redraws until the window holds supervised tokens."""
    for _ in range(50):
        poi, sup, start = sample_grid_indices(clip, tcfg, rng)
        g = assemble_grid(clip, poi, sup, tcfg, params, start, label_source)
        if g.loss_mask.any():
            if cfg.mask_ratio > 0:
                g = apply_mask_tokens(g, cfg.mask_ratio, params, tcfg, rng)
            return g
    raise InvariantError(f"clip {clip.clip_id} yields no supervised window")


def train_stage(dataset, params, mcfg: ModelConfig, tcfg: TokenConfig, cfg: TrainConfig,
                stage: str, label_source: str, eval_hook=None):
    """Shared epoch loop. Mutates params, returns (params, TrainReport)."""
    if not dataset:
        raise InvariantError("empty dataset")
    t0 = time.perf_counter()
    rng = substream(cfg.seed, "train", stage)
    run_mcfg = replace(mcfg, drop_path=cfg.drop_path)
    n_layers = mcfg.layers
    decay = cfg.layer_wise_decay
    multipliers = None
    if decay is not None and decay != 1.0:
        multipliers = {
            k: layerwise_lr(parameter_group_index(k, n_layers), n_layers, decay)
            for k in params
        }
    state = init_optimizer(params)
    steps_per_epoch = math.ceil(len(dataset) / cfg.batch_size)
    report = TrainReport(
        stage=stage,
        seed=cfg.seed,
        config_hash=config_hash(tcfg, mcfg, cfg),
        train_config=asdict(cfg),
        model_config=asdict(mcfg),
        token_config=asdict(tcfg),
        dataset_size=len(dataset),
    )
    step = 0
    for epoch in range(cfg.total_epochs):
        order = rng.permutation(len(dataset))
        batch_losses = []
        for lo in range(0, len(dataset), cfg.batch_size):
            clips = [dataset[j] for j in order[lo : lo + cfg.batch_size]]
            grids = [_draw_grid(c, tcfg, params, cfg, label_source, rng) for c in clips]
            labels = np.stack([g.labels for g in grids])
            mask = np.stack([g.loss_mask for g in grids])
            logits, cache = model_forward(params, run_mcfg, tcfg, grids, train=True,
                                          rng=rng, want_cache=True)
            loss, d_logits = bce_loss_and_grad(logits, labels, mask)
            grads = model_backward(params, run_mcfg, tcfg, grids, cache, d_logits)
            clip_gradients(grads, cfg.clip_grad)
            optimizer_step(params, grads, state, lr_at(step, steps_per_epoch, cfg),
                           cfg, multipliers)
            batch_losses.append(loss)
            step += 1
        report.epoch_losses.append(float(np.mean(batch_losses)))
        if eval_hook is not None and cfg.eval_every and (epoch + 1) % cfg.eval_every == 0:
            report.eval_maps[epoch] = float(eval_hook(params))
    report.steps = step
    report.skipped_steps = state.skipped
    report.wall_clock_s = time.perf_counter() - t0
    return params, report


def pretrain(dataset, mcfg: ModelConfig, tcfg: TokenConfig, cfg: TrainConfig,
             init_seed: Optional[int] = None, eval_hook=None):
    """Stage one: fresh parameters, teacher pseudo labels, simulated masking."""
    from .transformer import init_parameters

    for c in dataset:
        if c.pseudo_labels is None:
            raise InvariantError(f"clip {c.clip_id} lacks pseudo labels; "
                                 "pretraining needs a teacher pass")
    params = init_parameters(mcfg, tcfg, cfg.seed if init_seed is None else init_seed)
    return train_stage(dataset, params, mcfg, tcfg, cfg, "pretrain", "pseudo_labels",
                       eval_hook)


def finetune(checkpoint_path, dataset, cfg: TrainConfig,
             expect_model: Optional[ModelConfig] = None,
             expect_tokens: Optional[TokenConfig] = None, eval_hook=None):
    """Stage two: resume checkpoint parameters, ground-truth labels.

    The optimizer starts fresh; a mismatch between the checkpoint's stored
    configs and the expected ones is an error, not a warning.
    """
    params, mcfg, tcfg, _ = load_checkpoint(checkpoint_path)
    if expect_model is not None and expect_model != mcfg:
        raise InvariantError("checkpoint model config does not match the requested one")
    if expect_tokens is not None and expect_tokens != tcfg:
        raise InvariantError("checkpoint token config does not match the requested one")
    out = train_stage(dataset, params, mcfg, tcfg, cfg, "finetune", "labels", eval_hook)
    return out + (mcfg, tcfg)


def save_stage_checkpoint(path, params, mcfg, tcfg, report: TrainReport) -> None:
    save_checkpoint(path, params, mcfg, tcfg, extra={
        "stage": report.stage,
        "seed": report.seed,
        "config_hash": report.config_hash,
        "epochs": len(report.epoch_losses),
        "final_loss": report.epoch_losses[-1] if report.epoch_losses else None,
    })
