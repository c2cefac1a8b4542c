"""Static plot and chart-data rendering for run artifacts.

All figures render through the Agg backend to PNG files with the encoder's
software tag stripped, so a fixed input always produces identical bytes.
"""

import numpy as np

from .tracklets import InvariantError
from .training import TrainConfig, lr_at

def _save(fig, out_path, manifest_hash=None):
    # Software=None strips the version-bearing encoder tag, keeping bytes
    # stable; the manifest hash rides along as a text chunk when given.
    meta = {"Software": None}
    if manifest_hash:
        meta["manifest"] = manifest_hash
    fig.savefig(out_path, dpi=100, metadata=meta)


def _plt():
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    return plt


def lr_schedule_points(train_config: dict, steps_per_epoch: int = 100):
    """(step fractions in epochs, lr values) for a resolved train config."""
    cfg = TrainConfig(**{k: (tuple(v) if k == "betas" else v)
                         for k, v in train_config.items()})
    total = cfg.total_epochs * steps_per_epoch
    steps = np.arange(total + 1)
    lrs = np.array([lr_at(int(s), steps_per_epoch, cfg) for s in steps])
    return steps / steps_per_epoch, lrs


def plot_lr_schedule(train_report: dict, out_path, manifest_hash=None) -> None:
    plt = _plt()
    epochs, lrs = lr_schedule_points(train_report["train_config"])
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(epochs, lrs, lw=1.5)
    ax.set_xlabel("epoch")
    ax.set_ylabel("learning rate")
    ax.set_title(f"{train_report.get('stage', 'train')} schedule")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, out_path, manifest_hash)
    plt.close(fig)


def plot_loss_curve(train_report: dict, out_path, manifest_hash=None) -> None:
    plt = _plt()
    losses = train_report["epoch_losses"]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(np.arange(len(losses)), losses, lw=1.5)
    ev = {int(k): v for k, v in train_report.get("eval_maps", {}).items()}
    if ev:
        ax2 = ax.twinx()
        xs = sorted(ev)
        ax2.plot(xs, [ev[x] for x in xs], "o-", color="tab:orange", lw=1.0)
        ax2.set_ylabel("eval mAP")
        ax2.set_ylim(0, 1.05)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title(f"{train_report.get('stage', 'train')} loss")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, out_path, manifest_hash)
    plt.close(fig)


def plot_pr_curves(eval_result: dict, out_path, manifest_hash=None) -> None:
    pts = eval_result.get("pr_points") or {}
    if not pts:
        raise InvariantError("eval result carries no PR points; "
                             "rerun eval with PR dumping enabled")
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5.5, 5))
    for name in sorted(pts):
        arr = np.asarray(pts[name])
        ax.plot(arr[:, 0], arr[:, 1], lw=1.2, label=name)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7, loc="lower left")
    fig.tight_layout()
    _save(fig, out_path, manifest_hash)
    plt.close(fig)


def plot_ablation_bars(ablation: dict, out_path, manifest_hash=None) -> None:
    summary = ablation.get("summary") or {}
    if not summary:
        raise InvariantError("ablation report has an empty summary")
    plt = _plt()
    arms = list(summary)
    means = [summary[a]["mean"] for a in arms]
    stds = [summary[a]["std"] for a in arms]
    fig, ax = plt.subplots(figsize=(max(4.0, 1.1 * len(arms)), 3.8))
    x = np.arange(len(arms))
    ax.bar(x, means, yerr=stds, capsize=3, color="tab:blue")
    ax.set_xticks(x)
    ax.set_xticklabels(arms, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("mAP")
    ax.set_ylim(0, 1.0)
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    _save(fig, out_path, manifest_hash)
    plt.close(fig)
