"""Tracklet tokenization: person-vectors to transformer input grids.

A token grid is N tracks by T_w window frames. Slot 0 always holds the person
of interest. Each present token is projection(person vector) + PE(t, slot).
The attention matrix (flat index = slot * T_w + t) distinguishes three kinds
of positions:

  present   attends all present tokens, is attended by them
  gap       (absent entry / padded slot) row and column all false except the
            diagonal; content zeros; no loss
  masked    (simulated mask or inference infill) content mask_token + PE;
            attends present tokens but nobody attends it; keeps its loss flag

The positional encoding splits the width in half: the first D/2 dims encode
the window time index with sin/cos pairs at frequencies 10000^(4r/D),
r in [0, D/4); the second half encodes the slot index the same way.
"""

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .tracklets import APPEARANCE_DIM, InvariantError, POSE_DIM


@dataclass(frozen=True)
class TokenConfig:
    """Grid geometry and channel widths.

    pose_embed + appearance_embed must equal d_model; a zero width disables
    that channel (pose-only / appearance-only regimes).
    """

    d_model: int = 256
    n_tracks: int = 5
    window: int = 128
    pose_embed: int = 256
    appearance_embed: int = 0
    mask_ratio: float = 0.4

    def __post_init__(self):
        if self.d_model % 4 != 0:
            raise InvariantError("d_model must be divisible by 4")
        if self.pose_embed + self.appearance_embed != self.d_model:
            raise InvariantError(
                "pose_embed + appearance_embed must equal d_model "
                f"({self.pose_embed} + {self.appearance_embed} != {self.d_model})"
            )
        if self.pose_embed < 0 or self.appearance_embed < 0:
            raise InvariantError("channel widths must be non-negative")
        if self.pose_embed == 0 and self.appearance_embed == 0:
            raise InvariantError("at least one channel must be enabled")
        if self.n_tracks < 1 or self.window < 1:
            raise InvariantError("n_tracks and window must be >= 1")
        if not (0.0 <= self.mask_ratio < 1.0):
            raise InvariantError("mask_ratio must lie in [0, 1)")


def positional_encoding(t: int, i: int, d_model: int) -> np.ndarray:
    """PE vector for window time t and track slot i. See module docstring."""
    if d_model % 4 != 0:
        raise InvariantError("d_model must be divisible by 4")
    pe = np.empty(d_model)
    q = d_model // 4
    r = np.arange(q)
    freq = 10000.0 ** (4.0 * r / d_model)
    pe[0 : d_model // 2 : 2] = np.sin(t / freq)
    pe[1 : d_model // 2 : 2] = np.cos(t / freq)
    pe[d_model // 2 :: 2] = np.sin(i / freq)
    pe[d_model // 2 + 1 :: 2] = np.cos(i / freq)
    return pe


def positional_encoding_grid(n_tracks: int, window: int, d_model: int) -> np.ndarray:
    """(N, T, D) table of PE vectors."""
    q = d_model // 4
    freq = 10000.0 ** (4.0 * np.arange(q) / d_model)
    t = np.arange(window)[:, None] / freq[None, :]  # (T, q)
    i = np.arange(n_tracks)[:, None] / freq[None, :]  # (N, q)
    pe = np.empty((n_tracks, window, d_model))
    pe[:, :, 0 : d_model // 2 : 2] = np.sin(t)[None]
    pe[:, :, 1 : d_model // 2 : 2] = np.cos(t)[None]
    pe[:, :, d_model // 2 :: 2] = np.sin(i)[:, None, :]
    pe[:, :, d_model // 2 + 1 :: 2] = np.cos(i)[:, None, :]
    return pe


# ---------------------------------------------------------------------------
# Projection MLPs (two hidden layers, tanh-approximated GELU)
# ---------------------------------------------------------------------------

_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + 0.044715 * x**3)))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    inner = _GELU_C * (x + 0.044715 * x**3)
    th = np.tanh(inner)
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th**2) * _GELU_C * (1.0 + 3 * 0.044715 * x**2)


def init_mlp(rng: np.random.Generator, prefix: str, in_dim: int, hidden: int, out_dim: int) -> dict:
    """Fan-in scaled uniform weights, zero biases, two hidden layers."""
    def w(fan_in, fan_out):
        a = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-a, a, (fan_in, fan_out))

    return {
        f"{prefix}.w0": w(in_dim, hidden),
        f"{prefix}.b0": np.zeros(hidden),
        f"{prefix}.w1": w(hidden, hidden),
        f"{prefix}.b1": np.zeros(hidden),
        f"{prefix}.w2": w(hidden, out_dim),
        f"{prefix}.b2": np.zeros(out_dim),
    }


def mlp_forward(params: dict, prefix: str, x: np.ndarray, want_cache: bool = False):
    """x (..., in_dim) -> (..., out_dim); optionally returns the cache for backward."""
    z0 = x @ params[f"{prefix}.w0"] + params[f"{prefix}.b0"]
    h0 = gelu(z0)
    z1 = h0 @ params[f"{prefix}.w1"] + params[f"{prefix}.b1"]
    h1 = gelu(z1)
    out = h1 @ params[f"{prefix}.w2"] + params[f"{prefix}.b2"]
    if want_cache:
        return out, (x, z0, h0, z1, h1)
    return out


def mlp_backward(params: dict, prefix: str, cache, d_out: np.ndarray, grads: dict) -> np.ndarray:
    """Accumulate parameter grads into ``grads`` and return d_input."""
    x, z0, h0, z1, h1 = cache
    in_dim = x.shape[-1]
    x2 = x.reshape(-1, in_dim)
    h1f = h1.reshape(-1, h1.shape[-1])
    h0f = h0.reshape(-1, h0.shape[-1])
    do = d_out.reshape(-1, d_out.shape[-1])

    grads[f"{prefix}.w2"] += h1f.T @ do
    grads[f"{prefix}.b2"] += do.sum(axis=0)
    dh1 = (do @ params[f"{prefix}.w2"].T) * gelu_grad(z1).reshape(h1f.shape)
    grads[f"{prefix}.w1"] += h0f.T @ dh1
    grads[f"{prefix}.b1"] += dh1.sum(axis=0)
    dh0 = (dh1 @ params[f"{prefix}.w1"].T) * gelu_grad(z0).reshape(h0f.shape)
    grads[f"{prefix}.w0"] += x2.T @ dh0
    grads[f"{prefix}.b0"] += dh0.sum(axis=0)
    dx = dh0 @ params[f"{prefix}.w0"].T
    return dx.reshape(x.shape)


# ---------------------------------------------------------------------------
# Token grids
# ---------------------------------------------------------------------------


@dataclass
class TokenGrid:
    """Assembled input for one forward pass. See the module docstring.

    present/masked/gap partition the N x T_w positions: gap positions were
    never present (absent entry or padded slot) unless infilled at inference;
    masked positions carry mask_token content. raw_pose / raw_appearance hold
    the unprojected inputs so training can differentiate through the
    projections.
    """

    tokens: np.ndarray           # (N, T, D)
    attention_mask: np.ndarray   # (N*T, N*T) bool, True = query may attend key
    loss_mask: np.ndarray        # (N, T) bool
    labels: np.ndarray           # (N, T, K) float 0/1
    present: np.ndarray          # (N, T) bool: currently visible content tokens
    masked: np.ndarray           # (N, T) bool: simulated-mask / infilled tokens
    gap: np.ndarray              # (N, T) bool: isolated absent positions
    pe: np.ndarray               # (N, T, D)
    raw_pose: np.ndarray         # (N, T, 229)
    raw_appearance: Optional[np.ndarray]  # (N, T, 1152) or None
    slot_tracks: np.ndarray      # (N,) track id per slot, -1 for padding
    window_start: int
    clip_id: str

    @property
    def n_tracks(self):
        return self.tokens.shape[0]

    @property
    def window(self):
        return self.tokens.shape[1]


def build_attention(present: np.ndarray, masked: np.ndarray) -> np.ndarray:
    """Attention matrix from the position partition.

    Visible tokens (present and not masked) attend each other; masked tokens
    attend visible ones; nobody attends masked tokens; gap rows and columns
    are false. The diagonal is always true so no softmax row is empty.
    """
    n, t = present.shape
    vis = (present & ~masked).ravel()
    msk = masked.ravel()
    s = n * t
    attn = np.zeros((s, s), dtype=bool)
    attn[np.ix_(vis | msk, vis)] = True
    np.fill_diagonal(attn, True)
    return attn


def embed_tokens(
    grid: TokenGrid, params: dict, cfg: TokenConfig, want_cache: bool = False
):
    """Recompute token content from raw inputs and parameters.

    Present tokens: projection + PE. Masked/infilled tokens: mask_token + PE.
    Gap tokens: zeros. Returns (tokens, cache) when want_cache.
    """
    n, t = grid.present.shape
    tokens = np.zeros((n, t, cfg.d_model))
    caches = {}
    if cfg.pose_embed > 0:
        pose_e, pc = mlp_forward(params, "pose_proj", grid.raw_pose, want_cache=True)
        tokens[:, :, : cfg.pose_embed] = pose_e
        caches["pose"] = pc
    if cfg.appearance_embed > 0:
        if grid.raw_appearance is None:
            raise InvariantError("appearance channel enabled but grid has no appearance")
        app_e, ac = mlp_forward(params, "app_proj", grid.raw_appearance, want_cache=True)
        tokens[:, :, cfg.pose_embed :] = app_e
        caches["app"] = ac
    vis = grid.present & ~grid.masked
    tokens = np.where(vis[:, :, None], tokens + grid.pe, 0.0)
    tokens = np.where(grid.masked[:, :, None], params["mask_token"][None, None, :] + grid.pe, tokens)
    if want_cache:
        return tokens, caches
    return tokens


def embed_tokens_backward(
    grid: TokenGrid, params: dict, cfg: TokenConfig, caches: dict, d_tokens: np.ndarray, grads: dict
) -> None:
    """Backprop token-content gradients into projections and the mask token."""
    vis = (grid.present & ~grid.masked)[:, :, None]
    d_proj = np.where(vis, d_tokens, 0.0)
    if cfg.pose_embed > 0:
        mlp_backward(params, "pose_proj", caches["pose"], d_proj[:, :, : cfg.pose_embed], grads)
    if cfg.appearance_embed > 0:
        mlp_backward(params, "app_proj", caches["app"], d_proj[:, :, cfg.pose_embed :], grads)
    grads["mask_token"] += d_tokens[grid.masked].sum(axis=0) if grid.masked.any() else 0.0


def assemble_grid(
    clip,
    poi_track: int,
    supporting: list,
    cfg: TokenConfig,
    params: dict,
    window_start: int = 0,
    label_source: str = "labels",
) -> TokenGrid:
    """Build the token grid for one clip window.

    Slot 0 is the person of interest; remaining slots take ``supporting``
    track ids in order and pad with fully-gapped rows. Labels come from the
    chosen source; loss_mask is true exactly where a present token has one.
    """
    if label_source == "labels":
        label_map = clip.labels
    elif label_source == "pseudo_labels":
        if clip.pseudo_labels is None:
            raise InvariantError(f"clip {clip.clip_id} has no pseudo labels")
        label_map = clip.pseudo_labels
    else:
        raise InvariantError(f"unknown label source {label_source!r}")
    if len(supporting) > cfg.n_tracks - 1:
        raise InvariantError("too many supporting tracks for the grid")
    ids = [poi_track] + list(supporting)
    if len(set(ids)) != len(ids):
        raise InvariantError("duplicate track ids in grid slots")

    n, t_w, k = cfg.n_tracks, cfg.window, clip.num_classes
    present = np.zeros((n, t_w), dtype=bool)
    raw_pose = np.zeros((n, t_w, POSE_DIM))
    raw_app = np.zeros((n, t_w, APPEARANCE_DIM)) if cfg.appearance_embed > 0 else None
    labels = np.zeros((n, t_w, k))
    has_label = np.zeros((n, t_w), dtype=bool)
    slot_tracks = np.full(n, -1, dtype=int)

    for slot, tid in enumerate(ids):
        tr = clip.tracklet(tid)
        slot_tracks[slot] = tid
        # overlap of [window_start, window_start + t_w) with the track span
        lo = max(window_start, tr.start_frame)
        hi = min(window_start + t_w, tr.end_frame)
        if lo >= hi:
            continue
        off_t = lo - window_start
        off_k = lo - tr.start_frame
        span = hi - lo
        pm = tr.present_mask()[off_k : off_k + span]
        present[slot, off_t : off_t + span] = pm
        raw_pose[slot, off_t : off_t + span] = tr.pose_matrix()[off_k : off_k + span]
        if raw_app is not None:
            app = tr.appearance_matrix()[off_k : off_k + span]
            covered = np.abs(app).max(axis=1) > 0
            if (pm & ~covered).any():
                raise InvariantError(
                    f"track {tid} is missing appearance features but the "
                    "appearance channel is enabled"
                )
            raw_app[slot, off_t : off_t + span] = app
        track_labels = label_map.get(tid, {})
        for f, vec in track_labels.items():
            tt = f - window_start
            if 0 <= tt < t_w and present[slot, tt]:
                labels[slot, tt] = vec.astype(np.float64)
                has_label[slot, tt] = True

    masked = np.zeros((n, t_w), dtype=bool)
    pe = positional_encoding_grid(n, t_w, cfg.d_model)
    grid = TokenGrid(
        tokens=np.zeros((n, t_w, cfg.d_model)),
        attention_mask=build_attention(present, masked),
        loss_mask=present & has_label,
        labels=labels,
        present=present,
        masked=masked,
        gap=~present,
        pe=pe,
        raw_pose=raw_pose,
        raw_appearance=raw_app,
        slot_tracks=slot_tracks,
        window_start=window_start,
        clip_id=clip.clip_id,
    )
    grid.tokens = embed_tokens(grid, params, cfg)
    return grid


def apply_mask_tokens(
    grid: TokenGrid, mask_ratio: float, params: dict, cfg: TokenConfig, rng: np.random.Generator
) -> TokenGrid:
    """Replace a uniform sample of present tokens with the learned mask token.

    floor(mask_ratio * #present) positions are chosen without replacement.
    Their loss flags stay on; attention is rebuilt so they attend visible
    tokens but are attended by nobody.
    """
    if not (0.0 <= mask_ratio < 1.0):
        raise InvariantError("mask_ratio must lie in [0, 1)")
    flat_present = np.flatnonzero(grid.present.ravel())
    n_mask = int(mask_ratio * flat_present.size)
    masked = grid.masked.copy()
    if n_mask > 0:
        chosen = rng.choice(flat_present, size=n_mask, replace=False)
        m = masked.ravel()
        m[chosen] = True
        masked = m.reshape(grid.present.shape)
    out = replace(
        grid,
        masked=masked,
        attention_mask=build_attention(grid.present, masked),
    )
    out.tokens = embed_tokens(out, params, cfg)
    return out


def infill_gaps(grid: TokenGrid, params: dict, cfg: TokenConfig) -> TokenGrid:
    """Inference-time infill: gap positions of assigned slots become mask tokens.

    Infilled tokens attend visible tokens (so the model can predict through
    occlusions) but remain unattended; their loss flags stay off. Padding
    slots (no track assigned) stay fully gapped.
    """
    real = grid.slot_tracks >= 0
    fill = grid.gap & real[:, None]
    masked = grid.masked | fill
    present = grid.present | fill
    out = replace(
        grid,
        masked=masked,
        gap=grid.gap & ~fill,
        present=present,
        attention_mask=build_attention(present, masked),
    )
    out.tokens = embed_tokens(out, params, cfg)
    return out


def sample_grid_indices(clip, cfg: TokenConfig, rng: np.random.Generator):
    """Training-time draw: (poi, supporting slots, window start).

    The person of interest is uniform over tracks; supporting tracks are a
    uniform sample without replacement of the others (order randomized, so
    slot assignment varies); one shared window start is drawn for the whole
    grid to keep tracks time-aligned.
    """
    ids = clip.track_ids()
    poi = ids[int(rng.integers(0, len(ids)))]
    others = [i for i in ids if i != poi]
    n_support = min(cfg.n_tracks - 1, len(others))
    supporting = list(rng.permutation(others)[:n_support]) if n_support else []
    max_start = max(0, clip.num_frames - cfg.window)
    window_start = int(rng.integers(0, max_start + 1)) if max_start else 0
    return poi, [int(s) for s in supporting], window_start
