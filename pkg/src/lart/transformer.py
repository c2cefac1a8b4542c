"""Masked transformer encoder over tracklet token grids.

Forward and backward passes are written out by hand in numpy (float64
throughout). The attention mask is additive: disallowed key columns get -1e9
before the softmax, which underflows to an exact 0.0 weight, so masked-out
tokens contribute exactly nothing to any attended output (bit-exact
isolation, not just approximate).

Training mode recomputes token content from the raw person vectors so
gradients reach the projection MLPs and the learned mask token; evaluation
mode consumes grid.tokens as assembled. Dropout sits on each residual branch
output; stochastic depth gates whole branches per sample. RNG draw order in
training mode is: per layer, attention dropout, attention drop-path, MLP
dropout, MLP drop-path.
"""

import io
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .seeds import substream
from .tokens import (
    TokenConfig,
    embed_tokens,
    embed_tokens_backward,
    gelu,
    gelu_grad,
    init_mlp,
)
from .tracklets import APPEARANCE_DIM, InvariantError, POSE_DIM

CKPT_FORMAT = "lart-ckpt/1"
_NEG = -1e9
_LN_EPS = 1e-5


class NumericError(ArithmeticError):
    """Non-finite values met during a forward/backward pass."""


class CheckpointFormatError(ValueError):
    pass


class UnsupportedCheckpointVersion(CheckpointFormatError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    layers: int = 4
    heads: int = 8
    d_model: int = 256
    mlp_ratio: int = 4
    dropout: float = 0.1
    drop_path: float = 0.1
    n_classes: int = 12
    norm_position: str = "pre"

    def __post_init__(self):
        if self.layers < 1 or self.heads < 1 or self.n_classes < 1:
            raise InvariantError("layers, heads and n_classes must be >= 1")
        if self.d_model % self.heads != 0:
            raise InvariantError("d_model must divide evenly into heads")
        if self.mlp_ratio < 1:
            raise InvariantError("mlp_ratio must be >= 1")
        if not (0.0 <= self.dropout < 1.0 and 0.0 <= self.drop_path < 1.0):
            raise InvariantError("dropout and drop_path must lie in [0, 1)")
        if self.norm_position not in ("pre", "post"):
            raise InvariantError("norm_position must be 'pre' or 'post'")


def init_parameters(mcfg: ModelConfig, tcfg: TokenConfig, seed: int) -> dict:
    """Flat name-to-array parameter dict.

    Fan-in scaled uniform weights, zero biases, unit layer-norm gains. The
    output projections of both residual branches are shrunk by
    1/sqrt(2 * layers) so deep stacks start near the identity. The mask token
    starts at zero.
    """
    if mcfg.d_model != tcfg.d_model:
        raise InvariantError("model and token widths disagree")
    rng = substream(seed, "init")
    d, l = mcfg.d_model, mcfg.layers
    res = 1.0 / math.sqrt(2.0 * l)

    def w(fan_in, fan_out, scale=1.0):
        a = scale / math.sqrt(fan_in)
        return rng.uniform(-a, a, (fan_in, fan_out))

    p = {}
    if tcfg.pose_embed > 0:
        p.update(init_mlp(rng, "pose_proj", POSE_DIM, tcfg.pose_embed, tcfg.pose_embed))
    if tcfg.appearance_embed > 0:
        p.update(init_mlp(rng, "app_proj", APPEARANCE_DIM, tcfg.appearance_embed,
                          tcfg.appearance_embed))
    p["mask_token"] = np.zeros(d)
    h = d * mcfg.mlp_ratio
    for i in range(l):
        p[f"layers.{i}.ln1.g"] = np.ones(d)
        p[f"layers.{i}.ln1.b"] = np.zeros(d)
        p[f"layers.{i}.attn.wqkv"] = w(d, 3 * d)
        p[f"layers.{i}.attn.bqkv"] = np.zeros(3 * d)
        p[f"layers.{i}.attn.wo"] = w(d, d, res)
        p[f"layers.{i}.attn.bo"] = np.zeros(d)
        p[f"layers.{i}.ln2.g"] = np.ones(d)
        p[f"layers.{i}.ln2.b"] = np.zeros(d)
        p[f"layers.{i}.mlp.w1"] = w(d, h)
        p[f"layers.{i}.mlp.b1"] = np.zeros(h)
        p[f"layers.{i}.mlp.w2"] = w(h, d, res)
        p[f"layers.{i}.mlp.b2"] = np.zeros(d)
    if mcfg.norm_position == "pre":
        p["final_ln.g"] = np.ones(d)
        p["final_ln.b"] = np.zeros(d)
    p["head.w"] = w(d, mcfg.n_classes)
    p["head.b"] = np.zeros(mcfg.n_classes)
    return p


def count_parameters(params: dict) -> int:
    return sum(int(v.size) for v in params.values())


# ---------------------------------------------------------------------------
# primitive forward/backward pairs
# ---------------------------------------------------------------------------


def _layernorm_fwd(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = (x - mu) * inv
    return g * xhat + b, (xhat, inv)


def _layernorm_bwd(d_y, g, cache, grads, g_key, b_key):
    xhat, inv = cache
    grads[g_key] += (d_y * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0)
    grads[b_key] += d_y.reshape(-1, xhat.shape[-1]).sum(axis=0)
    d_xhat = d_y * g
    m1 = d_xhat.mean(axis=-1, keepdims=True)
    m2 = (d_xhat * xhat).mean(axis=-1, keepdims=True)
    return inv * (d_xhat - m1 - xhat * m2)


def _dropout_fwd(x, rate, rng, train):
    if not train or rate == 0.0:
        return x, None
    keep = rng.random(x.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    return x * keep * scale, (keep, scale)


def _dropout_bwd(d, cache):
    if cache is None:
        return d
    keep, scale = cache
    return d * keep * scale


def _droppath_fwd(x, rate, rng, train):
    if not train or rate == 0.0:
        return x, None
    gate = (rng.random((x.shape[0], 1, 1)) >= rate) / (1.0 - rate)
    return x * gate, gate


def _droppath_bwd(d, gate):
    if gate is None:
        return d
    return d * gate


def _attention_fwd(params, pre, a, add_mask, heads):
    """a (B,S,D), add_mask (B,1,S,S) additive. Returns out and cache."""
    b, s, d = a.shape
    dh = d // heads
    qkv = a @ params[f"{pre}.wqkv"] + params[f"{pre}.bqkv"]
    qkv = qkv.reshape(b, s, 3, heads, dh).transpose(2, 0, 3, 1, 4)  # (3,B,H,S,dh)
    q, k, v = qkv[0], qkv[1], qkv[2]
    scale = 1.0 / math.sqrt(dh)
    scores = (q @ k.transpose(0, 1, 3, 2)) * scale + add_mask
    scores -= scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    p = e / e.sum(axis=-1, keepdims=True)
    ctx = p @ v  # (B,H,S,dh)
    merged = ctx.transpose(0, 2, 1, 3).reshape(b, s, d)
    out = merged @ params[f"{pre}.wo"] + params[f"{pre}.bo"]
    return out, (a, q, k, v, p, merged)


def _attention_bwd(params, pre, cache, d_out, heads, grads):
    a, q, k, v, p, merged = cache
    b, s, d = a.shape
    dh = d // heads
    scale = 1.0 / math.sqrt(dh)

    grads[f"{pre}.wo"] += merged.reshape(-1, d).T @ d_out.reshape(-1, d)
    grads[f"{pre}.bo"] += d_out.reshape(-1, d).sum(axis=0)
    d_merged = d_out @ params[f"{pre}.wo"].T
    d_ctx = d_merged.reshape(b, s, heads, dh).transpose(0, 2, 1, 3)

    d_p = d_ctx @ v.transpose(0, 1, 3, 2)
    d_v = p.transpose(0, 1, 3, 2) @ d_ctx
    d_scores = p * (d_p - (d_p * p).sum(axis=-1, keepdims=True))
    d_q = (d_scores @ k) * scale
    d_k = (d_scores.transpose(0, 1, 3, 2) @ q) * scale

    d_qkv = np.stack([d_q, d_k, d_v])  # (3,B,H,S,dh)
    d_qkv = d_qkv.transpose(1, 3, 0, 2, 4).reshape(b, s, 3 * d)
    grads[f"{pre}.wqkv"] += a.reshape(-1, d).T @ d_qkv.reshape(-1, 3 * d)
    grads[f"{pre}.bqkv"] += d_qkv.reshape(-1, 3 * d).sum(axis=0)
    return d_qkv @ params[f"{pre}.wqkv"].T


def _branch_mlp_fwd(params, pre, m):
    z1 = m @ params[f"{pre}.w1"] + params[f"{pre}.b1"]
    h = gelu(z1)
    out = h @ params[f"{pre}.w2"] + params[f"{pre}.b2"]
    return out, (m, z1, h)


def _branch_mlp_bwd(params, pre, cache, d_out, grads):
    m, z1, h = cache
    hw = h.shape[-1]
    grads[f"{pre}.w2"] += h.reshape(-1, hw).T @ d_out.reshape(-1, d_out.shape[-1])
    grads[f"{pre}.b2"] += d_out.reshape(-1, d_out.shape[-1]).sum(axis=0)
    d_h = (d_out @ params[f"{pre}.w2"].T) * gelu_grad(z1)
    grads[f"{pre}.w1"] += m.reshape(-1, m.shape[-1]).T @ d_h.reshape(-1, hw)
    grads[f"{pre}.b1"] += d_h.reshape(-1, hw).sum(axis=0)
    return d_h @ params[f"{pre}.w1"].T


def _require_finite(x, where):
    if not np.isfinite(x).all():
        raise NumericError(f"non-finite activations at {where}")


# ---------------------------------------------------------------------------
# encoder
# ---------------------------------------------------------------------------


def encoder_forward(params, mcfg: ModelConfig, x, attn_mask, train=False, rng=None,
                    want_cache=False, check_finite=True):
    """x (B,S,D) tokens, attn_mask (B,S,S) bool. Returns logits (B,S,K).

    Raises NumericError naming the first layer whose activations go
    non-finite.
    """
    if train and (mcfg.dropout > 0 or mcfg.drop_path > 0) and rng is None:
        raise InvariantError("training with dropout needs an rng")
    if check_finite:
        _require_finite(x, "input tokens")
    add_mask = np.where(attn_mask[:, None], 0.0, _NEG)  # (B,1,S,S)
    layer_caches = []
    for i in range(mcfg.layers):
        lp = f"layers.{i}"
        if mcfg.norm_position == "pre":
            a, c_ln1 = _layernorm_fwd(x, params[f"{lp}.ln1.g"], params[f"{lp}.ln1.b"])
            attn, c_att = _attention_fwd(params, f"{lp}.attn", a, add_mask, mcfg.heads)
            attn, c_do1 = _dropout_fwd(attn, mcfg.dropout, rng, train)
            attn, c_dp1 = _droppath_fwd(attn, mcfg.drop_path, rng, train)
            x = x + attn
            m, c_ln2 = _layernorm_fwd(x, params[f"{lp}.ln2.g"], params[f"{lp}.ln2.b"])
            ff, c_mlp = _branch_mlp_fwd(params, f"{lp}.mlp", m)
            ff, c_do2 = _dropout_fwd(ff, mcfg.dropout, rng, train)
            ff, c_dp2 = _droppath_fwd(ff, mcfg.drop_path, rng, train)
            x = x + ff
        else:
            attn, c_att = _attention_fwd(params, f"{lp}.attn", x, add_mask, mcfg.heads)
            attn, c_do1 = _dropout_fwd(attn, mcfg.dropout, rng, train)
            attn, c_dp1 = _droppath_fwd(attn, mcfg.drop_path, rng, train)
            x, c_ln1 = _layernorm_fwd(x + attn, params[f"{lp}.ln1.g"], params[f"{lp}.ln1.b"])
            ff, c_mlp = _branch_mlp_fwd(params, f"{lp}.mlp", x)
            ff, c_do2 = _dropout_fwd(ff, mcfg.dropout, rng, train)
            ff, c_dp2 = _droppath_fwd(ff, mcfg.drop_path, rng, train)
            x, c_ln2 = _layernorm_fwd(x + ff, params[f"{lp}.ln2.g"], params[f"{lp}.ln2.b"])
        if check_finite:
            _require_finite(x, f"layer {i}")
        layer_caches.append((c_ln1, c_att, c_do1, c_dp1, c_ln2, c_mlp, c_do2, c_dp2))

    if mcfg.norm_position == "pre":
        h, c_final = _layernorm_fwd(x, params["final_ln.g"], params["final_ln.b"])
    else:
        h, c_final = x, None
    logits = h @ params["head.w"] + params["head.b"]
    if check_finite:
        _require_finite(logits, "head")
    if want_cache:
        return logits, (layer_caches, c_final, h)
    return logits


def encoder_backward(params, mcfg: ModelConfig, cache, d_logits, grads):
    """Accumulates into grads, returns d_tokens (B,S,D)."""
    layer_caches, c_final, h = cache
    d = h.shape[-1]
    grads["head.w"] += h.reshape(-1, d).T @ d_logits.reshape(-1, d_logits.shape[-1])
    grads["head.b"] += d_logits.reshape(-1, d_logits.shape[-1]).sum(axis=0)
    d_h = d_logits @ params["head.w"].T
    if mcfg.norm_position == "pre":
        d_x = _layernorm_bwd(d_h, params["final_ln.g"], c_final, grads,
                             "final_ln.g", "final_ln.b")
    else:
        d_x = d_h

    for i in reversed(range(mcfg.layers)):
        lp = f"layers.{i}"
        c_ln1, c_att, c_do1, c_dp1, c_ln2, c_mlp, c_do2, c_dp2 = layer_caches[i]
        if mcfg.norm_position == "pre":
            d_ff = _dropout_bwd(_droppath_bwd(d_x, c_dp2), c_do2)
            d_m = _branch_mlp_bwd(params, f"{lp}.mlp", c_mlp, d_ff, grads)
            d_x = d_x + _layernorm_bwd(d_m, params[f"{lp}.ln2.g"], c_ln2, grads,
                                       f"{lp}.ln2.g", f"{lp}.ln2.b")
            d_attn = _dropout_bwd(_droppath_bwd(d_x, c_dp1), c_do1)
            d_a = _attention_bwd(params, f"{lp}.attn", c_att, d_attn, mcfg.heads, grads)
            d_x = d_x + _layernorm_bwd(d_a, params[f"{lp}.ln1.g"], c_ln1, grads,
                                       f"{lp}.ln1.g", f"{lp}.ln1.b")
        else:
            d_sum = _layernorm_bwd(d_x, params[f"{lp}.ln2.g"], c_ln2, grads,
                                   f"{lp}.ln2.g", f"{lp}.ln2.b")
            d_ff = _dropout_bwd(_droppath_bwd(d_sum, c_dp2), c_do2)
            d_x = d_sum + _branch_mlp_bwd(params, f"{lp}.mlp", c_mlp, d_ff, grads)
            d_sum = _layernorm_bwd(d_x, params[f"{lp}.ln1.g"], c_ln1, grads,
                                   f"{lp}.ln1.g", f"{lp}.ln1.b")
            d_attn = _dropout_bwd(_droppath_bwd(d_sum, c_dp1), c_do1)
            d_x = d_sum + _attention_bwd(params, f"{lp}.attn", c_att, d_attn,
                                         mcfg.heads, grads)
    return d_x


# ---------------------------------------------------------------------------
# grid-level model wrapper
# ---------------------------------------------------------------------------


def model_forward(params, mcfg: ModelConfig, tcfg: TokenConfig, grids, train=False,
                  rng=None, want_cache=False, check_finite=True):
    """Run a batch of token grids. Returns logits (B, N, T, K).

    Training mode recomputes tokens from raw inputs (gradients flow into the
    projections and mask token); evaluation mode uses grid.tokens verbatim.
    """
    b = len(grids)
    n, t = grids[0].present.shape
    embed_caches = []
    toks = []
    for g in grids:
        if g.present.shape != (n, t):
            raise InvariantError("grids in a batch must share geometry")
        if train:
            tok, ec = embed_tokens(g, params, tcfg, want_cache=True)
            embed_caches.append(ec)
        else:
            tok = g.tokens
        toks.append(tok.reshape(n * t, -1))
    x = np.stack(toks)
    attn = np.stack([g.attention_mask for g in grids])
    out = encoder_forward(params, mcfg, x, attn, train=train, rng=rng,
                          want_cache=want_cache, check_finite=check_finite)
    if want_cache:
        logits, enc_cache = out
        return logits.reshape(b, n, t, -1), (enc_cache, embed_caches)
    return out.reshape(b, n, t, -1)


def model_backward(params, mcfg: ModelConfig, tcfg: TokenConfig, grids, cache,
                   d_logits) -> dict:
    """Full parameter gradients for a training batch. d_logits (B,N,T,K)."""
    enc_cache, embed_caches = cache
    b, n, t, k = d_logits.shape
    grads = {key: np.zeros_like(v) for key, v in params.items()}
    d_tokens = encoder_backward(params, mcfg, enc_cache,
                                d_logits.reshape(b, n * t, k), grads)
    for g, ec, dt in zip(grids, embed_caches, d_tokens):
        embed_tokens_backward(g, params, tcfg, ec, dt.reshape(n, t, -1), grads)
    return grads


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------


def bce_loss_and_grad(logits, labels, loss_mask):
    """Mean binary cross-entropy over supervised positions and classes.

    logits/labels (..., K), loss_mask (...) bool. Uses the overflow-safe form
    max(z,0) - z*y + log1p(exp(-|z|)). Returns (loss, d_logits) where the
    gradient is zero off the mask. Raises when the mask is empty.
    """
    n_pos = int(loss_mask.sum())
    if n_pos == 0:
        raise InvariantError("loss mask selects no positions")
    k = logits.shape[-1]
    z = logits[loss_mask]
    y = labels[loss_mask]
    per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    loss = float(per.sum() / (n_pos * k))
    sig = 0.5 * (1.0 + np.tanh(0.5 * z))  # sigmoid without overflow
    d = np.zeros_like(logits)
    d[loss_mask] = (sig - y) / (n_pos * k)
    return loss, d


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path, params: dict, mcfg: ModelConfig, tcfg: TokenConfig,
                    extra: dict = None) -> None:
    """Magic line, one JSON metadata line, then raw little-endian float64."""
    names = sorted(params)
    meta = {
        "model": asdict(mcfg),
        "tokens": asdict(tcfg),
        "params": [[n, list(params[n].shape)] for n in names],
        "extra": extra or {},
    }
    buf = io.BytesIO()
    buf.write((CKPT_FORMAT + "\n").encode())
    buf.write((json.dumps(meta, sort_keys=True, separators=(",", ":")) + "\n").encode())
    for n in names:
        buf.write(np.ascontiguousarray(params[n], dtype="<f8").tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_checkpoint(path):
    """Returns (params, model_cfg, token_cfg, extra)."""
    with open(path, "rb") as f:
        blob = f.read()
    nl1 = blob.find(b"\n")
    if nl1 < 0:
        raise CheckpointFormatError("missing header line")
    magic = blob[:nl1].decode(errors="replace")
    if magic != CKPT_FORMAT:
        raise UnsupportedCheckpointVersion(f"expected {CKPT_FORMAT!r}, found {magic!r}")
    nl2 = blob.find(b"\n", nl1 + 1)
    if nl2 < 0:
        raise CheckpointFormatError("missing metadata line")
    try:
        meta = json.loads(blob[nl1 + 1 : nl2].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointFormatError(f"bad metadata: {e}") from None
    try:
        mcfg = ModelConfig(**meta["model"])
        tcfg = TokenConfig(**meta["tokens"])
        entries = meta["params"]
    except (KeyError, TypeError) as e:
        raise CheckpointFormatError(f"bad metadata: {e}") from None
    params = {}
    off = nl2 + 1
    for name, shape in entries:
        size = int(np.prod(shape)) if shape else 1
        nbytes = size * 8
        if off + nbytes > len(blob):
            raise CheckpointFormatError(f"truncated tensor data at {name!r}")
        arr = np.frombuffer(blob[off : off + nbytes], dtype="<f8").reshape(shape)
        params[name] = arr.astype(np.float64)
        off += nbytes
    if off != len(blob):
        raise CheckpointFormatError("trailing bytes after tensor data")
    return params, mcfg, tcfg, meta.get("extra", {})
