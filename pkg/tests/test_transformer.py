import numpy as np
import pytest

from conftest import make_clip

from lart.seeds import substream
from lart.tokens import TokenConfig, apply_mask_tokens, assemble_grid
from lart.tracklets import InvariantError
from lart.transformer import (
    CKPT_FORMAT,
    CheckpointFormatError,
    ModelConfig,
    NumericError,
    UnsupportedCheckpointVersion,
    _attention_fwd,
    bce_loss_and_grad,
    count_parameters,
    init_parameters,
    load_checkpoint,
    model_backward,
    model_forward,
    save_checkpoint,
)

MICRO_M = ModelConfig(layers=2, heads=2, d_model=8, mlp_ratio=2,
                      dropout=0.0, drop_path=0.0, n_classes=5)
MICRO_T = TokenConfig(d_model=8, n_tracks=2, window=3, pose_embed=8, appearance_embed=0)


def micro_batch(rng, params, tcfg=MICRO_T):
    """Three grids covering masked tokens, a gap, a window offset and padding."""
    c1 = make_clip(rng, n_tracks=2, num_frames=3)
    c2 = make_clip(rng, n_tracks=2, num_frames=4, gap_frames={(0, 1)})
    c3 = make_clip(rng, n_tracks=1, num_frames=3)
    g1 = assemble_grid(c1, 0, [1], tcfg, params)
    g1 = apply_mask_tokens(g1, 0.4, params, tcfg, np.random.default_rng(5))
    g2 = assemble_grid(c2, 1, [0], tcfg, params, window_start=1)
    g3 = assemble_grid(c3, 0, [], tcfg, params)
    return [g1, g2, g3]


def batch_targets(grids):
    labels = np.stack([g.labels for g in grids])
    mask = np.stack([g.loss_mask for g in grids])
    return labels, mask


def fd_check(params, loss_fn, grads, keys=None, picks=None, tol_abs=1e-7, tol_rel=1e-5):
    """Central-difference check of ``grads`` against ``loss_fn``.

    picks=None probes every element; an integer probes that many
    deterministically chosen elements per tensor.
    """
    eps = 1e-6
    sel_rng = np.random.default_rng(0)
    for k in sorted(keys or params):
        flat = params[k].ravel()
        g = grads[k].ravel()
        if picks is None or flat.size <= picks:
            idxs = range(flat.size)
        else:
            idxs = sel_rng.choice(flat.size, size=picks, replace=False)
        for idx in idxs:
            orig = flat[idx]
            flat[idx] = orig + eps
            lp = loss_fn()
            flat[idx] = orig - eps
            lm = loss_fn()
            flat[idx] = orig
            fd = (lp - lm) / (2 * eps)
            assert abs(fd - g[idx]) <= tol_abs + tol_rel * abs(fd), (k, int(idx), fd, g[idx])


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------


def test_full_elementwise_gradients_micro_profile(rng):
    params = init_parameters(MICRO_M, MICRO_T, seed=3)
    grids = micro_batch(rng, params)
    labels, mask = batch_targets(grids)

    def loss_fn():
        logits = model_forward(params, MICRO_M, MICRO_T, grids, train=True)
        return bce_loss_and_grad(logits, labels, mask)[0]

    logits, cache = model_forward(params, MICRO_M, MICRO_T, grids, train=True,
                                  want_cache=True)
    loss, d_logits = bce_loss_and_grad(logits, labels, mask)
    grads = model_backward(params, MICRO_M, MICRO_T, grids, cache, d_logits)

    assert set(grads) == set(params)
    for k in params:
        assert grads[k].shape == params[k].shape
    fd_check(params, loss_fn, grads)


def test_gradients_postnorm(rng):
    mcfg = ModelConfig(layers=2, heads=2, d_model=8, mlp_ratio=2,
                       dropout=0.0, drop_path=0.0, n_classes=5, norm_position="post")
    params = init_parameters(mcfg, MICRO_T, seed=4)
    assert "final_ln.g" not in params
    grids = micro_batch(rng, params)
    labels, mask = batch_targets(grids)

    def loss_fn():
        logits = model_forward(params, mcfg, MICRO_T, grids, train=True)
        return bce_loss_and_grad(logits, labels, mask)[0]

    logits, cache = model_forward(params, mcfg, MICRO_T, grids, train=True, want_cache=True)
    _, d_logits = bce_loss_and_grad(logits, labels, mask)
    grads = model_backward(params, mcfg, MICRO_T, grids, cache, d_logits)
    fd_check(params, loss_fn, grads, picks=25)


def test_gradients_with_dropout_and_droppath(rng):
    mcfg = ModelConfig(layers=2, heads=2, d_model=8, mlp_ratio=2,
                       dropout=0.3, drop_path=0.25, n_classes=5)
    params = init_parameters(mcfg, MICRO_T, seed=6)
    grids = micro_batch(rng, params)
    labels, mask = batch_targets(grids)

    def loss_fn():
        # same substream every call, so every probe sees identical masks
        logits = model_forward(params, mcfg, MICRO_T, grids, train=True,
                               rng=substream(77, "fd"))
        return bce_loss_and_grad(logits, labels, mask)[0]

    logits, cache = model_forward(params, mcfg, MICRO_T, grids, train=True,
                                  rng=substream(77, "fd"), want_cache=True)
    _, d_logits = bce_loss_and_grad(logits, labels, mask)
    grads = model_backward(params, mcfg, MICRO_T, grids, cache, d_logits)
    fd_check(params, loss_fn, grads, picks=20)


def test_gradients_fused_appearance_channel(rng):
    tcfg = TokenConfig(d_model=8, n_tracks=2, window=3, pose_embed=4, appearance_embed=4)
    params = init_parameters(MICRO_M, tcfg, seed=8)
    clip = make_clip(rng, n_tracks=2, num_frames=3, with_appearance=True)
    g = assemble_grid(clip, 0, [1], tcfg, params)
    g = apply_mask_tokens(g, 0.4, params, tcfg, np.random.default_rng(1))
    grids = [g]
    labels, mask = batch_targets(grids)

    def loss_fn():
        logits = model_forward(params, MICRO_M, tcfg, grids, train=True)
        return bce_loss_and_grad(logits, labels, mask)[0]

    logits, cache = model_forward(params, MICRO_M, tcfg, grids, train=True, want_cache=True)
    _, d_logits = bce_loss_and_grad(logits, labels, mask)
    grads = model_backward(params, MICRO_M, tcfg, grids, cache, d_logits)
    fd_check(params, loss_fn, grads,
             keys=[k for k in params if k.startswith(("app_proj", "pose_proj", "mask_token"))],
             picks=30)


def test_backward_is_deterministic(rng):
    params = init_parameters(MICRO_M, MICRO_T, seed=3)
    grids = micro_batch(rng, params)
    labels, mask = batch_targets(grids)
    out = []
    for _ in range(2):
        logits, cache = model_forward(params, MICRO_M, MICRO_T, grids, train=True,
                                      want_cache=True)
        _, d_logits = bce_loss_and_grad(logits, labels, mask)
        out.append(model_backward(params, MICRO_M, MICRO_T, grids, cache, d_logits))
    for k in out[0]:
        assert np.array_equal(out[0][k], out[1][k])


# ---------------------------------------------------------------------------
# masking isolation
# ---------------------------------------------------------------------------


def test_masked_positions_cannot_leak(rng):
    params = init_parameters(MICRO_M, MICRO_T, seed=9)
    clip = make_clip(rng, n_tracks=2, num_frames=3, gap_frames={(1, 2)})
    g = assemble_grid(clip, 0, [1], MICRO_T, params)
    g = apply_mask_tokens(g, 0.4, params, MICRO_T, np.random.default_rng(2))
    base = model_forward(params, MICRO_M, MICRO_T, [g], train=False)
    vis = g.present & ~g.masked
    hidden = ~vis

    for trial in range(20):
        noise_rng = np.random.default_rng(100 + trial)
        poked = g.tokens.copy()
        poked[hidden] += noise_rng.normal(0, 10, (int(hidden.sum()), 8))
        g2 = type(g)(**{**g.__dict__, "tokens": poked})
        out = model_forward(params, MICRO_M, MICRO_T, [g2], train=False)
        assert np.array_equal(out[0][vis], base[0][vis])

    # control: perturbing a visible token must move some visible logit,
    # otherwise the check above is vacuous
    poked = g.tokens.copy()
    i, t = np.argwhere(vis)[0]
    poked[i, t] += 0.1
    g3 = type(g)(**{**g.__dict__, "tokens": poked})
    out = model_forward(params, MICRO_M, MICRO_T, [g3], train=False)
    assert not np.array_equal(out[0][vis], base[0][vis])


def test_attention_probabilities(rng):
    params = init_parameters(MICRO_M, MICRO_T, seed=11)
    a = rng.standard_normal((2, 5, 8))
    mask = rng.random((2, 5, 5)) < 0.5
    mask |= np.eye(5, dtype=bool)[None]
    add = np.where(mask[:, None], 0.0, -1e9)
    out, cache = _attention_fwd(params, "layers.0.attn", a, add, heads=2)
    p = cache[4]
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, rtol=0, atol=1e-12)
    # disallowed keys get an exactly zero weight in every head
    blocked = np.broadcast_to(~mask[:, None], p.shape)
    assert (p[blocked] == 0.0).all()
    assert out.shape == (2, 5, 8)


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------


def test_bce_matches_naive_oracle(rng):
    # moderate logits: the textbook form is itself accurate there
    z = rng.uniform(-8, 8, (2, 3, 4, 6))
    y = (rng.random(z.shape) < 0.4).astype(float)
    mask = rng.random(z.shape[:-1]) < 0.7
    mask.flat[0] = True
    loss, grad = bce_loss_and_grad(z, y, mask)

    sig = 1.0 / (1.0 + np.exp(-z))
    naive = -(y * np.log(sig) + (1 - y) * np.log(1 - sig))
    expect = naive[mask].sum() / (mask.sum() * 6)
    assert abs(loss - expect) < 1e-12

    d = np.zeros_like(z)
    d[mask] = (sig[mask] - y[mask]) / (mask.sum() * 6)
    np.testing.assert_allclose(grad, d, rtol=0, atol=1e-12)
    assert (grad[~mask] == 0.0).all()


def test_bce_extreme_logits_finite():
    z = np.array([[500.0, -500.0, 0.0]])
    y = np.array([[1.0, 1.0, 0.0]])
    mask = np.array([True])
    loss, grad = bce_loss_and_grad(z, y, mask)
    assert np.isfinite(loss) and np.isfinite(grad).all()
    # saturated correct prediction costs ~0, saturated wrong one costs |z|
    assert abs(loss - (0.0 + 500.0 + np.log(2.0)) / 3.0) < 1e-12


def test_bce_grad_matches_fd(rng):
    z = rng.uniform(-3, 3, (4, 5))
    y = (rng.random(z.shape) < 0.5).astype(float)
    mask = np.ones(4, dtype=bool)
    _, grad = bce_loss_and_grad(z, y, mask)
    eps = 1e-6
    for i in range(4):
        for j in range(5):
            orig = z[i, j]
            z[i, j] = orig + eps
            lp = bce_loss_and_grad(z, y, mask)[0]
            z[i, j] = orig - eps
            lm = bce_loss_and_grad(z, y, mask)[0]
            z[i, j] = orig
            fd = (lp - lm) / (2 * eps)
            assert abs(fd - grad[i, j]) < 1e-9


def test_bce_empty_mask_raises(rng):
    z = rng.standard_normal((2, 3))
    with pytest.raises(InvariantError):
        bce_loss_and_grad(z, np.zeros_like(z), np.zeros(2, dtype=bool))


# ---------------------------------------------------------------------------
# init, config, diagnostics
# ---------------------------------------------------------------------------


def test_init_parameters_layout():
    p = init_parameters(MICRO_M, MICRO_T, seed=3)
    q = init_parameters(MICRO_M, MICRO_T, seed=3)
    r = init_parameters(MICRO_M, MICRO_T, seed=4)
    assert set(p) == set(q) and all(np.array_equal(p[k], q[k]) for k in p)
    assert any(not np.array_equal(p[k], r[k]) for k in p)

    assert np.array_equal(p["mask_token"], np.zeros(8))
    assert np.array_equal(p["layers.0.ln1.g"], np.ones(8))
    assert np.array_equal(p["layers.0.ln1.b"], np.zeros(8))
    assert np.array_equal(p["head.b"], np.zeros(5))
    # residual branch outputs are shrunk by 1/sqrt(2 * layers)
    bound = 1.0 / np.sqrt(8.0)
    res = bound / np.sqrt(2.0 * 2)
    assert np.abs(p["layers.0.attn.wqkv"]).max() <= bound
    assert np.abs(p["layers.0.attn.wqkv"]).max() > res
    assert np.abs(p["layers.0.attn.wo"]).max() <= res
    assert np.abs(p["layers.1.mlp.w2"]).max() <= 1.0 / np.sqrt(16.0) / np.sqrt(4.0)
    assert count_parameters(p) == sum(v.size for v in p.values())


def test_model_config_validation():
    with pytest.raises(InvariantError):
        ModelConfig(d_model=10, heads=4)
    with pytest.raises(InvariantError):
        ModelConfig(norm_position="middle")
    with pytest.raises(InvariantError):
        ModelConfig(dropout=1.0)
    with pytest.raises(InvariantError):
        ModelConfig(mlp_ratio=0)
    with pytest.raises(InvariantError):
        init_parameters(ModelConfig(d_model=16, heads=2), MICRO_T, seed=0)


def test_nonfinite_diagnostics(rng):
    params = init_parameters(MICRO_M, MICRO_T, seed=3)
    grids = micro_batch(rng, params)
    params["layers.1.mlp.w2"][0, 0] = np.nan
    with pytest.raises(NumericError, match="layer 1"):
        model_forward(params, MICRO_M, MICRO_T, grids, train=True)

    params2 = init_parameters(MICRO_M, MICRO_T, seed=3)
    bad = grids[1]
    bad.tokens = bad.tokens.copy()
    bad.tokens[0, 0, 0] = np.inf
    with pytest.raises(NumericError, match="input tokens"):
        model_forward(params2, MICRO_M, MICRO_T, [bad], train=False)


def test_eval_and_train_token_sources(rng):
    params = init_parameters(MICRO_M, MICRO_T, seed=3)
    clip = make_clip(rng, n_tracks=2, num_frames=3)
    g = assemble_grid(clip, 0, [1], MICRO_T, params)
    base_eval = model_forward(params, MICRO_M, MICRO_T, [g], train=False)
    base_train = model_forward(params, MICRO_M, MICRO_T, [g], train=True)
    np.testing.assert_allclose(base_eval, base_train, rtol=0, atol=0)

    g.tokens = g.tokens + 0.5
    poked_eval = model_forward(params, MICRO_M, MICRO_T, [g], train=False)
    poked_train = model_forward(params, MICRO_M, MICRO_T, [g], train=True)
    assert not np.array_equal(poked_eval, base_eval)     # eval reads tokens
    assert np.array_equal(poked_train, base_train)       # train recomputes


def test_batch_geometry_mismatch(rng):
    params = init_parameters(MICRO_M, MICRO_T, seed=3)
    g1 = assemble_grid(make_clip(rng, 2, 3), 0, [1], MICRO_T, params)
    other = TokenConfig(d_model=8, n_tracks=2, window=4, pose_embed=8, appearance_embed=0)
    g2 = assemble_grid(make_clip(rng, 2, 4), 0, [1], other, params)
    with pytest.raises(InvariantError, match="geometry"):
        model_forward(params, MICRO_M, MICRO_T, [g1, g2])


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def test_checkpoint_roundtrip_bit_exact(rng, tmp_path):
    params = init_parameters(MICRO_M, MICRO_T, seed=3)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, params, MICRO_M, MICRO_T, extra={"epoch": 7, "note": "x"})
    loaded, mcfg, tcfg, extra = load_checkpoint(path)
    assert mcfg == MICRO_M and tcfg == MICRO_T
    assert extra == {"epoch": 7, "note": "x"}
    assert set(loaded) == set(params)
    for k in params:
        assert np.array_equal(loaded[k], params[k])
        assert loaded[k].dtype == np.float64

    with open(path, "rb") as f:
        head = f.readline().decode().strip()
    assert head == CKPT_FORMAT

    # byte stability of a rewrite
    path2 = tmp_path / "m2.ckpt"
    save_checkpoint(path2, params, MICRO_M, MICRO_T, extra={"epoch": 7, "note": "x"})
    assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_rejections(rng, tmp_path):
    params = init_parameters(MICRO_M, MICRO_T, seed=3)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, params, MICRO_M, MICRO_T)
    blob = path.read_bytes()

    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"lart-ckpt/9\n" + blob.split(b"\n", 1)[1])
    with pytest.raises(UnsupportedCheckpointVersion):
        load_checkpoint(bad)

    trunc = tmp_path / "trunc.ckpt"
    trunc.write_bytes(blob[:-16])
    with pytest.raises(CheckpointFormatError, match="truncated"):
        load_checkpoint(trunc)

    trail = tmp_path / "trail.ckpt"
    trail.write_bytes(blob + b"\x00" * 8)
    with pytest.raises(CheckpointFormatError, match="trailing"):
        load_checkpoint(trail)

    nometa = tmp_path / "nometa.ckpt"
    nometa.write_bytes(b"lart-ckpt/1\nnot json{\n")
    with pytest.raises(CheckpointFormatError, match="bad metadata"):
        load_checkpoint(nometa)
