"""Return-conditioned sequence model over irregular-time packet decisions.

Each trajectory step contributes four tokens (return-to-go, observation,
decision, wait time). A token's embedding is the concatenation of a
sinusoidal embedding of the step's arrival time, a learned projection of
the token's value, and a learned type embedding. Stacked causally masked
self-attention blocks (raw dot-product scores, post-block layer norm)
feed two readout heads: decision logits at each observation token and a
wait-time regression at each decision token, so the wait prediction
conditions on the decision taken.

Everything is float64 numpy with hand-written gradients; exactness of the
causal mask and finite-difference agreement are tested properties, not
aspirations.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from nidseq import tensorio
from nidseq._net import Adam, check_finite_loss, clip_global_norm, glorot_uniform, relu, softmax
from nidseq._validation import DimensionMismatch, EmptyWindow
from nidseq.trajectory import Step, Trajectory, WindowSampler

_LN_EPS = 1e-5

# Token type ids, in within-step order.
TYPE_RTG, TYPE_OBS, TYPE_DEC, TYPE_WAIT = 0, 1, 2, 3


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and loss knobs; d_model is the sum of the three parts."""

    k: int = 20
    d_time: int = 32
    d_value: int = 64
    d_type: int = 32
    n_layers: int = 3
    n_heads: int = 4
    d_ff: int = 256
    c: float = 10000.0
    obs_dim: int = 113
    n_decisions: int = 3
    action_mode: str = "discrete"
    lambda_wait: float = 0.1

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"K must be >= 1, got {self.k}")
        if self.c <= 0:
            raise ValueError(f"C must be positive, got {self.c}")
        if min(self.d_time, self.d_value, self.d_type) < 1:
            raise ValueError("embedding widths must be positive")
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by {self.n_heads} heads")
        if self.action_mode not in ("discrete", "continuous"):
            raise ValueError(f"action_mode must be discrete or continuous, got {self.action_mode!r}")

    @property
    def d_model(self) -> int:
        return self.d_time + self.d_value + self.d_type


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 64
    steps: int = 1000
    grad_clip: float = 1.0
    seed: int = 0


def temporal_embedding(t, d_time: int, c: float = 10000.0) -> np.ndarray:
    """Sinusoidal embedding of arrival times.

    Dimension k in 1..d_time holds sin(t / c^(k/d_time)) for even k and
    cos(t / c^((k-1)/d_time)) for odd k. Works on scalars or arrays,
    appending the d_time axis last.
    """
    if d_time < 1:
        raise ValueError(f"d_time must be >= 1, got {d_time}")
    t = np.asarray(t, dtype=np.float64)
    ks = np.arange(1, d_time + 1, dtype=np.float64)
    even = ks % 2 == 0
    exponent = np.where(even, ks, ks - 1.0) / d_time
    angle = t[..., None] / np.power(c, exponent)
    return np.where(even, np.sin(angle), np.cos(angle))


def init_params(cfg: ModelConfig, seed: int) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    d = cfg.d_model
    p: dict[str, np.ndarray] = {
        "val_rtg_w": glorot_uniform(rng, 1, cfg.d_value),
        "val_rtg_b": np.zeros(cfg.d_value),
        "val_obs_w": glorot_uniform(rng, cfg.obs_dim, cfg.d_value),
        "val_obs_b": np.zeros(cfg.d_value),
        "val_dec_w": glorot_uniform(rng, cfg.n_decisions, cfg.d_value),
        "val_dec_b": np.zeros(cfg.d_value),
        "val_wait_w": glorot_uniform(rng, 1, cfg.d_value),
        "val_wait_b": np.zeros(cfg.d_value),
        "type_emb": glorot_uniform(rng, 4, cfg.d_type),
    }
    for l in range(cfg.n_layers):
        for name in ("wq", "wk", "wv", "wo"):
            p[f"l{l}_{name}"] = glorot_uniform(rng, d, d)
            p[f"l{l}_b{name[1]}"] = np.zeros(d)
        p[f"l{l}_ln1_g"] = np.ones(d)
        p[f"l{l}_ln1_b"] = np.zeros(d)
        p[f"l{l}_ff1_w"] = glorot_uniform(rng, d, cfg.d_ff)
        p[f"l{l}_ff1_b"] = np.zeros(cfg.d_ff)
        p[f"l{l}_ff2_w"] = glorot_uniform(rng, cfg.d_ff, d)
        p[f"l{l}_ff2_b"] = np.zeros(d)
        p[f"l{l}_ln2_g"] = np.ones(d)
        p[f"l{l}_ln2_b"] = np.zeros(d)
    p["head_dec_w"] = glorot_uniform(rng, d, cfg.n_decisions)
    p["head_dec_b"] = np.zeros(cfg.n_decisions)
    p["head_wait_w"] = glorot_uniform(rng, d, 1)
    p["head_wait_b"] = np.zeros(1)
    return p


@dataclass
class Batch:
    """Left-padded step arrays for a batch of windows."""

    times: np.ndarray  # (B, S)
    rtgs: np.ndarray  # (B, S)
    obs: np.ndarray  # (B, S, obs_dim)
    decs: np.ndarray  # (B, S) int
    waits: np.ndarray  # (B, S)
    real: np.ndarray  # (B, S) bool


def pack_windows(windows: list[list[Step]], cfg: ModelConfig) -> Batch:
    """Stack variable-length windows, left-padding with inert zero steps."""
    if not windows or any(len(w) == 0 for w in windows):
        raise EmptyWindow("every window must contain at least one step")
    if any(len(w) > cfg.k for w in windows):
        raise ValueError(f"window longer than K={cfg.k}")
    b = len(windows)
    s = max(len(w) for w in windows)
    batch = Batch(
        times=np.zeros((b, s)),
        rtgs=np.zeros((b, s)),
        obs=np.zeros((b, s, cfg.obs_dim)),
        decs=np.zeros((b, s), dtype=np.int64),
        waits=np.zeros((b, s)),
        real=np.zeros((b, s), dtype=bool),
    )
    for i, window in enumerate(windows):
        off = s - len(window)
        for j, step in enumerate(window):
            if step.obs.shape[0] != cfg.obs_dim:
                raise DimensionMismatch(
                    f"observation has {step.obs.shape[0]} features, config says {cfg.obs_dim}"
                )
            batch.times[i, off + j] = step.t
            batch.rtgs[i, off + j] = step.rtg
            batch.obs[i, off + j] = step.obs
            batch.decs[i, off + j] = step.d
            batch.waits[i, off + j] = step.w
            batch.real[i, off + j] = True
    return batch


def tokenize(params: dict, cfg: ModelConfig, batch: Batch) -> tuple[np.ndarray, dict]:
    """Embed a batch into (B, 4S, d_model) token vectors.

    Token order per step is RTG, OBS, DEC, WAIT; all four share the step's
    temporal embedding. Returns the embedding cache needed for backprop.
    """
    b, s = batch.times.shape
    temb = temporal_embedding(batch.times, cfg.d_time, cfg.c)
    onehot = np.eye(cfg.n_decisions)[batch.decs]
    values = np.stack(
        [
            batch.rtgs[..., None] @ params["val_rtg_w"] + params["val_rtg_b"],
            batch.obs @ params["val_obs_w"] + params["val_obs_b"],
            onehot @ params["val_dec_w"] + params["val_dec_b"],
            batch.waits[..., None] @ params["val_wait_w"] + params["val_wait_b"],
        ],
        axis=2,
    )  # (B, S, 4, d_value)
    temporal = np.broadcast_to(temb[:, :, None, :], (b, s, 4, cfg.d_time))
    types = np.broadcast_to(params["type_emb"][None, None, :, :], (b, s, 4, cfg.d_type))
    x0 = np.concatenate([temporal, values, types], axis=-1).reshape(b, 4 * s, cfg.d_model)
    cache = {"batch": batch, "onehot": onehot}
    return x0, cache


def _layer_norm(x: np.ndarray, g: np.ndarray, b: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    istd = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + _LN_EPS)
    xhat = xc * istd
    return g * xhat + b, (xhat, istd)


def _layer_norm_backward(dy: np.ndarray, g: np.ndarray, cache) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xhat, istd = cache
    dg = (dy * xhat).sum(axis=(0, 1))
    db = dy.sum(axis=(0, 1))
    dxhat = dy * g
    dx = istd * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


def _split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    b, t, d = x.shape
    return x.reshape(b, t, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, h, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * dh)


def forward_tokens(
    params: dict, cfg: ModelConfig, x0: np.ndarray, token_real: np.ndarray
) -> tuple[np.ndarray, list]:
    """Run the attention stack over already-embedded tokens.

    token_real marks which tokens exist; masked positions are never
    attended to, making prefix outputs exactly independent of suffix
    content. Returns the final token states and per-layer caches.
    """
    b, t, _ = x0.shape
    allowed = np.tril(np.ones((t, t), dtype=bool))[None, :, :] & token_real[:, None, :]
    x = x0
    caches = []
    for l in range(cfg.n_layers):
        q = x @ params[f"l{l}_wq"] + params[f"l{l}_bq"]
        k = x @ params[f"l{l}_wk"] + params[f"l{l}_bk"]
        v = x @ params[f"l{l}_wv"] + params[f"l{l}_bv"]
        qh, kh, vh = (_split_heads(a, cfg.n_heads) for a in (q, k, v))
        # Raw dot-product scores, deliberately unscaled.
        scores = qh @ kh.transpose(0, 1, 3, 2)
        scores = np.where(allowed[:, None, :, :], scores, -np.inf)
        rowmax = scores.max(axis=-1, keepdims=True)
        rowmax = np.where(np.isfinite(rowmax), rowmax, 0.0)
        e = np.exp(scores - rowmax)
        z = e.sum(axis=-1, keepdims=True)
        att = e / np.where(z == 0.0, 1.0, z)
        ctx = _merge_heads(att @ vh)
        attn_out = ctx @ params[f"l{l}_wo"] + params[f"l{l}_bo"]
        x1, ln1 = _layer_norm(x + attn_out, params[f"l{l}_ln1_g"], params[f"l{l}_ln1_b"])
        ff_a = x1 @ params[f"l{l}_ff1_w"] + params[f"l{l}_ff1_b"]
        ff_h = relu(ff_a)
        ff_o = ff_h @ params[f"l{l}_ff2_w"] + params[f"l{l}_ff2_b"]
        x2, ln2 = _layer_norm(x1 + ff_o, params[f"l{l}_ln2_g"], params[f"l{l}_ln2_b"])
        caches.append(
            {"x": x, "qh": qh, "kh": kh, "vh": vh, "att": att, "ctx": ctx,
             "ln1": ln1, "x1": x1, "ff_a": ff_a, "ff_h": ff_h, "ln2": ln2}
        )
        x = x2
    return x, caches


def backward_tokens(
    params: dict, cfg: ModelConfig, dx_final: np.ndarray, caches: list
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Backpropagate through the attention stack; returns dX0 and param grads."""
    grads: dict[str, np.ndarray] = {}
    dx = dx_final
    for l in range(cfg.n_layers - 1, -1, -1):
        c = caches[l]
        dx1_ff, dg2, db2 = _layer_norm_backward(dx, params[f"l{l}_ln2_g"], c["ln2"])
        grads[f"l{l}_ln2_g"] = dg2
        grads[f"l{l}_ln2_b"] = db2
        dff_o = dx1_ff
        b, t, _ = dff_o.shape
        flat_h = c["ff_h"].reshape(-1, cfg.d_ff)
        grads[f"l{l}_ff2_w"] = flat_h.T @ dff_o.reshape(-1, cfg.d_model)
        grads[f"l{l}_ff2_b"] = dff_o.sum(axis=(0, 1))
        dff_h = dff_o @ params[f"l{l}_ff2_w"].T
        dff_a = dff_h * (c["ff_a"] > 0)
        flat_x1 = c["x1"].reshape(-1, cfg.d_model)
        grads[f"l{l}_ff1_w"] = flat_x1.T @ dff_a.reshape(-1, cfg.d_ff)
        grads[f"l{l}_ff1_b"] = dff_a.sum(axis=(0, 1))
        dx1 = dx1_ff + dff_a @ params[f"l{l}_ff1_w"].T

        dres1, dg1, db1 = _layer_norm_backward(dx1, params[f"l{l}_ln1_g"], c["ln1"])
        grads[f"l{l}_ln1_g"] = dg1
        grads[f"l{l}_ln1_b"] = db1
        dattn_out = dres1
        flat_ctx = c["ctx"].reshape(-1, cfg.d_model)
        grads[f"l{l}_wo"] = flat_ctx.T @ dattn_out.reshape(-1, cfg.d_model)
        grads[f"l{l}_bo"] = dattn_out.sum(axis=(0, 1))
        dctx = _split_heads(dattn_out @ params[f"l{l}_wo"].T, cfg.n_heads)

        att, vh, qh, kh = c["att"], c["vh"], c["qh"], c["kh"]
        datt = dctx @ vh.transpose(0, 1, 3, 2)
        dvh = att.transpose(0, 1, 3, 2) @ dctx
        # Masked entries have att == 0, so their score gradient vanishes.
        ds = att * (datt - (datt * att).sum(axis=-1, keepdims=True))
        dqh = ds @ kh
        dkh = ds.transpose(0, 1, 3, 2) @ qh
        dq, dk, dv = (_merge_heads(a) for a in (dqh, dkh, dvh))
        x = c["x"]
        flat_x = x.reshape(-1, cfg.d_model)
        for name, dten in (("q", dq), ("k", dk), ("v", dv)):
            grads[f"l{l}_w{name}"] = flat_x.T @ dten.reshape(-1, cfg.d_model)
            grads[f"l{l}_b{name}"] = dten.sum(axis=(0, 1))
        dx = (
            dres1
            + dq @ params[f"l{l}_wq"].T
            + dk @ params[f"l{l}_wk"].T
            + dv @ params[f"l{l}_wv"].T
        )
    return dx, grads


def embed_backward(
    params: dict, cfg: ModelConfig, dx0: np.ndarray, cache: dict, grads: dict
) -> None:
    """Accumulate embedding-parameter gradients from token-level gradients."""
    batch: Batch = cache["batch"]
    b, s = batch.times.shape
    per_step = dx0.reshape(b, s, 4, cfg.d_model)
    d_val = per_step[..., cfg.d_time : cfg.d_time + cfg.d_value]
    d_type = per_step[..., cfg.d_time + cfg.d_value :]
    grads["val_rtg_w"] = (batch.rtgs[..., None] * d_val[:, :, 0]).sum(axis=(0, 1))[None, :]
    grads["val_rtg_b"] = d_val[:, :, 0].sum(axis=(0, 1))
    grads["val_obs_w"] = np.einsum("bso,bsd->od", batch.obs, d_val[:, :, 1])
    grads["val_obs_b"] = d_val[:, :, 1].sum(axis=(0, 1))
    grads["val_dec_w"] = np.einsum("bsc,bsd->cd", cache["onehot"], d_val[:, :, 2])
    grads["val_dec_b"] = d_val[:, :, 2].sum(axis=(0, 1))
    grads["val_wait_w"] = (batch.waits[..., None] * d_val[:, :, 3]).sum(axis=(0, 1))[None, :]
    grads["val_wait_b"] = d_val[:, :, 3].sum(axis=(0, 1))
    grads["type_emb"] = d_type.sum(axis=(0, 1))


def forward(params: dict, cfg: ModelConfig, batch: Batch):
    """Full forward pass: (decision logits (B,S,n_dec), wait preds (B,S), caches)."""
    x0, emb_cache = tokenize(params, cfg, batch)
    token_real = np.repeat(batch.real, 4, axis=1)
    x, caches = forward_tokens(params, cfg, x0, token_real)
    obs_states = x[:, 1::4, :]
    dec_states = x[:, 2::4, :]
    logits = obs_states @ params["head_dec_w"] + params["head_dec_b"]
    wait_preds = (dec_states @ params["head_wait_w"])[..., 0] + params["head_wait_b"][0]
    return logits, wait_preds, (emb_cache, caches, obs_states, dec_states)


def forward_window(params: dict, cfg: ModelConfig, steps: list[Step]):
    """Single-window convenience: logits (S, n_dec) and wait predictions (S,)."""
    batch = pack_windows([steps], cfg)
    logits, wait_preds, _ = forward(params, cfg, batch)
    return logits[0], wait_preds[0]


def _discrete_loss_grads(
    logits: np.ndarray,
    decisions: np.ndarray,
    wait_preds: np.ndarray,
    waits: np.ndarray,
    lambda_wait: float,
    real: np.ndarray,
):
    """Loss plus gradients w.r.t. logits and wait predictions (zero at pads)."""
    if logits.shape[:-1] != decisions.shape or wait_preds.shape != waits.shape:
        raise DimensionMismatch("logits/decisions/waits are misaligned")
    n = int(real.sum())
    if n == 0:
        raise EmptyWindow("loss over zero real steps")
    p = softmax(logits, axis=-1)
    picked = np.take_along_axis(p, decisions[..., None], axis=-1)[..., 0]
    ce = float(-np.sum(np.log(np.maximum(picked, 1e-300)) * real) / n)
    diff = (wait_preds - waits) * real
    mse = float(np.sum(diff * diff) / n)
    loss = ce + lambda_wait * mse
    onehot = np.eye(logits.shape[-1])[decisions]
    dlogits = (p - onehot) * real[..., None] / n
    dwait = 2.0 * lambda_wait * diff / n
    return loss, dlogits, dwait


def loss_discrete(
    logits: np.ndarray,
    decisions: np.ndarray,
    wait_preds: np.ndarray,
    waits: np.ndarray,
    lambda_wait: float,
    real: np.ndarray | None = None,
) -> float:
    """Mean cross-entropy over decisions plus lambda-weighted wait MSE.

    Means are over real (unpadded) steps.
    """
    decisions = np.asarray(decisions)
    if real is None:
        real = np.ones(decisions.shape, dtype=bool)
    return _discrete_loss_grads(
        np.asarray(logits, dtype=np.float64),
        decisions,
        np.asarray(wait_preds, dtype=np.float64),
        np.asarray(waits, dtype=np.float64),
        lambda_wait,
        real,
    )[0]


def loss_continuous(action_preds: np.ndarray, true_actions: np.ndarray) -> float:
    """Plain mean squared error over all action components."""
    a = np.asarray(action_preds, dtype=np.float64)
    b = np.asarray(true_actions, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"action shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def loss_and_grads(params: dict, cfg: ModelConfig, batch: Batch):
    """One full forward/backward over a packed batch."""
    logits, wait_preds, (emb_cache, caches, obs_states, dec_states) = forward(params, cfg, batch)
    real = batch.real
    if cfg.action_mode == "continuous":
        n = int(real.sum())
        onehot = np.eye(cfg.n_decisions)[batch.decs]
        adiff = (logits - onehot) * real[..., None]
        act_loss = float(np.sum(adiff * adiff) / (n * cfg.n_decisions))
        dlogits = 2.0 * adiff / (n * cfg.n_decisions)
        wdiff = (wait_preds - batch.waits) * real
        mse = float(np.sum(wdiff * wdiff) / n)
        loss = act_loss + cfg.lambda_wait * mse
        dwait = 2.0 * cfg.lambda_wait * wdiff / n
    else:
        loss, dlogits, dwait = _discrete_loss_grads(
            logits, batch.decs, wait_preds, batch.waits, cfg.lambda_wait, real
        )
    grads: dict[str, np.ndarray] = {
        "head_dec_w": np.einsum("bsd,bsc->dc", obs_states, dlogits),
        "head_dec_b": dlogits.sum(axis=(0, 1)),
        "head_wait_w": np.einsum("bsd,bs->d", dec_states, dwait)[:, None],
        "head_wait_b": np.asarray([dwait.sum()]),
    }
    b, t = batch.real.shape[0], 4 * batch.real.shape[1]
    dx = np.zeros((b, t, cfg.d_model))
    dx[:, 1::4, :] = dlogits @ params["head_dec_w"].T
    dx[:, 2::4, :] = dwait[..., None] * params["head_wait_w"][:, 0]
    dx0, layer_grads = backward_tokens(params, cfg, dx, caches)
    grads.update(layer_grads)
    embed_backward(params, cfg, dx0, emb_cache, grads)
    return loss, grads


def train(
    params: dict,
    cfg: ModelConfig,
    trajectories: list[Trajectory],
    train_cfg: TrainConfig,
    weights=None,
) -> tuple[dict, list[float]]:
    """Minibatch training over uniformly sampled length-<=K windows.

    Deterministic given train_cfg.seed. Returns the trained params (same
    dict, updated in place) and the per-step loss curve.
    """
    sampler = WindowSampler(trajectories, cfg.k, weights)
    rng = np.random.default_rng(train_cfg.seed)
    opt = Adam(train_cfg.learning_rate)
    losses: list[float] = []
    for _ in range(train_cfg.steps):
        windows = [sampler.draw(rng) for _ in range(train_cfg.batch_size)]
        batch = pack_windows(windows, cfg)
        loss, grads = loss_and_grads(params, cfg, batch)
        check_finite_loss(loss, "sequence model training")
        clip_global_norm(grads, train_cfg.grad_clip)
        opt.step(params, grads)
        losses.append(loss)
    return params, losses


def predict_action(
    params: dict,
    cfg: ModelConfig,
    history: list[Step],
    t: float,
    rtg: float,
    obs: np.ndarray,
    mask_wait: bool,
) -> tuple[int, float]:
    """Decide at a pending step given completed history.

    The context is the last K-1 completed steps plus the pending step's
    RTG and OBS tokens. The decision is the argmax over logits at the
    pending OBS token (ties to the lowest index; wait masked on demand);
    the wait estimate comes from a second pass that appends the chosen
    decision's DEC token. Negative wait estimates clamp to zero.
    """
    hist = history[-(cfg.k - 1) :] if cfg.k > 1 else []
    pending = Step(t=float(t), rtg=float(rtg), obs=np.asarray(obs, dtype=np.float64), d=0, w=0.0, r=0.0)
    steps = [*hist, pending]
    batch = pack_windows([steps], cfg)
    x0, _ = tokenize(params, cfg, batch)
    token_real = np.repeat(batch.real, 4, axis=1)
    s = batch.real.shape[1]

    n_keep = 4 * (s - 1) + 2  # through the pending OBS token
    x, _ = forward_tokens(params, cfg, x0[:, :n_keep], token_real[:, :n_keep])
    logits = x[0, n_keep - 1] @ params["head_dec_w"] + params["head_dec_b"]
    if mask_wait:
        logits = logits.copy()
        logits[2] = -np.inf
    decision = int(np.argmax(logits))

    chosen = Step(t=pending.t, rtg=pending.rtg, obs=pending.obs, d=decision, w=0.0, r=0.0)
    batch2 = pack_windows([[*hist, chosen]], cfg)
    x0b, _ = tokenize(params, cfg, batch2)
    n_keep2 = 4 * (s - 1) + 3  # through the pending DEC token
    xb, _ = forward_tokens(params, cfg, x0b[:, :n_keep2], token_real[:, :n_keep2])
    wait = float(xb[0, n_keep2 - 1] @ params["head_wait_w"][:, 0] + params["head_wait_b"][0])
    return decision, max(wait, 0.0)


def save_model(path: str, params: dict, cfg: ModelConfig) -> None:
    """Container for the tensors plus a JSON sidecar holding the config."""
    tensorio.save_tensors(path, params, meta={"kind": "sequence-model"})
    with open(path + ".json", "w", encoding="utf-8") as fh:
        json.dump(asdict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path: str) -> tuple[dict, ModelConfig]:
    tensors, meta = tensorio.load_tensors(path)
    if meta.get("kind") != "sequence-model":
        raise ValueError(f"{path}: not a sequence-model container")
    sidecar = path + ".json"
    if not os.path.exists(sidecar):
        raise FileNotFoundError(f"{sidecar}: config sidecar missing")
    with open(sidecar, "r", encoding="utf-8") as fh:
        cfg = ModelConfig(**json.load(fh))
    return tensors, cfg
