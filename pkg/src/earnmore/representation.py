"""Maskable stock representation: embed, mask, encode, fill, decode.

Per stock, a window embeds to one vector: a 1-D convolution over the time
axis of normalized prices + indicators (dense path, mean-pooled over the
window) plus summed lookup embeddings of the calendar categories (sparse
path, shared across stocks). A per-slot two-layer GELU MLP encodes the
visible slots; a pool-summary slot (index 0, the [CLS] slot) is a
dot-product attention readout of the visible latents by a learnable query.
Masked slots are filled with a single learnable token, restoring a fixed
(N+1)-slot representation regardless of which stocks are in the pool.

The decoder reconstructs each masked stock's normalized OHLC window from
[masked token, pool summary]; conditioning on the summary is the only
route by which visible stocks inform the reconstruction, and it is what
carries reconstruction gradients back into the encoder and embeddings.

Everything here is forward math plus explicit backward passes; no autodiff.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from . import nn
from .marketdata import FeatureWindow
from .portfolio_env import PoolMask

DEFAULT_MASK_MU = 0.7
DEFAULT_MASK_SIGMA = 0.1
DEFAULT_MASK_LOW = 0.6
DEFAULT_MASK_HIGH = 0.8

REPR_PARAM_PREFIXES = ("emb/", "enc/", "cls/", "dec/", "token")


class RepresentationError(ValueError):
    pass


@dataclass(frozen=True)
class StockLevelEmbedding:
    """One embedding vector per stock slot, shape (N, E)."""
    vectors: np.ndarray


@dataclass(frozen=True)
class MaskPlan:
    """Partition of the N stock slots into masked and visible sets."""
    ratio: float
    masked_slots: np.ndarray
    visible_slots: np.ndarray

    @property
    def n(self) -> int:
        return len(self.masked_slots) + len(self.visible_slots)

    def visible_bool(self) -> np.ndarray:
        vis = np.zeros(self.n, dtype=bool)
        vis[self.visible_slots] = True
        return vis


@dataclass(frozen=True)
class EncodedLatents:
    """Latents of the visible slots plus the pool-summary slot."""
    cls: np.ndarray           # (E,)
    visible: np.ndarray       # (V, E), ordered as plan.visible_slots
    plan: MaskPlan

    @property
    def count(self) -> int:
        return len(self.visible) + 1


@dataclass(frozen=True)
class MaskableRepresentation:
    """(N+1, E) slot array: slot 0 is the pool summary, slots 1..N stocks."""
    slots: np.ndarray
    masked_flag: np.ndarray   # (N,) bool, True where the token was filled

    @property
    def n_stocks(self) -> int:
        return self.slots.shape[0] - 1

    def flat(self) -> np.ndarray:
        return self.slots.reshape(-1)


@dataclass(frozen=True)
class ReconstructionOutput:
    """Predicted normalized OHLC windows of the masked stocks, (N*, D, 4)."""
    predicted_prices: np.ndarray
    masked_slots: np.ndarray


def init_representation_params(rng: np.random.Generator, embed_dim: int,
                               n_dense_features: int, window: int,
                               kernel: int = 3) -> dict[str, np.ndarray]:
    e = embed_dim
    p = {
        "emb/conv_w": nn.normal_init(rng, (e, n_dense_features, kernel),
                                     n_dense_features * kernel),
        "emb/conv_b": np.zeros(e),
        "emb/dow": 0.02 * rng.standard_normal((7, e)),
        "emb/dom": 0.02 * rng.standard_normal((31, e)),
        "emb/month": 0.02 * rng.standard_normal((12, e)),
        "enc/w1": nn.normal_init(rng, (e, e), e),
        "enc/b1": np.zeros(e),
        "enc/w2": nn.normal_init(rng, (e, e), e),
        "enc/b2": np.zeros(e),
        "cls/query": nn.normal_init(rng, (e,), e),
        "token": 0.02 * rng.standard_normal(e),
        "dec/w1": nn.normal_init(rng, (2 * e, e), 2 * e),
        "dec/b1": np.zeros(e),
        "dec/w2": nn.normal_init(rng, (e, window * 4), e),
        "dec/b2": np.zeros(window * 4),
    }
    return p


def embed_dim_of(params: dict[str, np.ndarray]) -> int:
    return params["token"].shape[0]


def decoder_window_of(params: dict[str, np.ndarray]) -> int:
    return params["dec/w2"].shape[1] // 4


# ---------------------------------------------------------------------------
# mask-ratio sampling and mask planning
# ---------------------------------------------------------------------------

def sample_mask_ratio(rng: np.random.Generator,
                      mu: float = DEFAULT_MASK_MU,
                      sigma: float = DEFAULT_MASK_SIGMA,
                      a: float = DEFAULT_MASK_LOW,
                      b: float = DEFAULT_MASK_HIGH) -> float:
    """Draw a masking ratio from the Gaussian truncated to [a, b].

    Inverse-CDF transform, so the sample is inside [a, b] by construction.
    """
    if a >= b:
        raise RepresentationError(f"truncation bounds must satisfy a < b, got [{a}, {b}]")
    if sigma <= 0:
        raise RepresentationError(f"sigma must be positive, got {sigma}")
    pa = ndtr((a - mu) / sigma)
    pb = ndtr((b - mu) / sigma)
    u = rng.random()
    r = mu + sigma * ndtri(pa + u * (pb - pa))
    return float(min(max(r, a), b))


def plan_mask(n: int, ratio: float, rng: np.random.Generator | None = None,
              forced: PoolMask | None = None) -> MaskPlan:
    """Choose the masked slot set.

    Training mode (no ``forced``): a uniformly random set of
    clamp(round(ratio*n), 1, n-1) slots, so at least one slot is masked and
    at least one stays visible. Inference mode: the masked set is exactly
    the complement of the forced pool; ratio is ignored.
    """
    if forced is not None:
        sel = forced.selected
        if sel.shape[0] != n:
            raise RepresentationError("forced mask length does not match n")
        masked = np.nonzero(~sel)[0]
        visible = np.nonzero(sel)[0]
        return MaskPlan(ratio=len(masked) / n, masked_slots=masked,
                        visible_slots=visible)
    if n < 2:
        raise RepresentationError("training masks need at least 2 stocks")
    if rng is None:
        raise RepresentationError("training mode requires an rng")
    k = int(np.clip(np.rint(ratio * n), 1, n - 1))
    masked = np.sort(rng.choice(n, size=k, replace=False))
    vis = np.setdiff1d(np.arange(n), masked)
    return MaskPlan(ratio=float(ratio), masked_slots=masked, visible_slots=vis)


# ---------------------------------------------------------------------------
# batched forward passes (B, N, D, F) -> (B, N+1, E)
# ---------------------------------------------------------------------------

def _split_features(features: np.ndarray, layout: dict[str, tuple[int, int]]):
    d_lo, d_hi = layout["prices"][0], layout["indicators"][1]
    t_lo, t_hi = layout["temporal"]
    dense = features[..., d_lo:d_hi]
    temporal = features[:, 0, :, t_lo:t_hi]  # identical across stocks
    return dense, temporal


def _temporal_indices(temporal: np.ndarray):
    dow = temporal[..., 0].astype(int)
    dom = temporal[..., 1].astype(int) - 1
    month = temporal[..., 2].astype(int) - 1
    return dow, dom, month


def _pooled_conv_columns(dense: np.ndarray, kernel: int) -> np.ndarray:
    """Time-averaged im2col columns for a same-padded 1-D convolution.

    The embedding mean-pools a linear convolution over time, so pooling can
    be hoisted before the matmul: mean_t conv(x)[t] = (mean_t cols[t]) @ w.
    Input (B, N, D, C) -> (B, N, K*C), column order matching
    w.transpose(2, 1, 0).reshape(K*C, E).
    """
    b, n, d, c = dense.shape
    pad = (kernel - 1) // 2
    xp = np.zeros((b, n, d + 2 * pad, c), dtype=dense.dtype)
    xp[:, :, pad : pad + d, :] = dense
    cols = np.empty((b, n, kernel, c), dtype=dense.dtype)
    for j in range(kernel):
        cols[:, :, j, :] = xp[:, :, j : j + d, :].mean(axis=2)
    return cols.reshape(b, n, kernel * c)


def embed_batch(features: np.ndarray, layout: dict, params: dict):
    """Stock-level embeddings for a batch of windows: (B, N, D, F) -> (B, N, E).

    Dense path: 1-D convolution over the time axis of prices + indicators,
    mean-pooled over the window. Sparse path: calendar-category lookup
    embeddings summed over the window days, shared across stocks.
    """
    dense, temporal = _split_features(features, layout)
    w = params["emb/conv_w"]
    e, c_in, k = w.shape
    wmat = w.transpose(2, 1, 0).reshape(k * c_in, e)
    cols = _pooled_conv_columns(dense, k)
    dense_emb = cols @ wmat + params["emb/conv_b"]
    dow, dom, month = _temporal_indices(temporal)
    sparse = (params["emb/dow"][dow] + params["emb/dom"][dom]
              + params["emb/month"][month]).sum(axis=1)  # (B, E)
    return dense_emb + sparse[:, None, :]


def embed_batch_bwd(g_emb: np.ndarray, features: np.ndarray, layout: dict,
                    params: dict, grads: dict):
    """Accumulate embedding-parameter gradients for ``embed_batch``."""
    b, n, d, _ = features.shape
    e = g_emb.shape[-1]
    dense, temporal = _split_features(features, layout)
    w = params["emb/conv_w"]
    _, c_in, k = w.shape
    cols = _pooled_conv_columns(dense, k).reshape(b * n, k * c_in)
    g2 = g_emb.reshape(b * n, e)
    gw = (cols.T @ g2).reshape(k, c_in, e).transpose(2, 1, 0)
    grads["emb/conv_w"] = grads.get("emb/conv_w", 0) + gw
    grads["emb/conv_b"] = grads.get("emb/conv_b", 0) + g2.sum(axis=0)
    g_sparse = g_emb.sum(axis=1)  # (B, E)
    dow, dom, month = _temporal_indices(temporal)
    for key, idx, size in (("emb/dow", dow, 7), ("emb/dom", dom, 31),
                           ("emb/month", month, 12)):
        gt = np.zeros((size, e))
        np.add.at(gt, idx.reshape(-1),
                  np.repeat(g_sparse[:, None, :], d, axis=1).reshape(-1, e))
        grads[key] = grads.get(key, 0) + gt


def encode_batch(emb: np.ndarray, vis: np.ndarray, params: dict):
    """Per-slot encoder plus pool-summary attention over visible latents.

    Returns (h, cls, cache). ``h`` holds encoder outputs for every slot;
    only visible slots' values participate downstream.
    """
    if not vis.any(axis=-1).all():
        raise RepresentationError("every window needs >= 1 visible stock")
    a1 = nn.dense(emb, params["enc/w1"], params["enc/b1"])
    z1 = nn.gelu(a1)
    h = nn.dense(z1, params["enc/w2"], params["enc/b2"])
    e = h.shape[-1]
    scores = (h @ params["cls/query"]) / np.sqrt(e)
    scores = np.where(vis, scores, -np.inf)
    attn = nn.softmax(scores, axis=-1)
    cls = np.einsum("bn,bne->be", attn, h)
    cache = {"a1": a1, "z1": z1, "h": h, "attn": attn, "emb": emb, "vis": vis}
    return h, cls, cache


def encode_batch_bwd(g_h: np.ndarray, g_cls: np.ndarray, cache: dict,
                     params: dict, grads: dict):
    """Backward of ``encode_batch``; returns grad w.r.t. the embeddings.

    ``g_h`` must already be zero on masked slots.
    """
    h, attn, a1, z1, emb = (cache["h"], cache["attn"], cache["a1"],
                            cache["z1"], cache["emb"])
    e = h.shape[-1]
    q = params["cls/query"]
    g_attn = np.einsum("be,bne->bn", g_cls, h)
    g_scores = nn.softmax_bwd(g_attn, attn)
    grads["cls/query"] = grads.get("cls/query", 0) + \
        np.einsum("bn,bne->e", g_scores, h) / np.sqrt(e)
    g_h_total = (g_h
                 + attn[..., None] * g_cls[:, None, :]
                 + g_scores[..., None] * q[None, None, :] / np.sqrt(e))
    g_z1, gw2, gb2 = nn.dense_bwd(g_h_total, z1, params["enc/w2"])
    g_a1 = g_z1 * nn.gelu_grad(a1)
    g_emb, gw1, gb1 = nn.dense_bwd(g_a1, emb, params["enc/w1"])
    grads["enc/w2"] = grads.get("enc/w2", 0) + gw2
    grads["enc/b2"] = grads.get("enc/b2", 0) + gb2
    grads["enc/w1"] = grads.get("enc/w1", 0) + gw1
    grads["enc/b1"] = grads.get("enc/b1", 0) + gb1
    return g_emb


def fill_batch(h: np.ndarray, cls: np.ndarray, vis: np.ndarray,
               token: np.ndarray) -> np.ndarray:
    """Assemble (B, N+1, E) slot arrays: summary first, token where masked."""
    b, n, e = h.shape
    rep = np.empty((b, n + 1, e))
    rep[:, 0, :] = cls
    rep[:, 1:, :] = np.where(vis[..., None], h, token)
    return rep


def representation_forward(features: np.ndarray, vis: np.ndarray,
                           layout: dict, params: dict):
    """Batched embed -> encode -> fill, returning the reusable cache.

    The cache stays valid as long as the representation parameters are
    untouched, so one forward pass can serve both the policy/critic inputs
    and the reconstruction objective of the same batch.
    """
    emb = embed_batch(features, layout, params)
    h, cls, enc_cache = encode_batch(emb, vis, params)
    rep = fill_batch(h, cls, vis, params["token"])
    return rep, {"h": h, "cls": cls, "enc_cache": enc_cache}


def represent_batch(features: np.ndarray, vis: np.ndarray, layout: dict,
                    params: dict) -> np.ndarray:
    """Forward-only representation for a batch: (B, N, D, F) -> (B, N+1, E)."""
    return representation_forward(features, vis, layout, params)[0]


def decode_batch(rep: np.ndarray, masked: np.ndarray, params: dict):
    """Decode masked slots: returns (preds (M, D, 4), b_idx, s_idx, cache)."""
    b_idx, s_idx = np.nonzero(masked)
    slot_vec = rep[b_idx, s_idx + 1]
    cls_vec = rep[b_idx, 0]
    inp = np.concatenate([slot_vec, cls_vec], axis=-1)
    a1 = nn.dense(inp, params["dec/w1"], params["dec/b1"])
    z1 = nn.gelu(a1)
    out = nn.dense(z1, params["dec/w2"], params["dec/b2"])
    d = decoder_window_of(params)
    preds = out.reshape(-1, d, 4)
    cache = {"inp": inp, "a1": a1, "z1": z1}
    return preds, b_idx, s_idx, cache


def reconstruction_loss_batch(features: np.ndarray, vis: np.ndarray,
                              layout: dict, params: dict,
                              with_grads: bool = True, cache: dict | None = None):
    """Masked-price reconstruction loss and (optionally) its gradients.

    Loss per window: mean over that window's masked stocks of the MSE over
    the D x 4 normalized OHLC values; the batch loss is the mean over
    windows. Every window in the batch must have at least one masked stock.
    A ``cache`` from :func:`representation_forward` (same features, same
    visibility, unchanged representation parameters) skips the re-encode.
    """
    b, n, d, _ = features.shape
    masked = ~vis
    n_masked = masked.sum(axis=1)
    if np.any(n_masked == 0):
        raise RepresentationError("every batch window needs >= 1 masked stock")

    if cache is None:
        _, cache = representation_forward(features, vis, layout, params)
    h, cls, enc_cache = cache["h"], cache["cls"], cache["enc_cache"]
    rep = fill_batch(h, cls, vis, params["token"])
    preds, b_idx, s_idx, dec_cache = decode_batch(rep, masked, params)

    lo, hi = layout["prices"]
    targets = features[b_idx, s_idx, :, lo:hi]
    err = preds - targets
    per_slot_mse = (err * err).mean(axis=(1, 2))
    weights = 1.0 / (n_masked[b_idx] * b)
    loss = float((per_slot_mse * weights).sum())
    if not with_grads:
        return loss, {}

    grads: dict[str, np.ndarray] = {}
    g_out = (2.0 * err / (d * 4) * weights[:, None, None]).reshape(len(b_idx), -1)
    g_z1, gw2, gb2 = nn.dense_bwd(g_out, dec_cache["z1"], params["dec/w2"])
    g_a1 = g_z1 * nn.gelu_grad(dec_cache["a1"])
    g_inp, gw1, gb1 = nn.dense_bwd(g_a1, dec_cache["inp"], params["dec/w1"])
    grads["dec/w2"], grads["dec/b2"] = gw2, gb2
    grads["dec/w1"], grads["dec/b1"] = gw1, gb1

    e = embed_dim_of(params)
    grads["token"] = g_inp[:, :e].sum(axis=0)
    g_cls = np.zeros_like(cls)
    np.add.at(g_cls, b_idx, g_inp[:, e:])
    g_h = np.zeros_like(h)  # masked-slot latents never reach the loss
    g_emb = encode_batch_bwd(g_h, g_cls, enc_cache, params, grads)
    embed_batch_bwd(g_emb, features, layout, params, grads)
    return loss, grads


# ---------------------------------------------------------------------------
# single-window operations
# ---------------------------------------------------------------------------

def embed_stocks(window: FeatureWindow, params: dict) -> StockLevelEmbedding:
    """Stock-level embeddings for one window."""
    expected = decoder_window_of(params)
    if window.features.ndim != 3 or window.features.shape[1] != expected:
        raise RepresentationError(
            f"window shape {window.features.shape} does not match the "
            f"configured {expected}-day layout")
    vecs = embed_batch(window.features[None], window.feature_layout, params)[0]
    return StockLevelEmbedding(vectors=vecs)


def encode(embedding: StockLevelEmbedding, plan: MaskPlan,
           params: dict) -> EncodedLatents:
    """Encode the visible slots and read out the pool-summary latent."""
    n = embedding.vectors.shape[0]
    if plan.n != n:
        raise RepresentationError("mask plan does not match the embedding")
    vis = plan.visible_bool()
    h, cls, _ = encode_batch(embedding.vectors[None], vis[None], params)
    return EncodedLatents(cls=cls[0], visible=h[0][plan.visible_slots],
                          plan=plan)


def fill_mask(latents: EncodedLatents, plan: MaskPlan,
              token: np.ndarray) -> MaskableRepresentation:
    """Restore full slot order, writing the token into masked slots."""
    n = plan.n
    e = token.shape[0]
    slots = np.empty((n + 1, e))
    slots[0] = latents.cls
    slots[1 + plan.visible_slots] = latents.visible
    slots[1 + plan.masked_slots] = token
    flag = np.zeros(n, dtype=bool)
    flag[plan.masked_slots] = True
    return MaskableRepresentation(slots=slots, masked_flag=flag)


def decode(rep: MaskableRepresentation, params: dict) -> ReconstructionOutput:
    """Predict normalized OHLC windows for the masked slots."""
    masked = rep.masked_flag[None]
    preds, _, s_idx, _ = decode_batch(rep.slots[None], masked, params)
    return ReconstructionOutput(predicted_prices=preds, masked_slots=s_idx)


def represent_window(window: FeatureWindow, plan: MaskPlan,
                     params: dict) -> MaskableRepresentation:
    """embed -> encode -> fill for one window."""
    emb = embed_stocks(window, params)
    latents = encode(emb, plan, params)
    return fill_mask(latents, plan, params["token"])
