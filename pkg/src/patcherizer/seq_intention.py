"""Sequence intention encoder.

Each of the added lines, removed lines and the code before the patch is
embedded by a shared transformer. Added and removed streams then attend to
each other (operation-wise) and are each fused with the context embedding
(context-wise), giving four ``[L_max, d_e]`` streams.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import AllMaskedSource, ShapeMismatch

NEG = -1e9


@dataclass
class SeqEncoderConfig:
    d_e: int = 64
    L_max: int = 64
    n_heads: int = 2
    n_layers: int = 2
    dropout: float = 0.1
    d_ff: int = 128

    def __post_init__(self):
        if self.d_e % self.n_heads:
            raise ValueError(f"d_e={self.d_e} is not divisible by n_heads={self.n_heads}")
        if self.L_max < 1:
            raise ValueError("L_max must be >= 1")


@dataclass
class SeqIntentionOut:
    o_cc_p: object
    o_cc_m: object
    o_ct2cc_p: object
    o_ct2cc_m: object
    mask_p: np.ndarray
    mask_m: np.ndarray
    mask_ct_p: np.ndarray
    mask_ct_m: np.ndarray
    e_cc_p: object = None
    e_cc_m: object = None
    e_cbp: object = None


def _key_bias(key_mask, n_query, causal=False):
    bias = np.where(np.asarray(key_mask) > 0, 0.0, NEG)[None, :].repeat(n_query, axis=0)
    if causal:
        bias = bias + np.triu(np.full((n_query, len(key_mask)), NEG), k=1)
    return bias


def multi_head_attention(q_in, kv_in, key_mask, weights, n_heads, causal=False):
    """Scaled dot-product attention; ``weights`` = (W_q, W_k, W_v, W_o)."""
    wq, wk, wv, wo = weights
    q, k, v = q_in @ wq, kv_in @ wk, kv_in @ wv
    d = q.shape[1]
    dh = d // n_heads
    bias = _key_bias(key_mask, q.shape[0], causal)
    scale = 1.0 / np.sqrt(dh)
    heads = []
    for h in range(n_heads):
        qh = ad.slice_cols(q, h * dh, (h + 1) * dh)
        kh = ad.slice_cols(k, h * dh, (h + 1) * dh)
        vh = ad.slice_cols(v, h * dh, (h + 1) * dh)
        att = ad.softmax((qh @ kh.T) * scale, bias)
        heads.append(att @ vh)
    out = heads[0] if n_heads == 1 else ad.concat(heads, axis=1)
    return out @ wo


def encoder_layer(x, mask, params, prefix, cfg, train=False, rng=None):
    """Post-norm transformer block (self-attention + ReLU feed-forward)."""
    p = params
    att = multi_head_attention(
        x, x, mask, (p[f"{prefix}.wq"], p[f"{prefix}.wk"], p[f"{prefix}.wv"], p[f"{prefix}.wo"]), cfg.n_heads
    )
    x = ad.layer_norm(x + ad.dropout(att, cfg.dropout, train, rng), p[f"{prefix}.ln1.g"], p[f"{prefix}.ln1.b"])
    ff = ad.relu(x @ p[f"{prefix}.ff1.w"] + p[f"{prefix}.ff1.b"]) @ p[f"{prefix}.ff2.w"] + p[f"{prefix}.ff2.b"]
    return ad.layer_norm(x + ad.dropout(ff, cfg.dropout, train, rng), p[f"{prefix}.ln2.g"], p[f"{prefix}.ln2.b"])


def init_embed(ids, params):
    ids = np.asarray(ids, dtype=np.int64)
    return ad.embedding(params["tok_emb"], ids) + ad.embedding(params["pos_emb"], np.arange(len(ids)))


def transformer_embed(ids, mask, params, cfg, train=False, rng=None):
    """``E_X = Transformer(Init(X))`` with PAD keys excluded and PAD rows zeroed."""
    ids = np.asarray(ids)
    mask = np.asarray(mask, dtype=np.float64)
    if ids.shape != mask.shape:
        raise ShapeMismatch(f"transformer_embed: ids {ids.shape} vs mask {mask.shape}")
    if not mask.any():
        return ad.Tensor(np.zeros((len(ids), params["tok_emb"].shape[1])))
    x = ad.dropout(init_embed(ids, params), cfg.dropout, train, rng)
    for l in range(cfg.n_layers):
        x = encoder_layer(x, mask, params, f"enc{l}", cfg, train, rng)
    return ad.mask_rows(x, mask)


def cross_attention(e_src, e_qry, src_mask):
    """Row ``i``: ``softmax(E_src e_i)`` over unmasked source rows, times ``E_src``."""
    if e_src.shape != e_qry.shape:
        raise ShapeMismatch(f"cross_attention: source {e_src.shape} vs query {e_qry.shape}")
    src_mask = np.asarray(src_mask)
    if not src_mask.any():
        raise AllMaskedSource("every source position is padding")
    alpha = ad.softmax(e_qry @ e_src.T, _key_bias(src_mask, e_qry.shape[0]))
    return alpha @ e_src


def attention_weights(e_src, e_qry, src_mask):
    """The ``alpha`` matrix of ``cross_attention`` (plain arrays, for inspection)."""
    with ad.no_grad():
        return ad.softmax(ad.as_tensor(e_qry) @ ad.as_tensor(e_src).T,
                          _key_bias(np.asarray(src_mask), e_qry.shape[0])).data


def cross_resnet(e, v, gain, bias):
    """``relu(layer_norm(E) + (E + v))``."""
    if e.shape != v.shape:
        raise ShapeMismatch(f"cross_resnet: {e.shape} vs {v.shape}")
    return ad.relu(ad.layer_norm(e, gain, bias) + (e + v))


def _attend_or_zero(e_src, e_qry, src_mask):
    try:
        return cross_attention(e_src, e_qry, src_mask)
    except AllMaskedSource:
        return ad.Tensor(np.zeros(e_qry.shape))


def seq_intention_from_embeddings(e_p, e_m, e_cbp, mask_p, mask_m, mask_cbp, params):
    """Operation-wise and context-wise fusion of already-embedded streams."""
    mask_p = np.asarray(mask_p, dtype=np.float64)
    mask_m = np.asarray(mask_m, dtype=np.float64)
    mask_cbp = np.asarray(mask_cbp, dtype=np.float64)
    g_op, b_op = params["seqint.ln_op.g"], params["seqint.ln_op.b"]
    g_ct, b_ct = params["seqint.ln_ctx.g"], params["seqint.ln_ctx.b"]
    v_p = _attend_or_zero(e_m, e_p, mask_m)
    v_m = _attend_or_zero(e_p, e_m, mask_p)
    mask_ct_p = np.maximum(mask_p, mask_cbp)
    mask_ct_m = np.maximum(mask_m, mask_cbp)
    return SeqIntentionOut(
        o_cc_p=ad.mask_rows(cross_resnet(e_p, v_p, g_op, b_op), mask_p),
        o_cc_m=ad.mask_rows(cross_resnet(e_m, v_m, g_op, b_op), mask_m),
        o_ct2cc_p=ad.mask_rows(cross_resnet(e_p, e_cbp, g_ct, b_ct), mask_ct_p),
        o_ct2cc_m=ad.mask_rows(cross_resnet(e_m, e_cbp, g_ct, b_ct), mask_ct_m),
        mask_p=mask_p,
        mask_m=mask_m,
        mask_ct_p=mask_ct_p,
        mask_ct_m=mask_ct_m,
        e_cc_p=e_p,
        e_cc_m=e_m,
        e_cbp=e_cbp,
    )


def encode_seq_intention(ids_p, mask_p, ids_m, mask_m, ids_cbp, mask_cbp, params, cfg, train=False, rng=None):
    """All four sequence-intention streams for one patch."""
    lengths = {len(ids_p), len(ids_m), len(ids_cbp)}
    if lengths != {cfg.L_max}:
        raise ShapeMismatch(f"streams must all have length L_max={cfg.L_max}, got {sorted(lengths)}")
    e_p = transformer_embed(ids_p, mask_p, params, cfg, train, rng)
    e_m = transformer_embed(ids_m, mask_m, params, cfg, train, rng)
    e_cbp = transformer_embed(ids_cbp, mask_cbp, params, cfg, train, rng)
    return seq_intention_from_embeddings(e_p, e_m, e_cbp, mask_p, mask_m, mask_cbp, params)
