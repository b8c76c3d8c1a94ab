"""The full encoder-decoder: featurization, patch encoding, decoding, heads.

The decoder reuses each encoder block's self-attention and feed-forward
weights (with a causal mask), adds its own cross-attention over the patch
memory, and projects onto the transposed token embedding.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .bpe import BOS, EOS, PAD, encode
from .decoding import beam_search
from .errors import CheckpointMismatch, MissingBugReport
from .fusion import AblationFlags, aggregate
from .graph_intention import (
    GcnConfig,
    align_graph,
    gcn_forward,
    graph_cross_resnet,
    graph_pool,
    prune_or_keep,
    renormalized_laplacian,
)
from .heads import classifier_prob
from .seq_intention import (
    SeqEncoderConfig,
    SeqIntentionOut,
    encode_seq_intention,
    init_embed,
    multi_head_attention,
    transformer_embed,
)

log = logging.getLogger(__name__)


@dataclass
class ModelConfig:
    seq: SeqEncoderConfig
    gcn: GcnConfig
    msg_len: int = 32
    d_b: int = None
    n_slots: int = 2000
    edges: str = "local"
    exact_limit: int = 12
    flags: AblationFlags = field(default_factory=AblationFlags)

    @property
    def d_e(self):
        return self.seq.d_e

    @property
    def bug_dim(self):
        return self.d_b or self.seq.d_e

    @classmethod
    def from_config(cls, cfg):
        m, g = cfg["model"], cfg["gcn"]
        return cls(
            seq=SeqEncoderConfig(m["d_e"], m["L_max"], m["n_heads"], m["n_layers"], m["dropout"], m["d_ff"]),
            gcn=GcnConfig(g["layers"], g["alpha"], g["beta_scale"], g["pooling"]),
            msg_len=m["msg_len"],
            d_b=m.get("d_b"),
            n_slots=g["N_g"],
            edges=g["edges"],
            exact_limit=g["exact_limit"],
            flags=AblationFlags(m["use_seq_intention"], m["use_graph_intention"]),
        )


@dataclass
class GraphInput:
    """Precomputed, parameter-free part of one aligned graph."""

    p: np.ndarray
    bags: list
    mask: np.ndarray
    changed: np.ndarray
    aligned: object = None


@dataclass
class PatchFeatures:
    id: str
    ids_p: list
    mask_p: list
    ids_m: list
    mask_m: list
    ids_cbp: list
    mask_cbp: list
    graph_cbp: GraphInput
    graph_cap: GraphInput
    msg: str = None
    msg_ids: list = None
    bug_ids: list = None
    bug_mask: list = None
    bug_vec: np.ndarray = None
    label: int = None


class Featurizer:
    """Turns a ``PreprocessedPatch`` into model-ready arrays."""

    def __init__(self, vocab, static, cfg):
        self.vocab = vocab
        self.static = static
        self.cfg = cfg

    def graph_input(self, g, changed_tokens):
        local = prune_or_keep(g, changed_tokens)
        aligned = align_graph(
            local, self.static, self.cfg.n_slots, changed_tokens, self.cfg.exact_limit, self.cfg.edges
        )
        _, a, mask, changed = aligned.compact()
        return GraphInput(renormalized_laplacian(a), aligned.bags(self.vocab), mask, changed, aligned)

    def __call__(self, patch, msg=None, bug_report=None, bug_vec=None, label=None):
        L = self.cfg.seq.L_max
        ids_p, mask_p = encode(self.vocab, patch.plus_text, L)
        ids_m, mask_m = encode(self.vocab, patch.minus_text, L)
        ids_c, mask_c = encode(self.vocab, patch.cbp, L)
        toks = patch.changed_tokens()
        feat = PatchFeatures(
            id=patch.id,
            ids_p=ids_p, mask_p=mask_p, ids_m=ids_m, mask_m=mask_m, ids_cbp=ids_c, mask_cbp=mask_c,
            graph_cbp=self.graph_input(patch.g_cbp, toks),
            graph_cap=self.graph_input(patch.g_cap, toks),
            msg=msg,
            label=label,
        )
        if msg is not None:
            feat.msg_ids = self.vocab.encode_ids(msg)[: self.cfg.msg_len]
        if bug_report is not None:
            feat.bug_ids, feat.bug_mask = encode(self.vocab, bug_report, L)
        if bug_vec is not None:
            feat.bug_vec = np.asarray(bug_vec, dtype=np.float32)
        return feat


def param_shapes(cfg, vocab_size):
    d, f = cfg.d_e, cfg.seq.d_ff
    shapes = {
        "tok_emb": (vocab_size, d),
        "pos_emb": (max(cfg.seq.L_max, cfg.msg_len + 1) + 1, d),
        "seqint.ln_op.g": (d,), "seqint.ln_op.b": (d,),
        "seqint.ln_ctx.g": (d,), "seqint.ln_ctx.b": (d,),
        "graph_fc.w": (d, d), "graph_fc.b": (d,),
        "dec.mem_ln.g": (d,), "dec.mem_ln.b": (d,),
        "out_b": (vocab_size,),
        "cls.w": (d + cfg.bug_dim, 1), "cls.b": (1,),
    }
    for l in range(cfg.seq.n_layers):
        for name in ("wq", "wk", "wv", "wo"):
            shapes[f"enc{l}.{name}"] = (d, d)
        shapes.update({
            f"enc{l}.ln1.g": (d,), f"enc{l}.ln1.b": (d,),
            f"enc{l}.ff1.w": (d, f), f"enc{l}.ff1.b": (f,),
            f"enc{l}.ff2.w": (f, d), f"enc{l}.ff2.b": (d,),
            f"enc{l}.ln2.g": (d,), f"enc{l}.ln2.b": (d,),
        })
        for name in ("xq", "xk", "xv", "xo"):
            shapes[f"dec{l}.{name}"] = (d, d)
        shapes[f"dec{l}.lnx.g"] = (d,)
        shapes[f"dec{l}.lnx.b"] = (d,)
    for l in range(cfg.gcn.layers):
        shapes[f"gcn{l}.w"] = (d, d)
    return shapes


def _init_param(name, shape, rng):
    if name.endswith(".g"):
        return ad.Tensor(np.ones(shape), requires_grad=True)
    if len(shape) == 1:
        return ad.Tensor(np.zeros(shape), requires_grad=True)
    return ad.xavier_init(shape, rng)


class Patcherizer:
    def __init__(self, cfg, vocab_size, seed=0):
        self.cfg = cfg
        self.vocab_size = vocab_size
        rng = np.random.default_rng(seed)
        self.params = {}
        for name, shape in sorted(param_shapes(cfg, vocab_size).items()):
            t = _init_param(name, shape, rng)
            t.name = name
            self.params[name] = t
        self.rng = np.random.default_rng([seed, 1])

    # -- parameters -----------------------------------------------------------

    def named_parameters(self, prefixes=None):
        if prefixes is None:
            return dict(self.params)
        return {k: v for k, v in self.params.items() if k.startswith(tuple(prefixes))}

    def decoder_block_params(self, l):
        """Weights the decoder uses at layer ``l`` (self-attention/FFN shared with the encoder)."""
        p = self.params
        return {
            "self_attn": (p[f"enc{l}.wq"], p[f"enc{l}.wk"], p[f"enc{l}.wv"], p[f"enc{l}.wo"]),
            "cross_attn": (p[f"dec{l}.xq"], p[f"dec{l}.xk"], p[f"dec{l}.xv"], p[f"dec{l}.xo"]),
            "ffn": (p[f"enc{l}.ff1.w"], p[f"enc{l}.ff1.b"], p[f"enc{l}.ff2.w"], p[f"enc{l}.ff2.b"]),
        }

    def state_arrays(self):
        return {k: v.data for k, v in self.params.items()}

    def load_arrays(self, arrays):
        expected = {k: tuple(v.shape) for k, v in self.params.items()}
        got = {k: tuple(v.shape) for k, v in arrays.items()}
        if expected != got:
            missing = sorted(set(expected) - set(got))
            extra = sorted(set(got) - set(expected))
            wrong = sorted(k for k in set(expected) & set(got) if expected[k] != got[k])
            raise CheckpointMismatch(f"missing={missing[:3]} unexpected={extra[:3]} shape_mismatch={wrong[:3]}")
        for k, arr in arrays.items():
            self.params[k].data = np.asarray(arr, dtype=self.params[k].data.dtype).copy()

    def save(self, prefix, meta=None):
        meta = dict(meta or {})
        meta["vocab_size"] = self.vocab_size
        return ad.save_checkpoint(prefix, self.state_arrays(), meta)

    def load(self, prefix):
        arrays, meta = ad.load_checkpoint(prefix)
        self.load_arrays(arrays)
        return meta

    # -- encoder --------------------------------------------------------------

    def graph_vector(self, graph, train=False):
        table = self.params["tok_emb"]
        if len(graph.bags) == 0:
            return ad.Tensor(np.zeros(self.cfg.d_e))
        h0 = ad.embedding_bag(table, graph.bags)
        weights = [self.params[f"gcn{l}.w"] for l in range(self.cfg.gcn.layers)]
        h = gcn_forward(graph.p, h0, self.cfg.gcn, weights, node_mask=graph.mask)
        return graph_pool(h, graph.mask, self.cfg.gcn.pooling, graph.changed)

    def graph_intention(self, feat, train=False):
        w_before = self.graph_vector(feat.graph_cbp, train)
        w_after = self.graph_vector(feat.graph_cap, train)
        return graph_cross_resnet(w_before, w_after, self.params["graph_fc.w"], self.params["graph_fc.b"])

    def encode(self, feat, flags=None, train=False, streams=None):
        """``PatchEmbedding`` for one patch; ``streams`` overrides the three id/mask pairs."""
        flags = flags or self.cfg.flags
        seq_cfg = self.cfg.seq
        if streams is None:
            streams = (feat.ids_p, feat.mask_p, feat.ids_m, feat.mask_m, feat.ids_cbp, feat.mask_cbp)
        ids_p, mask_p, ids_m, mask_m, ids_c, mask_c = streams
        rng = self.rng if train else None
        if flags.use_seq_intention:
            seq = encode_seq_intention(ids_p, mask_p, ids_m, mask_m, ids_c, mask_c, self.params, seq_cfg, train, rng)
        else:
            e_p = transformer_embed(ids_p, mask_p, self.params, seq_cfg, train, rng)
            e_m = transformer_embed(ids_m, mask_m, self.params, seq_cfg, train, rng)
            mp, mm = np.asarray(mask_p, dtype=np.float64), np.asarray(mask_m, dtype=np.float64)
            seq = SeqIntentionOut(None, None, None, None, mp, mm, mp, mm, e_p, e_m, None)
        graph = self.graph_intention(feat, train) if flags.use_graph_intention else None
        return aggregate(seq, graph, flags)

    def text_vector(self, ids, mask, train=False):
        """Masked mean of the sequence encoder output (bug-report embedding)."""
        e = transformer_embed(ids, mask, self.params, self.cfg.seq, train, self.rng if train else None)
        return ad.masked_mean(e, np.asarray(mask, dtype=np.float64))

    # -- decoder --------------------------------------------------------------

    def decoder_logits(self, emb, input_ids, train=False):
        """Teacher-forced logits ``[len(input_ids), |V|]``."""
        p = self.params
        cfg = self.cfg.seq
        rng = self.rng if train else None
        n = len(input_ids)
        self_mask = np.ones(n)
        has_memory = bool(np.asarray(emb.memory_mask).any())
        x = ad.dropout(init_embed(input_ids, p), cfg.dropout, train, rng)
        # the summed streams are several times larger than a unit-variance row
        memory = ad.layer_norm(emb.memory, p["dec.mem_ln.g"], p["dec.mem_ln.b"]) if has_memory else None
        for l in range(cfg.n_layers):
            blk = self.decoder_block_params(l)
            att = multi_head_attention(x, x, self_mask, blk["self_attn"], cfg.n_heads, causal=True)
            x = ad.layer_norm(x + ad.dropout(att, cfg.dropout, train, rng), p[f"enc{l}.ln1.g"], p[f"enc{l}.ln1.b"])
            if has_memory:
                cross = multi_head_attention(x, memory, emb.memory_mask, blk["cross_attn"], cfg.n_heads)
                x = ad.layer_norm(x + ad.dropout(cross, cfg.dropout, train, rng), p[f"dec{l}.lnx.g"], p[f"dec{l}.lnx.b"])
            w1, b1, w2, b2 = blk["ffn"]
            ff = ad.relu(x @ w1 + b1) @ w2 + b2
            x = ad.layer_norm(x + ad.dropout(ff, cfg.dropout, train, rng), p[f"enc{l}.ln2.g"], p[f"enc{l}.ln2.b"])
        return x @ p["tok_emb"].T + p["out_b"]

    def next_logprobs(self, emb, prefix):
        with ad.no_grad():
            logits = self.decoder_logits(emb, prefix).data[-1].astype(np.float64)
        z = logits - logits.max()
        return z - np.log(np.exp(z).sum())

    def generate(self, emb, beam=3, max_out=32):
        max_out = min(max_out, self.params["pos_emb"].shape[0] - 1)
        return beam_search(lambda prefix: self.next_logprobs(emb, prefix), beam, max_out)

    def sequence_loss(self, emb, input_ids, targets, train=False):
        logits = self.decoder_logits(emb, input_ids, train)
        return ad.cross_entropy(logits, targets, ignore_index=PAD)

    # -- correctness head -----------------------------------------------------

    def bug_vector(self, feat, train=False):
        if feat.bug_vec is not None:
            return ad.Tensor(feat.bug_vec)
        if feat.bug_ids is not None:
            return self.text_vector(feat.bug_ids, feat.bug_mask, train)
        raise MissingBugReport(f"patch {feat.id!r} has no bug report")

    def classify(self, feat, flags=None, train=False):
        emb = self.encode(feat, flags, train)
        return classifier_prob(emb.pooled, self.bug_vector(feat, train), self.params["cls.w"], self.params["cls.b"])


def generation_io(msg_ids, msg_len):
    """Decoder input ``[BOS] + msg`` and targets ``msg + [EOS]``, padded to ``msg_len + 1``."""
    ids = list(msg_ids)[:msg_len]
    inp = [BOS] + ids
    tgt = ids + [EOS]
    pad = msg_len + 1 - len(inp)
    return inp + [PAD] * pad, tgt + [PAD] * pad


def with_flags(cfg, flags):
    return replace(cfg, flags=flags)
