"""Data loading, masked pre-training, and the two fine-tuning loops."""

import csv
import json
import logging
import math
import os
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .bpe import BOS, MASK, PAD, SPECIALS, train_bpe
from .errors import FileNotFound, PatcherizerError
from .graph_intention import build_static_graph
from .model import generation_io
from .patch_ingest import preprocess_patch

log = logging.getLogger(__name__)


# -- records -----------------------------------------------------------------

def load_records(path):
    """JSON-lines corpus; records without an ``id`` get their line index."""
    if not path or not os.path.exists(path):
        raise FileNotFound(f"corpus file {path}")
    out = []
    with open(path, encoding="utf-8") as f:
        for i, line in enumerate(f):
            if line.strip():
                rec = json.loads(line)
                rec.setdefault("id", str(i))
                rec["id"] = str(rec["id"])
                out.append(rec)
    return out


def preprocess_records(records):
    """``(patches, failures)``; a failure is ``(id, code, message)``."""
    patches, failures = [], []
    for rec in records:
        try:
            p = preprocess_patch(
                rec["diff"],
                original=rec.get("original"),
                ast_before=rec.get("ast_before"),
                ast_after=rec.get("ast_after"),
                patch_id=rec["id"],
            )
        except PatcherizerError as exc:
            log.warning("record %s: %s", rec["id"], exc.one_line())
            failures.append((rec["id"], exc.code, str(exc)))
            continue
        patches.append((rec, p))
    return patches, failures


def vocab_corpus(pairs, include_text=True):
    texts = []
    for rec, p in pairs:
        texts.extend([p.cbp, p.cap])
        if include_text:
            texts.extend(rec[k] for k in ("msg", "bug_report") if rec.get(k))
    return texts


def build_vocab(pairs, size, include_text=True):
    return train_bpe(vocab_corpus(pairs, include_text), size)


def static_graph_for(patches, n_cap):
    graphs, tokens = [], []
    for p in patches:
        toks = p.changed_tokens()
        graphs.extend([p.g_cbp, p.g_cap])
        tokens.extend([toks, toks])
    return build_static_graph(graphs, n_cap, tokens)


# -- masking -----------------------------------------------------------------

@dataclass
class MlmBatch:
    ids: list
    targets: list
    positions: list


def mask_tokens(ids, rate, seed):
    """Replace non-special tokens by MASK with probability ``rate``.

    A nonempty sequence with no draw gets exactly one position masked,
    chosen uniformly. ``seed`` is an int or a ``numpy.random.Generator``.
    """
    if not 0.0 < rate < 1.0:
        raise ValueError("mask rate must lie in (0, 1)")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    ids = [int(i) for i in ids]
    eligible = [i for i, t in enumerate(ids) if t not in SPECIALS.values()]
    draws = rng.random(len(eligible))
    positions = [i for i, d in zip(eligible, draws) if d < rate]
    if eligible and not positions:
        positions = [eligible[int(rng.integers(len(eligible)))]]
    out, targets = list(ids), [PAD] * len(ids)
    for i in positions:
        targets[i] = ids[i]
        out[i] = MASK
    return MlmBatch(out, targets, positions)


# -- loops -------------------------------------------------------------------

def batches(n, batch_size, steps, seed):
    """``steps`` index batches; each epoch is a fresh seeded permutation."""
    rng = np.random.default_rng([seed, 2])
    order, cursor = [], 0
    for _ in range(steps):
        batch = []
        while len(batch) < min(batch_size, n):
            if cursor >= len(order):
                order, cursor = list(rng.permutation(n)), 0
            batch.append(int(order[cursor]))
            cursor += 1
        yield batch


def n_steps(cfg, key, n):
    t = cfg["train"]
    if t.get(key) is not None:
        return int(t[key])
    return int(t["epochs"]) * math.ceil(n / t["batch_size"])


class CsvLog:
    def __init__(self, path):
        self.path = path
        if path:
            with open(path, "w", newline="") as f:
                csv.writer(f).writerow(["step", "loss", "lr"])

    def write(self, step, loss, lr):
        if self.path:
            with open(self.path, "a", newline="") as f:
                csv.writer(f).writerow([step, repr(float(loss)), lr])


def mlm_loss(model, feat, rng, rate, train=True, flags=None):
    """Masked reconstruction loss of the before-patch code for one patch."""
    L = model.cfg.seq.L_max
    mb_p = mask_tokens(feat.ids_p, rate, rng) if any(feat.mask_p) else None
    mb_m = mask_tokens(feat.ids_m, rate, rng) if any(feat.mask_m) else None
    mb_c = mask_tokens(feat.ids_cbp, rate, rng)
    streams = (
        mb_p.ids if mb_p else feat.ids_p, feat.mask_p,
        mb_m.ids if mb_m else feat.ids_m, feat.mask_m,
        mb_c.ids, feat.mask_cbp,
    )
    emb = model.encode(feat, flags, train, streams=streams)
    n = sum(feat.mask_cbp)
    inp = [BOS] + list(feat.ids_cbp[:n]) + [PAD] * (L - n)
    tgt = list(mb_c.targets) + [PAD]
    loss, count = model.sequence_loss(emb, inp, tgt, train)
    return loss, count


def _train(model, feats, loss_fn, steps, cfg, log_path=None, reduce="mean", on_step=None):
    t = cfg["train"]
    params = model.named_parameters()
    opt = ad.Adam(params, lr=t["lr"])
    history = []
    out = CsvLog(log_path)
    for step, idx in enumerate(batches(len(feats), t["batch_size"], steps, t["seed"]), start=1):
        opt.zero_grad()
        losses = [loss_fn(feats[i]) for i in idx]
        total = losses[0]
        for l in losses[1:]:
            total = total + l
        if reduce == "mean":
            total = total * (1.0 / len(losses))
        ad.backward(total)
        opt.step()
        value = float(total.data)
        if not np.isfinite(value):
            raise FloatingPointError(f"non-finite loss at step {step}")
        history.append(value)
        out.write(step, value, t["lr"])
        if on_step:
            on_step(step, value)
        log.debug("step %d loss %.5f", step, value)
    return history


def pretrain(model, feats, cfg, steps=None, log_path=None, flags=None):
    """MLM pre-training; returns the per-step loss history."""
    steps = n_steps(cfg, "pretrain_steps", len(feats)) if steps is None else steps
    rate = cfg["train"]["mask_rate"]
    rng = np.random.default_rng([cfg["train"]["seed"], 3])
    return _train(model, feats, lambda f: mlm_loss(model, f, rng, rate, True, flags)[0], steps, cfg, log_path)


def mlm_eval_loss(model, feats, cfg, seed=0, flags=None):
    """Token-averaged masked loss over ``feats`` with dropout off and fixed masks."""
    rate = cfg["train"]["mask_rate"]
    rng = np.random.default_rng([seed, 4])
    total = count = 0.0
    with ad.no_grad():
        for f in feats:
            loss, n = mlm_loss(model, f, rng, rate, False, flags)
            total += float(loss.data) * n
            count += n
    return total / max(count, 1)


def with_messages(feats):
    kept = []
    for f in feats:
        if not f.msg or not f.msg.strip():
            log.warning("record %s has an empty message; skipped", f.id)
            continue
        kept.append(f)
    return kept


def generation_loss(model, feat, train=True, flags=None):
    emb = model.encode(feat, flags, train)
    inp, tgt = generation_io(feat.msg_ids, model.cfg.msg_len)
    return model.sequence_loss(emb, inp, tgt, train)


def finetune_generation(model, feats, cfg, steps=None, log_path=None, flags=None):
    feats = with_messages(feats)
    if not feats:
        raise ValueError("no records with a nonempty message")
    steps = n_steps(cfg, "finetune_steps", len(feats)) if steps is None else steps
    return _train(model, feats, lambda f: generation_loss(model, f, True, flags)[0], steps, cfg, log_path)


def generation_eval_loss(model, feats, flags=None):
    total = count = 0.0
    with ad.no_grad():
        for f in with_messages(feats):
            loss, n = generation_loss(model, f, False, flags)
            total += float(loss.data) * n
            count += n
    return total / max(count, 1)


def correctness_sample_loss(model, feat, train=True, flags=None):
    y = np.array([float(feat.label)])
    return ad.binary_cross_entropy(model.classify(feat, flags, train), y)


def finetune_correctness(model, feats, cfg, steps=None, log_path=None, flags=None):
    """Summed binary cross-entropy per batch."""
    feats = [f for f in feats if f.label is not None]
    if not feats:
        raise ValueError("no labeled correctness samples")
    steps = n_steps(cfg, "finetune_steps", len(feats)) if steps is None else steps
    return _train(
        model, feats, lambda f: correctness_sample_loss(model, f, True, flags), steps, cfg, log_path, reduce="sum"
    )


def predict_probs(model, feats, flags=None):
    with ad.no_grad():
        return [float(model.classify(f, flags, False).data[0]) for f in feats]
