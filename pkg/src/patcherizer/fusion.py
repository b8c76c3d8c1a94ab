"""Aggregation of the sequence and graph intention embeddings."""

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ShapeMismatch


@dataclass(frozen=True)
class AblationFlags:
    use_seq_intention: bool = True
    use_graph_intention: bool = True


@dataclass
class PatchEmbedding:
    """``pooled`` is the patch vector; ``memory`` is what the decoder attends to."""

    pooled: object
    memory: object
    memory_mask: np.ndarray

    def vector(self):
        return np.asarray(self.pooled.data, dtype=np.float32)


def aggregate(seq, graph, flags=AblationFlags()):
    """Sum the four streams, broadcast-add the graph vector to real rows, mean-pool.

    Without sequence intention the raw added/removed embeddings replace the
    four streams. Without graph intention ``graph`` is ignored (may be None).
    """
    if flags.use_seq_intention:
        streams = [seq.o_cc_p, seq.o_cc_m, seq.o_ct2cc_p, seq.o_ct2cc_m]
        mask = np.maximum.reduce([seq.mask_p, seq.mask_m, seq.mask_ct_p, seq.mask_ct_m])
    else:
        streams = [seq.e_cc_p, seq.e_cc_m]
        mask = np.maximum(seq.mask_p, seq.mask_m)
    shapes = {s.shape for s in streams}
    if len(shapes) != 1:
        raise ShapeMismatch(f"aggregate: stream shapes differ: {sorted(shapes)}")
    total = streams[0]
    for s in streams[1:]:
        total = total + s
    if flags.use_graph_intention and graph is not None:
        if graph.shape != (total.shape[1],):
            raise ShapeMismatch(f"aggregate: graph vector {graph.shape} vs d_e={total.shape[1]}")
        total = total + graph
    memory = ad.mask_rows(total, mask)
    return PatchEmbedding(pooled=ad.masked_mean(memory, mask), memory=memory, memory_mask=mask)


def write_embeddings(path, items):
    """JSON-lines ``{"id", "vec"}``; ``items`` yields ``(id, vector)``."""
    with open(path, "w", encoding="utf-8") as f:
        for pid, vec in items:
            f.write(json.dumps({"id": pid, "vec": [float(x) for x in np.asarray(vec, dtype=np.float32)]}) + "\n")


def read_embeddings(path):
    out = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                rec = json.loads(line)
                out[str(rec["id"])] = np.asarray(rec["vec"], dtype=np.float32)
    return out
