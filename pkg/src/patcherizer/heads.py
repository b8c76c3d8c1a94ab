"""Task heads: correctness classifier, its loss, and embedding retrieval."""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import EmptyIndex, LengthMismatch, MissingBugReport, ShapeMismatch


@dataclass
class CorrectnessSample:
    patch: object
    label: int = None
    bug_report: str = None
    bug_vector: np.ndarray = None
    id: str = ""

    def __post_init__(self):
        if self.bug_report is not None and self.bug_vector is not None:
            raise ValueError("give either a bug-report text or a precomputed vector, not both")


def classifier_prob(patch_vec, bug_vec, w, b):
    """``sigmoid(FC(E_patch ++ E_bugReport))`` as a 1-element tensor."""
    if bug_vec is None:
        raise MissingBugReport("sample has neither bug-report text nor vector")
    x = ad.concat([patch_vec, bug_vec], axis=0)
    if w.shape != (x.shape[0], 1):
        raise ShapeMismatch(f"classifier weight {w.shape} vs input of size {x.shape[0]}")
    return ad.sigmoid(x @ w + b)


def correctness_loss(probs, labels, clip=1e-7):
    """Summed binary cross-entropy over a dataset, probabilities clipped."""
    if len(probs) != len(labels):
        raise LengthMismatch(f"{len(probs)} predictions vs {len(labels)} labels")
    total = 0.0
    for p, y in zip(probs, labels):
        p = min(max(float(p), clip), 1.0 - clip)
        total -= y * math.log(p) + (1 - y) * math.log(1.0 - p)
    return total


@dataclass
class RetrievalIndex:
    """Training-set embeddings (L2-normalized at insert) with their messages."""

    ids: list = field(default_factory=list)
    vecs: list = field(default_factory=list)
    messages: list = field(default_factory=list)

    def add(self, pid, vec, message=""):
        v = np.asarray(vec, dtype=np.float64)
        norm = np.linalg.norm(v)
        self.ids.append(str(pid))
        self.vecs.append(v / norm if norm > 0 else v)
        self.messages.append(message)

    def __len__(self):
        return len(self.ids)

    def scores(self, query):
        q = np.asarray(query, dtype=np.float64)
        norm = np.linalg.norm(q)
        if norm > 0:
            q = q / norm
        return np.stack(self.vecs) @ q

    def retrieve(self, query):
        """``(id, message, cosine)`` of the best entry; ties go to the smallest id."""
        if not self.ids:
            raise EmptyIndex("retrieval index is empty")
        s = self.scores(query)
        best = min(range(len(self.ids)), key=lambda i: (-s[i], self.ids[i]))
        return self.ids[best], self.messages[best], float(s[best])

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for pid, v, msg in zip(self.ids, self.vecs, self.messages):
                f.write(json.dumps({"id": pid, "vec": [float(x) for x in v], "message": msg}) + "\n")

    @classmethod
    def load(cls, path):
        index = cls()
        with open(path, encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    rec = json.loads(line)
                    index.add(rec["id"], rec["vec"], rec.get("message", ""))
        return index


def retrieve(index, query):
    """``query`` is a ``PatchEmbedding`` or a plain vector."""
    vec = query.vector() if hasattr(query, "vector") else query
    return index.retrieve(vec)
