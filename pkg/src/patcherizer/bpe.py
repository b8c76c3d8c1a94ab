"""Byte-pair-encoding vocabulary over code text.

Text is pre-split into words (identifier runs and single punctuation
characters). A word preceded by whitespace gets a leading ``SPACE`` marker
symbol so decoding can restore single spaces. Merges never cross words.
"""

import json
import re
from collections import Counter

from . import kernels
from .errors import CorpusEmpty, UnknownId

PAD, BOS, EOS, MASK, UNK = 0, 1, 2, 3, 4
SPECIALS = {"<pad>": PAD, "<s>": BOS, "</s>": EOS, "<mask>": MASK, "<unk>": UNK}
SPACE = "▁"

_PIECE_RE = re.compile(r"\s+|\w+|[^\w\s]")


def pretokenize(text):
    words = []
    spaced = False
    for piece in _PIECE_RE.findall(text):
        if piece.isspace():
            spaced = True
            continue
        words.append(SPACE + piece if spaced and words else piece)
        spaced = False
    return words


def normalize(text):
    """The form ``decode(encode(text))`` returns: whitespace runs collapsed."""
    return "".join(w.replace(SPACE, " ") for w in pretokenize(text))


class Vocab:
    def __init__(self, alphabet, merges):
        self.alphabet = list(alphabet)
        self.merges = [tuple(m) for m in merges]
        self.id_to_token = [None] * len(SPECIALS)
        for tok, i in SPECIALS.items():
            self.id_to_token[i] = tok
        self.token_to_id = dict(SPECIALS)
        for ch in self.alphabet:
            self._add(ch)
        self.ranks = {}
        for rank, (a, b) in enumerate(self.merges):
            left, right = self.token_to_id[a], self.token_to_id[b]
            new_id = self._add(a + b)
            self.ranks.setdefault((left, right), (rank, new_id))
        self._cache = {}

    def _add(self, tok):
        if tok in self.token_to_id:
            return self.token_to_id[tok]
        self.token_to_id[tok] = len(self.id_to_token)
        self.id_to_token.append(tok)
        return self.token_to_id[tok]

    def __len__(self):
        return len(self.id_to_token)

    def encode_word(self, word):
        ids = self._cache.get(word)
        if ids is None:
            symbols = [self.token_to_id.get(ch, UNK) for ch in word]
            ids = kernels.apply_merges(symbols, self.ranks)
            self._cache[word] = ids
        return ids

    def encode_ids(self, text):
        out = []
        for word in pretokenize(text):
            out.extend(self.encode_word(word))
        return out

    def to_json(self):
        return {"merges": [list(m) for m in self.merges], "specials": dict(SPECIALS), "alphabet": self.alphabet}

    @classmethod
    def from_json(cls, doc):
        if doc.get("specials", SPECIALS) != SPECIALS:
            raise ValueError("vocab file uses a different special-token layout")
        return cls(doc["alphabet"], doc["merges"])

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json(), f, ensure_ascii=False, indent=1)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            return cls.from_json(json.load(f))


def train_bpe(corpus, target_size):
    """Learn merges until the vocabulary holds ``target_size`` entries.

    Ties on pair frequency go to the lexicographically smallest
    ``(left, right)`` string pair.
    """
    word_counts = Counter()
    for text in corpus:
        word_counts.update(pretokenize(text))
    if not word_counts:
        raise CorpusEmpty("no tokens in training corpus")
    alphabet = sorted({ch for w in word_counts for ch in w})
    if target_size <= len(alphabet) + len(SPECIALS):
        raise ValueError(
            f"target_size {target_size} must exceed {len(alphabet)} base characters + {len(SPECIALS)} specials"
        )
    vocab = Vocab(alphabet, [])
    names = list(vocab.id_to_token)
    words = sorted(word_counts)
    freqs = [word_counts[w] for w in words]
    seqs = [[vocab.token_to_id[ch] for ch in w] for w in words]
    merges = []
    size = len(names)
    while size < target_size:
        counts = kernels.count_pairs(seqs, freqs)
        if not counts:
            break
        (left, right), _ = min(counts.items(), key=lambda kv: (-kv[1], names[kv[0][0]], names[kv[0][1]]))
        merged = names[left] + names[right]
        merges.append((names[left], names[right]))
        if merged in vocab.token_to_id:
            new_id = vocab.token_to_id[merged]
        else:
            new_id = vocab._add(merged)
            names.append(merged)
            size += 1
        seqs = kernels.merge_pair(seqs, left, right, new_id)
    return Vocab(alphabet, merges)


def encode(v, text, max_len):
    """Right-padded ids of length ``max_len`` plus the 0/1 real-token mask."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    ids = v.encode_ids(text)[:max_len]
    n = len(ids)
    return ids + [PAD] * (max_len - n), [1] * n + [0] * (max_len - n)


def decode(v, ids):
    parts = []
    for i in ids:
        i = int(i)
        if i < 0 or i >= len(v):
            raise UnknownId(f"token id {i} not in vocabulary of size {len(v)}")
        if i in (PAD, BOS, EOS):
            continue
        parts.append(v.id_to_token[i])
    return "".join(parts).replace(SPACE, " ").strip()
