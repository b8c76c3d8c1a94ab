"""Sentence-level generation metrics and correctness recalls.

Corpus scores are plain means of sentence scores.
"""

import math
from collections import Counter

from . import kernels
from .errors import EmptyReference, LengthMismatch


def tokenize(text):
    return text.lower().split()


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate, reference, max_n=4):
    """Smoothed sentence BLEU.

    Unigram precision is unsmoothed (no shared word gives 0). For higher
    orders a zero match count becomes ``1 / (count + 1)``.
    """
    if not reference:
        raise EmptyReference("reference has no tokens")
    c, r = len(candidate), len(reference)
    if c == 0:
        return 0.0
    log_p = 0.0
    for n in range(1, max_n + 1):
        cand, ref = _ngrams(candidate, n), _ngrams(reference, n)
        total = max(c - n + 1, 0)
        matched = sum(min(k, ref[g]) for g, k in cand.items())
        if matched == 0:
            if n == 1:
                return 0.0
            p = 1.0 / (total + 1)
        else:
            p = matched / total
        log_p += math.log(p) / max_n
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return bp * math.exp(log_p)


def _intern(a, b):
    table = {}
    return [table.setdefault(t, len(table)) for t in a], [table.setdefault(t, len(table)) for t in b]


def lcs(a, b):
    x, y = _intern(a, b)
    return kernels.lcs_length(x, y)


def rouge_l(candidate, reference):
    n = lcs(candidate, reference)
    if n == 0:
        return 0.0
    p, r = n / len(candidate), n / len(reference)
    return 2 * p * r / (p + r)


def _count_chunks(pairs):
    """Chunks in an alignment given as (cand_pos, ref_pos) sorted by cand_pos."""
    chunks, prev = 0, None
    for i, j in pairs:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def meteor_alignment(candidate, reference, search_limit=100_000):
    """Exact-unigram alignment with the most matches, then the fewest chunks.

    Returns ``(matches, chunks)``. Ambiguous words are resolved by a
    branch-and-bound search over candidate positions.
    """
    ref_pos = {}
    for j, t in enumerate(reference):
        ref_pos.setdefault(t, []).append(j)
    cand_count = Counter(candidate)
    ref_count = Counter(reference)
    quota = {t: min(cand_count[t], ref_count[t]) for t in cand_count if t in ref_count}
    matches = sum(quota.values())
    if matches == 0:
        return 0, 0
    remaining = Counter(cand_count)
    best = [math.inf]
    steps = [0]
    used = set()

    def search(i, need, chunks, prev):
        steps[0] += 1
        if chunks >= best[0] or steps[0] > search_limit:
            return
        if i == len(candidate):
            if all(v == 0 for v in need.values()):
                best[0] = chunks
            return
        t = candidate[i]
        remaining[t] -= 1
        options = [j for j in ref_pos.get(t, ()) if j not in used] if need.get(t, 0) else []
        if prev is not None:
            options.sort(key=lambda j: (j != prev[1] + 1 or i != prev[0] + 1, j))
        for j in options:
            cont = prev is not None and i == prev[0] + 1 and j == prev[1] + 1
            used.add(j)
            need[t] -= 1
            search(i + 1, need, chunks + (0 if cont else 1), (i, j))
            need[t] += 1
            used.discard(j)
        if need.get(t, 0) <= remaining[t]:
            search(i + 1, need, chunks, prev)
        remaining[t] += 1

    search(0, dict(quota), 0, None)
    if best[0] == math.inf:
        best[0] = _greedy_chunks(candidate, ref_pos, quota)
    return matches, int(best[0])


def _greedy_chunks(candidate, ref_pos, quota):
    need, used, pairs = dict(quota), set(), []
    for i, t in enumerate(candidate):
        if need.get(t, 0):
            j = next(j for j in ref_pos[t] if j not in used)
            used.add(j)
            need[t] -= 1
            pairs.append((i, j))
    return _count_chunks(pairs)


def meteor(candidate, reference):
    """METEOR with exact matching only: ``F_mean * (1 - 0.5 (chunks/matches)^3)``."""
    if not candidate or not reference:
        return 0.0
    m, chunks = meteor_alignment(candidate, reference)
    if m == 0:
        return 0.0
    p, r = m / len(candidate), m / len(reference)
    f_mean = 10 * p * r / (r + 9 * p)
    return f_mean * (1.0 - 0.5 * (chunks / m) ** 3)


def plus_minus_recall(predictions, labels, threshold=0.5):
    """(+Recall, -Recall); a side with no samples is ``None``.

    A prediction counts as "correct patch" when it is ``>= threshold``.
    """
    if len(predictions) != len(labels):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(labels)} labels")
    tp = fn = tn = fp = 0
    for p, y in zip(predictions, labels):
        pos = p >= threshold
        if int(y) == 1:
            tp += pos
            fn += not pos
        else:
            tn += not pos
            fp += pos
    plus = tp / (tp + fn) if tp + fn else None
    minus = tn / (tn + fp) if tn + fp else None
    return plus, minus


def corpus_scores(candidates, references):
    """Mean sentence BLEU / ROUGE-L / METEOR over paired strings."""
    if len(candidates) != len(references):
        raise LengthMismatch(f"{len(candidates)} candidates vs {len(references)} references")
    n = len(candidates)
    if n == 0:
        return {"bleu": None, "rouge_l": None, "meteor": None, "n": 0}
    totals = {"bleu": 0.0, "rouge_l": 0.0, "meteor": 0.0}
    for cand, ref in zip(candidates, references):
        c, r = tokenize(cand), tokenize(ref)
        totals["bleu"] += bleu(c, r)
        totals["rouge_l"] += rouge_l(c, r)
        totals["meteor"] += meteor(c, r)
    return {k: v / n for k, v in totals.items()} | {"n": n}
