"""Pure-Python reference versions of the hot loops.

Used when the compiled ``_kernels`` extension is unavailable, and as the
baseline in ``benchmarks/bench_kernels.py``. Signatures match the Cython
module exactly.
"""


def lcs_length(a, b):
    """Length of the longest common subsequence of two int sequences."""
    if len(a) < len(b):
        a, b = b, a
    m = len(b)
    if m == 0:
        return 0
    prev = [0] * (m + 1)
    for x in a:
        cur = [0] * (m + 1)
        for j in range(m):
            if x == b[j]:
                cur[j + 1] = prev[j] + 1
            else:
                cur[j + 1] = cur[j] if cur[j] > prev[j + 1] else prev[j + 1]
        prev = cur
    return prev[m]


def count_pairs(words, freqs):
    counts = {}
    for word, f in zip(words, freqs):
        for i in range(len(word) - 1):
            key = (word[i], word[i + 1])
            counts[key] = counts.get(key, 0) + f
    return counts


def merge_pair(words, left, right, new_id):
    out = []
    for word in words:
        n = len(word)
        if n < 2:
            out.append(word)
            continue
        merged = []
        i = 0
        while i < n:
            if i < n - 1 and word[i] == left and word[i + 1] == right:
                merged.append(new_id)
                i += 2
            else:
                merged.append(word[i])
                i += 1
        out.append(merged)
    return out


def apply_merges(symbols, ranks):
    """Greedy lowest-rank-first merging of one word.

    ``ranks`` maps ``(left, right)`` to ``(rank, merged_id)``.
    """
    word = list(symbols)
    while len(word) > 1:
        best = None
        best_at = -1
        for i in range(len(word) - 1):
            r = ranks.get((word[i], word[i + 1]))
            if r is not None and (best is None or r[0] < best[0]):
                best = r
                best_at = i
        if best is None:
            break
        left, right = word[best_at], word[best_at + 1]
        merged = []
        i = 0
        while i < len(word):
            if i < len(word) - 1 and word[i] == left and word[i + 1] == right:
                merged.append(best[1])
                i += 2
            else:
                merged.append(word[i])
                i += 1
        word = merged
    return word
