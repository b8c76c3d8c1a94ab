# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled hot loops: LCS dynamic program and BPE pair counting/merging."""

from libc.stdlib cimport malloc, free


def lcs_length(a, b):
    cdef Py_ssize_t n, m, i, j
    cdef long *prev
    cdef long *cur
    cdef long *tmp
    cdef long *bb
    cdef long x
    if len(a) < len(b):
        a, b = b, a
    n = len(a)
    m = len(b)
    if m == 0:
        return 0
    prev = <long *> malloc((m + 1) * sizeof(long))
    cur = <long *> malloc((m + 1) * sizeof(long))
    bb = <long *> malloc(m * sizeof(long))
    if prev == NULL or cur == NULL or bb == NULL:
        free(prev); free(cur); free(bb)
        raise MemoryError()
    try:
        for j in range(m):
            bb[j] = b[j]
        for j in range(m + 1):
            prev[j] = 0
        cur[0] = 0
        for i in range(n):
            x = a[i]
            for j in range(m):
                if x == bb[j]:
                    cur[j + 1] = prev[j] + 1
                elif cur[j] > prev[j + 1]:
                    cur[j + 1] = cur[j]
                else:
                    cur[j + 1] = prev[j + 1]
            tmp = prev
            prev = cur
            cur = tmp
        return prev[m]
    finally:
        free(prev); free(cur); free(bb)


def count_pairs(list words, list freqs):
    cdef dict counts = {}
    cdef list word
    cdef Py_ssize_t i, k, n
    cdef long f
    for k in range(len(words)):
        word = words[k]
        f = freqs[k]
        n = len(word)
        for i in range(n - 1):
            key = (word[i], word[i + 1])
            counts[key] = counts.get(key, 0) + f
    return counts


def merge_pair(list words, long left, long right, long new_id):
    cdef list out = []
    cdef list word, merged
    cdef Py_ssize_t i, n
    for word in words:
        n = len(word)
        if n < 2:
            out.append(word)
            continue
        merged = []
        i = 0
        while i < n:
            if i < n - 1 and <long> word[i] == left and <long> word[i + 1] == right:
                merged.append(new_id)
                i += 2
            else:
                merged.append(word[i])
                i += 1
        out.append(merged)
    return out


def apply_merges(symbols, dict ranks):
    cdef list word = list(symbols)
    cdef list merged
    cdef Py_ssize_t i, best_at, n
    cdef long best_rank, left, right, new_id
    while len(word) > 1:
        best_at = -1
        best_rank = -1
        new_id = -1
        n = len(word)
        for i in range(n - 1):
            r = ranks.get((word[i], word[i + 1]))
            if r is not None and (best_at < 0 or <long> r[0] < best_rank):
                best_rank = r[0]
                new_id = r[1]
                best_at = i
        if best_at < 0:
            break
        left = word[best_at]
        right = word[best_at + 1]
        merged = []
        i = 0
        while i < n:
            if i < n - 1 and <long> word[i] == left and <long> word[i + 1] == right:
                merged.append(new_id)
                i += 2
            else:
                merged.append(word[i])
                i += 1
        word = merged
    return word
