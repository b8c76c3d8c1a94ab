import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_lcs
from patcherizer.errors import EmptyReference, LengthMismatch
from patcherizer.metrics import bleu, corpus_scores, lcs, meteor, meteor_alignment, plus_minus_recall, rouge_l, tokenize


def t(s):
    return s.split()


# -- BLEU --------------------------------------------------------------------

def test_bleu_identical_and_disjoint():
    assert bleu(t("fix the null check here"), t("fix the null check here")) == 1.0
    assert bleu(t("a b c d"), t("w x y z")) < 0.05


def test_bleu_prefix_hand_computed():
    # precisions 3/3, 2/2, 1/1, and no 4-grams at all: 0 of 0 -> 1/(0+1)
    # brevity penalty exp(1 - 4/3)
    assert math.isclose(bleu(t("the cat sat"), t("the cat sat down")), math.exp(-1 / 3))


def test_bleu_mat_hand_computed():
    # unigram 5/6, bigram 3/5, trigram 1/4, 4-gram 0/3 -> 1/4; equal lengths
    got = bleu(t("the cat is on the mat"), t("the cat sat on the mat"))
    assert math.isclose(got, (5 / 6 * 3 / 5 * 1 / 4 * 1 / 4) ** 0.25)


def test_bleu_clipping_hand_computed():
    # "the the the the" vs "the cat": unigram clipped 1/4; bigram "the the" x3, 0 -> 1/4;
    # trigram 0 of 2 -> 1/3; 4-gram 0 of 1 -> 1/2; no brevity penalty
    got = bleu(t("the the the the"), t("the cat"))
    assert math.isclose(got, (1 / 4 * 1 / 4 * 1 / 3 * 1 / 2) ** 0.25)


def test_bleu_is_not_symmetric_and_needs_a_reference():
    a, b = t("the cat sat"), t("the cat sat down")
    assert bleu(a, b) != bleu(b, a)
    with pytest.raises(EmptyReference):
        bleu(a, [])
    assert bleu([], a) == 0.0


# -- ROUGE-L -----------------------------------------------------------------

def test_rouge_examples():
    assert rouge_l(t("a b c"), t("a b c")) == 1.0
    assert rouge_l(t("a b"), t("c d")) == 0.0
    assert math.isclose(rouge_l(t("the cat is on the mat"), t("the cat sat on the mat")), 5 / 6)
    # LCS "b d": P = 2/4, R = 2/2
    assert math.isclose(rouge_l(t("a b c d"), t("b d")), 2 / 3)
    assert math.isclose(rouge_l(t("b d"), t("a b c d")), 2 / 3)


def test_rouge_f1_is_symmetric():
    # LCS is symmetric and F1 is symmetric in (P, R), so swapping the
    # arguments cannot change the score; BLEU is the asymmetric one
    a, b = t("a b c d e"), t("e d c b a x")
    assert rouge_l(a, b) == rouge_l(b, a)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from("abcd"), max_size=8), st.lists(st.sampled_from("abcd"), max_size=8))
def test_lcs_matches_subsequence_enumeration(a, b):
    assert lcs(a, b) == brute_lcs(a, b)


# -- METEOR ------------------------------------------------------------------

def test_meteor_identical():
    for m in (1, 3, 6):
        toks = [f"w{i}" for i in range(m)]
        assert math.isclose(meteor(toks, toks), 1.0 - 0.5 / m ** 3)


def test_meteor_swapped_pair_hand_computed():
    # a->0, b->2, c->1: three chunks of one word; F_mean = 1
    assert meteor_alignment(t("a b c"), t("a c b")) == (3, 3)
    assert math.isclose(meteor(t("a b c"), t("a c b")), 0.5)


def test_meteor_prefers_fewer_chunks():
    # the/cat/the vs the/the/cat: mapping the first "the" to ref position 1 makes
    # "the cat" one chunk; the second "the" is the other chunk
    assert meteor_alignment(t("the cat the"), t("the the cat")) == (3, 2)
    assert math.isclose(meteor(t("the cat the"), t("the the cat")), 1 - 0.5 * (2 / 3) ** 3)


def test_meteor_partial_hand_computed():
    # 2 matches in one chunk; P = 2/3, R = 2/4
    p, r = 2 / 3, 2 / 4
    f = 10 * p * r / (r + 9 * p)
    assert math.isclose(meteor(t("fix null x"), t("fix null pointer check")), f * (1 - 0.5 * (1 / 2) ** 3))
    assert meteor(t("a b"), t("c d")) == 0.0


def brute_meteor_alignment(c, r):
    """Enumerate every max-size injective exact-match alignment."""
    pairs = [(i, j) for i in range(len(c)) for j in range(len(r)) if c[i] == r[j]]
    for k in range(min(len(c), len(r)), 0, -1):
        chunks = []
        for sub in itertools.combinations(pairs, k):
            if len({i for i, _ in sub}) == k and len({j for _, j in sub}) == k:
                n, prev = 0, None
                for i, j in sorted(sub):
                    if prev is None or (i, j) != (prev[0] + 1, prev[1] + 1):
                        n += 1
                    prev = (i, j)
                chunks.append(n)
        if chunks:
            return k, min(chunks)
    return 0, 0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from("abc"), max_size=6), st.lists(st.sampled_from("abc"), max_size=6))
def test_meteor_alignment_matches_enumeration(c, r):
    assert meteor_alignment(c, r) == brute_meteor_alignment(c, r)


words = st.lists(st.sampled_from(["fix", "null", "check", "add", "test", "the"]), min_size=1, max_size=8)


@settings(max_examples=100, deadline=None)
@given(words, words)
def test_metrics_in_unit_interval(c, r):
    for f in (bleu, rouge_l, meteor):
        assert 0.0 <= f(c, r) <= 1.0


# -- recall and corpus scores ------------------------------------------------

def test_recall_examples():
    assert plus_minus_recall([0.9, 0.8, 0.1], [1, 1, 0]) == (1.0, 1.0)
    eps = 1e-9
    assert plus_minus_recall([0.5 - eps] * 4, [1, 1, 0, 0]) == (0.0, 1.0)
    assert plus_minus_recall([0.9, 0.2, 0.6, 0.4], [1, 1, 0, 0]) == (0.5, 0.5)
    assert plus_minus_recall([0.9], [1]) == (1.0, None)
    with pytest.raises(LengthMismatch):
        plus_minus_recall([0.1], [])


def test_recall_confusion_matrix_oracle():
    rng = np.random.default_rng(5)
    preds, labels = rng.random(100), rng.integers(0, 2, 100)
    table = np.zeros((2, 2), dtype=int)
    for p, y in zip(preds, labels):
        table[y, int(p >= 0.5)] += 1
    plus, minus = plus_minus_recall(list(preds), list(labels))
    assert plus == table[1, 1] / table[1].sum()
    assert minus == table[0, 0] / table[0].sum()


def test_corpus_scores_mean_and_permutation():
    cands = ["fix the null check", "add a test", "remove unused import"]
    refs = ["fix null check", "add test case", "remove unused import"]
    s = corpus_scores(cands, refs)
    per = [bleu(tokenize(c), tokenize(r)) for c, r in zip(cands, refs)]
    assert math.isclose(s["bleu"], sum(per) / 3) and s["n"] == 3
    p = corpus_scores(cands[::-1], refs[::-1])
    assert all(math.isclose(s[k], p[k]) for k in ("bleu", "rouge_l", "meteor"))
    assert corpus_scores([], [])["n"] == 0
    with pytest.raises(LengthMismatch):
        corpus_scores(["a"], [])


def test_tokenize_lowercases():
    assert tokenize("Fix NULL  check") == ["fix", "null", "check"]
