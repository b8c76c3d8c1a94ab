"""Greedy and beam-search decoding over a next-token log-probability function."""

from dataclasses import dataclass

import numpy as np

from .bpe import BOS, EOS


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple  # starts with BOS
    score: float  # summed log-probability
    finished: bool = False

    def output(self):
        out = list(self.tokens[1:])
        if out and out[-1] == EOS and self.finished:
            out.pop()
        return out


def _rank_key(h):
    return (-h.score, h.tokens)


def beam_search(step_logprobs, beam=3, max_out=32, bos=BOS, eos=EOS, return_all=False):
    """Keep the ``beam`` best prefixes by summed log-probability.

    ``step_logprobs(prefix)`` returns a 1-D array of next-token log-probs.
    Ties go to the lexicographically smaller token sequence, so with equal
    scores the lower token id wins. ``beam=1`` is stepwise argmax.
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")
    hyps = [Hypothesis((bos,), 0.0)]
    for _ in range(max_out):
        if all(h.finished for h in hyps):
            break
        pool = []
        for h in hyps:
            if h.finished:
                pool.append(h)
                continue
            lp = np.asarray(step_logprobs(list(h.tokens)), dtype=np.float64)
            order = np.lexsort((np.arange(len(lp)), -lp))[:beam]
            for t in order:
                t = int(t)
                pool.append(Hypothesis(h.tokens + (t,), h.score + float(lp[t]), t == eos))
        pool.sort(key=_rank_key)
        hyps = pool[:beam]
    hyps.sort(key=_rank_key)
    if return_all:
        return hyps
    return hyps[0].output()


def greedy_decode(step_logprobs, max_out=32, bos=BOS, eos=EOS):
    return beam_search(step_logprobs, 1, max_out, bos, eos)
