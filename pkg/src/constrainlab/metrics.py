"""Quantitative measures of degeneration and translation quality.

All lengths are counted in tokens with EOS excluded; callers strip EOS before
building evaluation pairs.  Aggregation orders are fixed (input order) so
reports are bit-stable.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .decoding import SampleSet


class MetricError(ValueError):
    """Raised when a metric's preconditions are violated."""


@dataclass(frozen=True)
class EvalPair:
    """Hypothesis and reference token sequences, both without EOS."""

    hypothesis: tuple[int, ...]
    reference: tuple[int, ...]


def length_ratio(pairs: Sequence[EvalPair]) -> float:
    """Micro-averaged length ratio: total hypothesis tokens / total reference tokens."""
    total_h = sum(len(p.hypothesis) for p in pairs)
    total_r = sum(len(p.reference) for p in pairs)
    if total_r == 0:
        raise MetricError("length_ratio is undefined for all-empty references")
    return total_h / total_r


def unique_ngram_fraction(seq: Sequence[int], n: int) -> float | None:
    """Distinct n-grams over n-gram positions; None when the sequence is shorter than n."""
    if n < 1:
        raise MetricError("n must be >= 1")
    positions = len(seq) - n + 1
    if positions < 1:
        return None
    grams = {tuple(seq[i : i + n]) for i in range(positions)}
    return len(grams) / positions


def corpus_repetition(outputs: Sequence[Sequence[int]], n: int) -> float:
    """Macro-average of unique_ngram_fraction over outputs where it is defined."""
    fractions = [f for seq in outputs if (f := unique_ngram_fraction(seq, n)) is not None]
    if not fractions:
        raise MetricError(f"no output of length >= {n}; repetition undefined")
    return sum(fractions) / len(fractions)


_BLEU_EPS = 1e-9


def bleu(hypotheses: Sequence[Sequence[int]], references: Sequence[Sequence[int]]) -> float:
    """Corpus-level BLEU in [0, 1], single reference per hypothesis.

    Geometric mean of modified n-gram precisions for n = 1..4, each computed
    as (matched + eps) / (total + eps) with eps = 1e-9 so zero counts never
    zero the geometric mean, times the brevity penalty
    exp(min(0, 1 - total_ref_len / total_hyp_len)).
    """
    if len(hypotheses) == 0:
        raise MetricError("bleu is undefined for an empty test set")
    if len(hypotheses) != len(references):
        raise MetricError("hypothesis and reference counts differ")
    matched = [0] * 4
    total = [0] * 4
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp = tuple(hyp)
        ref = tuple(ref)
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, 5):
            hyp_grams = Counter(hyp[i : i + n] for i in range(len(hyp) - n + 1))
            ref_grams = Counter(ref[i : i + n] for i in range(len(ref) - n + 1))
            total[n - 1] += sum(hyp_grams.values())
            matched[n - 1] += sum(min(c, ref_grams[g]) for g, c in hyp_grams.items())
    log_precision = sum(
        math.log((matched[i] + _BLEU_EPS) / (total[i] + _BLEU_EPS)) for i in range(4)
    ) / 4.0
    if hyp_len == 0:
        return 0.0
    brevity = min(0.0, 1.0 - ref_len / hyp_len)
    return math.exp(log_precision + brevity)


def entropy_estimate(samples: SampleSet) -> float:
    """Monte-Carlo sequence entropy in nats: mean negative sample log probability."""
    if len(samples) < 1:
        raise MetricError("entropy estimate needs at least one sample")
    total = 0.0
    for _, logprob in samples.samples:
        if logprob > 0.0:
            raise MetricError(f"sample has positive log probability {logprob}")
        total += logprob
    return -total / len(samples)


def _distinct_logprobs(samples: SampleSet) -> dict[tuple[int, ...], float]:
    seen: dict[tuple[int, ...], float] = {}
    for tokens, logprob in samples.samples:
        if tokens in seen and abs(seen[tokens] - logprob) > 1e-9:
            raise MetricError(
                f"inconsistent log probabilities for a repeated sample: "
                f"{seen[tokens]} vs {logprob}"
            )
        seen.setdefault(tokens, logprob)
    return seen


def mass_coverage(samples: SampleSet) -> float:
    """Total model probability mass covered by the distinct sampled strings."""
    seen = _distinct_logprobs(samples)
    return float(sum(math.exp(lp) for lp in seen.values()))


def unique_count(samples: SampleSet) -> int:
    """Number of distinct strings among the samples."""
    return len(_distinct_logprobs(samples))
