"""Every metric on worked examples with hand-checkable numbers."""

import math

from constrainlab import (
    EvalPair,
    SampleSet,
    bleu,
    corpus_repetition,
    entropy_estimate,
    length_ratio,
    mass_coverage,
    unique_count,
    unique_ngram_fraction,
)

print("length ratio (micro-averaged: total tokens over total tokens)")
pairs = [EvalPair((1,), (1, 2)), EvalPair((3, 4, 5, 6), (3, 4, 5, 6))]
print(f"  |h|=1,4 vs |r|=2,4 -> {length_ratio(pairs):.4f}  (macro would say 0.75)\n")

print("unique n-gram fraction (distinct n-grams over n-gram positions)")
print(f"  'la la la la' n=1 -> {unique_ngram_fraction([9, 9, 9, 9], 1)}")
print(f"  'a b a b a'  n=2 -> {unique_ngram_fraction([1, 2, 1, 2, 1], 2)}")
print(f"  too short for n=4 -> {unique_ngram_fraction([1, 2], 4)} (excluded from corpus averages)")
print(f"  corpus macro-average of 0.25 and 1.0 -> {corpus_repetition([[9, 9, 9, 9], [1, 2, 3, 7]], 1)}\n")

print("corpus BLEU (n=1..4, epsilon-smoothed, brevity penalty)")
print(f"  identical corpus        -> {bleu([[1, 2, 3]], [[1, 2, 3]]):.4f}")
print(f"  3-token hyp, 4-token ref -> {bleu([[1, 2, 3]], [[1, 2, 3, 4]]):.4f} "
      f"= exp(1 - 4/3) = {math.exp(1 - 4 / 3):.4f}\n")

print("sampling metrics (from (tokens, logprob) sample sets)")
half = math.log(0.5)
samples = SampleSet((((1, 0), half), ((2, 0), half), ((1, 0), half)), seed=0)
print(f"  two equiprobable strings: entropy {entropy_estimate(samples):.4f} = ln 2")
print(f"  coverage {mass_coverage(samples):.1f} (both strings seen, half the mass each)")
print(f"  unique strings {unique_count(samples)}")
