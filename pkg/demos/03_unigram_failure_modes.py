"""The three failure modes of a unigram language model.

Because every sentence contributes one EOS, a unigram model often has
P(EOS) above every word's probability, and then: exact search returns the
empty string, greedy search repeats the most likely word forever, and random
samples are varied but disfluent.  The reference decoders reproduce all
three on one instance.
"""

from collections import Counter

from constrainlab import UnigramModel, ancestral_sample, exhaustive_mode, greedy

# a tiny world: ids 0=EOS, 1="the", 2="cat"
model = UnigramModel([0.35, 0.45, 0.20], eos_id=0)
names = {0: "<eos>", 1: "the", 2: "cat"}

mode = exhaustive_mode(model, source=[], max_len=8)
print(f"exact search:  {[names[t] for t in mode.tokens]}  logprob {mode.logprob:.3f}")
print("   P(empty) = 0.35 beats P('the')*P(EOS) = 0.1575, so the mode is empty.\n")

g = greedy(model, source=[], max_len=12)
print(f"greedy search: {[names[t] for t in g.tokens]}")
print("   argmax is 'the' at every step; EOS never wins, the cap stops it.\n")

samples = ancestral_sample(model, source=[], n_samples=8, seed=11, max_len=12)
print("samples (varied lengths, geometric):")
for tokens, logprob in samples.samples:
    print(f"   {' '.join(names[t] for t in tokens):40s} {logprob:7.3f}")

lengths = Counter(len(t) - 1 if t[-1] == 0 else len(t) for t, _ in
                  ancestral_sample(model, [], 2000, seed=1, max_len=100).samples)
mean = sum(k * v for k, v in lengths.items()) / 2000
print(f"\nmean sampled length over 2000 draws: {mean:.2f} "
      f"(geometric expectation (1-p)/p = {0.65 / 0.35:.2f})")
