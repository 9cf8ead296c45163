"""Greedy, beam, and sampling on the toy corpus at two constrainedness levels.

Fits the reference conditional model at s=10 and s=100 and decodes the same
test sentence, showing the characteristic regime change: with most of the
source hidden, greedy locks into a repetition loop and beam search prefers
the empty string; with the full source both recover the reference.
"""

from constrainlab import (
    DecodeConfig,
    TruncationLevel,
    ancestral_sample,
    apply_bpe,
    beam_search,
    build_vocabulary,
    encode_corpus,
    fit_conditional_ngram,
    greedy,
    learn_bpe,
    truncate_corpus,
)
from constrainlab.toy import generate_toy_corpus

toy = generate_toy_corpus(seed=7)
bpe = learn_bpe(toy.train, 4000)
vocab = build_vocabulary(
    [apply_bpe(bpe, p.source) for p in toy.train] + [apply_bpe(bpe, p.target) for p in toy.train]
)
eos = vocab.eos_id
words = lambda ids: " ".join(vocab.id_to_token[t] for t in ids) or "(empty)"

for s in (10, 100):
    level = TruncationLevel(s)
    train = encode_corpus(truncate_corpus(toy.train, level), bpe, vocab)
    test = encode_corpus(truncate_corpus(toy.test, level), bpe, vocab)
    model = fit_conditional_ngram(
        train, vocab, order=2, lam=0.22, additive=0.01, interpolation_weights=[0.99, 0.01]
    )
    src, ref = test[0]
    print(f"\n=== s={s} ===")
    print(f"source:  {words(src)}")
    print(f"target:  {words(ref)}")
    g = greedy(model, src, max_len=30)
    print(f"greedy:  {words(g.content(eos))}")
    top = beam_search(model, src, DecodeConfig(beam_size=4, max_len=30))[0]
    print(f"beam k4: {words(top.content(eos))}   logprob {top.logprob:.2f}")
    sample = ancestral_sample(model, src, n_samples=3, seed=5, max_len=30)
    for i, (tokens, _) in enumerate(sample.samples):
        print(f"sample{i}: {words(tuple(t for t in tokens if t != eos))}")
