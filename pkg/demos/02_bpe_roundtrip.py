"""Byte-pair encoding: learn once on full data, apply at any truncation level.

Shows the merge list learned jointly over both corpus sides, the continuation
marker convention, the lossless round trip, and why truncated sentences
tokenize to prefixes of their full tokenizations.
"""

from constrainlab import (
    Sentence,
    TruncationLevel,
    apply_bpe,
    build_vocabulary,
    decode,
    detokenize,
    encode,
    learn_bpe,
    truncate_sentence,
)
from constrainlab.toy import generate_toy_corpus

toy = generate_toy_corpus(seed=7)

model = learn_bpe(toy.train, num_merges=60)  # few merges, so words split visibly
print("first ten merges (rank order):")
for rank, (a, b) in enumerate(model.merges[:10]):
    print(f"  {rank}: {a} + {b} -> {a}{b}")

sentence = toy.train.pairs[0].source
pieces = apply_bpe(model, sentence)
print(f"\nsentence: {' '.join(sentence.words)}")
print(f"pieces:   {' '.join(pieces)}   (@@ marks word-internal pieces)")
print(f"restored: {' '.join(detokenize(pieces).words)}")
assert detokenize(pieces) == sentence

vocab = build_vocabulary([pieces])
ids = encode(vocab, pieces, append_eos=True)
print(f"\nids with EOS: {ids}")
assert decode(vocab, ids[:-1]) == pieces

truncated = truncate_sentence(sentence, TruncationLevel(40))
tp = apply_bpe(model, truncated)
print(f"\ns=40 pieces: {' '.join(tp)}")
print("prefix of the full tokenization:", pieces[: len(tp)] == tp)
