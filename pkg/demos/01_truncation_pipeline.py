"""Source truncation: the constrainedness knob.

Generates the bundled toy corpus, cleans it, and shows how one source
sentence shrinks as the truncation level s drops while its target stays
intact.
"""

from constrainlab import TruncationLevel, remove_copy_noise, truncate_sentence
from constrainlab.toy import generate_toy_corpus

toy = generate_toy_corpus(seed=7)
train = remove_copy_noise(toy.train)
pair = train.pairs[0]

print(f"toy corpus: {len(train)} training pairs")
print(f"target (never truncated): {' '.join(pair.target.words)}")
print(f"full source:              {' '.join(pair.source.words)}\n")

for s in range(0, 101, 10):
    prefix = truncate_sentence(pair.source, TruncationLevel(s))
    print(f"s={s:3d}  keeps {len(prefix)}/{len(pair.source)} words: {' '.join(prefix.words)}")

print("\nEach truncated source is a prefix of the next level's (ceiling is monotone).")
