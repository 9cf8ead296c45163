"""Synthetic parallel toy corpus generator.

The language is template-based.  Content types are deterministic chains of
type-exclusive words; their sources open with the shared word "da", carry
type markers in the middle, and end with the shared terminator "dot", so
truncation hides the type cues.  Two "mantra" types repeat one word many
times: a hidden one whose source looks like a content source (its mass is
what makes degenerate repetition attractive when sources are truncated) and
an overt one whose source words are mantra-exclusive at every level, giving
test references a stable amount of natural repetition.

Type counts are exact per split rather than sampled, which keeps type priors
perfectly balanced: low-truncation decoder behavior is then driven by
co-occurrence statistics instead of sampling noise in the corpus mix.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

from .corpus import ParallelCorpus, Sentence, SentencePair, write_parallel
from .rng import CounterRng, derive_seed

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


def _word(index: int, prefix: str) -> str:
    """Deterministic pronounceable pseudo-word number `index`."""
    syllables = []
    i = index
    for _ in range(2):
        syllables.append(_CONSONANTS[i % len(_CONSONANTS)] + _VOWELS[(i // 7) % len(_VOWELS)])
        i //= 35
    return prefix + "".join(syllables)


@dataclass(frozen=True)
class ToyConfig:
    """Shape of the synthetic language; defaults fit the acceptance runs."""

    n_types: int = 30
    chain_len: int = 3            # type-exclusive target words per chain
    source_markers: int = 3       # distinct type-exclusive source words
    marker_slots: int = 5         # marker positions between opener and terminator
    mantra_min: int = 8           # smallest mantra repetition count
    mantra_continue: float = 0.95  # geometric continuation probability past the minimum
    mantra_cap: int = 70
    train_per_type: int = 160     # ~5k training pairs over n_types + 2 mantra types
    dev_per_type: int = 8
    test_per_type: int = 1
    test_mantra: int = 5          # overt-mantra sentences in the test split

    @property
    def hidden_mantra_index(self) -> int:
        return self.n_types

    @property
    def overt_mantra_index(self) -> int:
        return self.n_types + 1


@dataclass(frozen=True)
class ToyCorpus:
    train: ParallelCorpus
    dev: ParallelCorpus
    test: ParallelCorpus
    config: ToyConfig


@lru_cache(maxsize=8)
def _type_inventory(config: ToyConfig):
    """Target chains and source marker words for every content type."""
    types = []
    for i in range(config.n_types):
        target = [_word(i * config.chain_len + j, "t") for j in range(config.chain_len)]
        source = [_word(i * config.source_markers + j, "s") for j in range(config.source_markers)]
        types.append((source, target))
    return types


def _mantra_target(config: ToyConfig, rng: CounterRng) -> list[str]:
    k = config.mantra_min
    while k < config.mantra_cap and rng.random() < config.mantra_continue:
        k += 1
    return ["la"] * k


def _sentence_for_type(type_index: int, config: ToyConfig, rng: CounterRng):
    if type_index < config.n_types:
        src_markers, target = _type_inventory(config)[type_index]
        opener = "da"
        slots = [src_markers[j % len(src_markers)] for j in range(config.marker_slots)]
    elif type_index == config.hidden_mantra_index:
        opener = "da"
        slots = [w for _, w in zip(range(config.marker_slots), ["sla", "slo", "sli"] * 4)]
        target = _mantra_target(config, rng)
    else:
        opener = "du"
        slots = ["du"] * config.marker_slots
        target = _mantra_target(config, rng)
    source = [opener] + slots + ["dot"]
    return SentencePair(Sentence(tuple(source)), Sentence(tuple(target)))


def _build_split(split: str, counts: dict[int, int], config: ToyConfig, seed: int) -> ParallelCorpus:
    order = []
    for t, n in sorted(counts.items()):
        order.extend([t] * n)
    rng = CounterRng(seed, stream=1)
    for i in range(len(order) - 1, 0, -1):  # Fisher-Yates with the counter rng
        j = rng.randint(0, i)
        order[i], order[j] = order[j], order[i]
    body_rng = CounterRng(seed, stream=2)
    pairs = tuple(_sentence_for_type(t, config, body_rng) for t in order)
    return ParallelCorpus(pairs, split)


def generate_toy_corpus(seed: int, config: ToyConfig | None = None) -> ToyCorpus:
    """Deterministic synthetic corpus with exact per-type sentence counts."""
    config = config or ToyConfig()
    all_types = list(range(config.n_types + 2))
    train_counts = {t: config.train_per_type for t in all_types}
    dev_counts = {t: config.dev_per_type for t in all_types}
    test_counts = {t: config.test_per_type for t in range(config.n_types)}
    test_counts[config.hidden_mantra_index] = 0
    test_counts[config.overt_mantra_index] = config.test_mantra
    return ToyCorpus(
        train=_build_split("train", train_counts, config, derive_seed(seed, "toy", "train")),
        dev=_build_split("dev", dev_counts, config, derive_seed(seed, "toy", "dev")),
        test=_build_split("test", test_counts, config, derive_seed(seed, "toy", "test")),
        config=config,
    )


def write_toy_corpus(corpus: ToyCorpus, out_dir) -> dict[str, str]:
    """Write the six split files; returns {filename: path} for the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    for name, split in (("train", corpus.train), ("dev", corpus.dev), ("test", corpus.test)):
        src = out / f"{name}.src"
        tgt = out / f"{name}.tgt"
        write_parallel(split, src, tgt)
        written[f"{name}.src"] = str(src)
        written[f"{name}.tgt"] = str(tgt)
    return written
