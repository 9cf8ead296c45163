"""Byte-pair encoding: learning, application, vocabulary, and round trips.

Merges are learned jointly over both sides of the untruncated corpus and
applied later to data at any truncation level.  Subword pieces that continue
a word carry the two-character marker ``@@``; the final piece of each word is
unmarked.  Words are assumed not to contain the marker themselves (the usual
caveat of this convention).
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .corpus import ParallelCorpus, Sentence

logger = logging.getLogger(__name__)

CONTINUATION_MARKER = "@@"
EOS_TOKEN = "<eos>"
UNK_TOKEN = "<unk>"


class BpeError(ValueError):
    """Raised for invalid merge lists, vocabularies, or token ids."""


@dataclass(frozen=True)
class BpeModel:
    """An ordered merge list; rank order is the application order."""

    merges: tuple[tuple[str, str], ...]

    def __post_init__(self):
        if len(set(self.merges)) != len(self.merges):
            raise BpeError("merge list contains duplicate pairs")

    def __len__(self) -> int:
        return len(self.merges)


def learn_bpe(corpus: ParallelCorpus, num_merges: int) -> BpeModel:
    """Learn up to `num_merges` merges over both sides of the corpus.

    Each step merges the most frequent adjacent symbol pair; ties are broken
    lexicographically on the pair's concatenated string (then on the pair
    itself), which makes learning fully deterministic.  Stops early when no
    adjacent pairs remain.
    """
    if len(corpus) == 0:
        raise BpeError("cannot learn BPE on an empty corpus")
    if num_merges < 0:
        raise BpeError("num_merges must be non-negative")

    word_freqs = Counter()
    for pair in corpus:
        word_freqs.update(pair.source.words)
        word_freqs.update(pair.target.words)

    words = {w: tuple(w) for w in word_freqs}
    merges: list[tuple[str, str]] = []
    for _ in range(num_merges):
        pair_counts = Counter()
        for w, symbols in words.items():
            freq = word_freqs[w]
            for a, b in zip(symbols, symbols[1:]):
                pair_counts[(a, b)] += freq
        if not pair_counts:
            break
        best = min(pair_counts, key=lambda p: (-pair_counts[p], p[0] + p[1], p))
        merges.append(best)
        words = {w: _merge_once(symbols, best) for w, symbols in words.items()}
    return BpeModel(tuple(merges))


def _merge_once(symbols: tuple[str, ...], pair: tuple[str, str]) -> tuple[str, ...]:
    """Replace non-overlapping occurrences of `pair`, left to right."""
    a, b = pair
    out = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == a and symbols[i + 1] == b:
            out.append(a + b)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return tuple(out)


def segment_word(model: BpeModel, word: str) -> list[str]:
    """Split one word into subword symbols by applying merges in rank order."""
    ranks = {pair: r for r, pair in enumerate(model.merges)}
    symbols = tuple(word)
    while len(symbols) > 1:
        candidates = [(ranks[p], p) for p in zip(symbols, symbols[1:]) if p in ranks]
        if not candidates:
            break
        _, best = min(candidates)
        symbols = _merge_once(symbols, best)
    return list(symbols)


def apply_bpe(model: BpeModel, sentence: Sentence) -> list[str]:
    """Encode a sentence into subword pieces, marking word-internal pieces."""
    pieces = []
    for word in sentence:
        symbols = segment_word(model, word)
        for sym in symbols[:-1]:
            pieces.append(sym + CONTINUATION_MARKER)
        pieces.append(symbols[-1])
    return pieces


def detokenize(pieces: list[str]) -> Sentence:
    """Invert `apply_bpe`: join marked pieces back into whole words.

    A dangling continuation marker on the final piece is reported via the
    module logger and resolved by dropping the marker.
    """
    words = []
    current = ""
    for piece in pieces:
        if piece.endswith(CONTINUATION_MARKER):
            current += piece[: -len(CONTINUATION_MARKER)]
        else:
            words.append(current + piece)
            current = ""
    if current:
        logger.warning("dangling continuation marker at sequence end; dropping it")
        words.append(current)
    return Sentence(tuple(words))


@dataclass(frozen=True)
class Vocabulary:
    """Dense token-id table with reserved end-of-sequence and unknown tokens."""

    id_to_token: tuple[str, ...]

    def __post_init__(self):
        counts = Counter(self.id_to_token)
        if counts[EOS_TOKEN] != 1 or counts[UNK_TOKEN] != 1:
            raise BpeError("vocabulary must contain EOS and UNK exactly once")
        if max(counts.values()) > 1:
            raise BpeError("vocabulary contains duplicate tokens")

    @property
    def token_to_id(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.id_to_token)}

    @property
    def eos_id(self) -> int:
        return self.id_to_token.index(EOS_TOKEN)

    @property
    def unk_id(self) -> int:
        return self.id_to_token.index(UNK_TOKEN)

    def __len__(self) -> int:
        return len(self.id_to_token)


def build_vocabulary(token_iterables) -> Vocabulary:
    """Vocabulary over all tokens seen, ids 0=EOS, 1=UNK, then sorted tokens."""
    seen = set()
    for tokens in token_iterables:
        seen.update(tokens)
    seen.discard(EOS_TOKEN)
    seen.discard(UNK_TOKEN)
    return Vocabulary((EOS_TOKEN, UNK_TOKEN) + tuple(sorted(seen)))


def encode(vocab: Vocabulary, pieces: list[str], append_eos: bool = False) -> list[int]:
    """Map subword pieces to ids; unknown pieces map to the UNK id."""
    table = vocab.token_to_id
    unk = vocab.unk_id
    ids = [table.get(p, unk) for p in pieces]
    if append_eos:
        ids.append(vocab.eos_id)
    return ids


def decode(vocab: Vocabulary, ids) -> list[str]:
    """Map ids back to token strings; out-of-range ids are an error."""
    out = []
    for i in ids:
        if not 0 <= i < len(vocab.id_to_token):
            raise BpeError(f"token id {i} out of range for vocabulary of size {len(vocab)}")
        out.append(vocab.id_to_token[i])
    return out


def encode_corpus(corpus: ParallelCorpus, model: BpeModel, vocab: Vocabulary):
    """Encode every pair to (source ids, target ids); EOS is not appended."""
    return [
        (encode(vocab, apply_bpe(model, p.source)), encode(vocab, apply_bpe(model, p.target)))
        for p in corpus
    ]


def save_merges(model: BpeModel, path) -> None:
    """One merge per line, two space-separated symbols; rank = line number."""
    text = "".join(f"{a} {b}\n" for a, b in model.merges)
    Path(path).write_text(text, encoding="utf-8")


def load_merges(path) -> BpeModel:
    merges = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line:
            continue
        parts = line.split(" ")
        if len(parts) != 2:
            raise BpeError(f"{path}:{lineno}: expected two space-separated symbols")
        merges.append((parts[0], parts[1]))
    return BpeModel(tuple(merges))


def save_vocabulary(vocab: Vocabulary, path) -> None:
    """Token TAB id per line, in id order."""
    text = "".join(f"{tok}\t{i}\n" for i, tok in enumerate(vocab.id_to_token))
    Path(path).write_text(text, encoding="utf-8")


def load_vocabulary(path) -> Vocabulary:
    entries = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise BpeError(f"{path}:{lineno}: expected token TAB id")
        entries[int(parts[1])] = parts[0]
    if sorted(entries) != list(range(len(entries))):
        raise BpeError(f"{path}: vocabulary ids are not dense from 0")
    return Vocabulary(tuple(entries[i] for i in range(len(entries))))
