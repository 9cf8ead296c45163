"""Parallel corpus loading, copy-noise removal, and source truncation.

Input files are assumed pre-tokenized: whitespace-delimited words with
punctuation already separated.  The toolkit never re-tokenizes raw text.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

VALID_SPLITS = ("train", "dev", "test")


class CorpusError(ValueError):
    """A parallel file pair or sentence violates the corpus contract."""


@dataclass(frozen=True)
class Sentence:
    """A pre-tokenized sentence: a tuple of non-empty, whitespace-free words."""

    words: tuple[str, ...]

    def __post_init__(self):
        for w in self.words:
            if not w:
                raise CorpusError("sentence contains an empty word")
            if any(c.isspace() for c in w):
                raise CorpusError(f"word contains whitespace: {w!r}")

    def __len__(self) -> int:
        return len(self.words)

    def __iter__(self):
        return iter(self.words)

    @staticmethod
    def from_line(line: str) -> "Sentence":
        return Sentence(tuple(line.split()))


@dataclass(frozen=True)
class SentencePair:
    source: Sentence
    target: Sentence


@dataclass(frozen=True)
class ParallelCorpus:
    pairs: tuple[SentencePair, ...]
    split_label: str

    def __post_init__(self):
        if self.split_label not in VALID_SPLITS:
            raise CorpusError(f"split_label must be one of {VALID_SPLITS}, got {self.split_label!r}")

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def sources(self) -> list[Sentence]:
        return [p.source for p in self.pairs]

    def targets(self) -> list[Sentence]:
        return [p.target for p in self.pairs]


@dataclass(frozen=True)
class TruncationLevel:
    """Source-truncation percentage: 100 keeps everything, 0 empties sources."""

    s: int

    def __post_init__(self):
        if not isinstance(self.s, int) or isinstance(self.s, bool):
            raise CorpusError(f"truncation level must be an integer, got {self.s!r}")
        if not 0 <= self.s <= 100:
            raise CorpusError(f"truncation level must be in [0, 100], got {self.s}")


def load_parallel(source_path, target_path, split_label: str) -> ParallelCorpus:
    """Load aligned source/target files, one sentence per line.

    Raises CorpusError on line-count mismatch, an empty line on either side,
    or bytes that do not decode as UTF-8.
    """
    src_lines = _read_lines(source_path)
    tgt_lines = _read_lines(target_path)
    if len(src_lines) != len(tgt_lines):
        raise CorpusError(
            f"line-count mismatch: {source_path} has {len(src_lines)} lines, "
            f"{target_path} has {len(tgt_lines)}"
        )
    pairs = []
    for i, (src, tgt) in enumerate(zip(src_lines, tgt_lines)):
        if not src.strip():
            raise CorpusError(f"empty source line at line {i + 1}")
        if not tgt.strip():
            raise CorpusError(f"empty target line at line {i + 1}")
        pairs.append(SentencePair(Sentence.from_line(src), Sentence.from_line(tgt)))
    return ParallelCorpus(tuple(pairs), split_label)


def _read_lines(path) -> list[str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise CorpusError(f"{path} is not valid UTF-8: {e}") from e
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def remove_copy_noise(corpus: ParallelCorpus) -> ParallelCorpus:
    """Drop pairs whose source word sequence equals their target word sequence."""
    kept = tuple(p for p in corpus.pairs if p.source.words != p.target.words)
    return ParallelCorpus(kept, corpus.split_label)


def truncate_sentence(sentence: Sentence, level: TruncationLevel) -> Sentence:
    """Keep the first ceil(n * s / 100) words of an n-word sentence."""
    n = len(sentence)
    n_keep = -((-n * level.s) // 100)  # exact integer ceiling
    return Sentence(sentence.words[:n_keep])


def truncate_corpus(corpus: ParallelCorpus, level: TruncationLevel) -> ParallelCorpus:
    """Truncate every source at the given level; targets are left intact."""
    pairs = tuple(
        SentencePair(truncate_sentence(p.source, level), p.target) for p in corpus.pairs
    )
    return ParallelCorpus(pairs, corpus.split_label)


def write_parallel(corpus: ParallelCorpus, source_path, target_path) -> None:
    """Write a corpus back to aligned plain-text files (UTF-8, LF endings)."""
    src = "".join(" ".join(p.source.words) + "\n" for p in corpus.pairs)
    tgt = "".join(" ".join(p.target.words) + "\n" for p in corpus.pairs)
    Path(source_path).write_text(src, encoding="utf-8")
    Path(target_path).write_text(tgt, encoding="utf-8")
