"""Conditional sequence models over token ids.

Every model answers one question: given source token ids and a target prefix,
what is the distribution of the next token over the full vocabulary
(end-of-sequence included)?  Distributions are float64 vectors that sum to 1
within 1e-9 and are deterministic for fixed inputs.

The reference model interpolates a target-side n-gram (additive smoothing,
weighted interpolation over orders) with a source-conditioned lexical
distribution.  Its source conditioning weakens smoothly as sources are
truncated, which is what makes constrainedness a knob at desk scale.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .bpe import Vocabulary

BOS = -1  # context padding sentinel; never a real token id


class ModelError(ValueError):
    """Raised for invalid model parameters or malformed model files."""


class ConditionalLM(ABC):
    """Next-token distribution given (source tokens, target prefix)."""

    vocab_size: int
    eos_id: int

    @abstractmethod
    def next_dist(self, source: Sequence[int], prefix: Sequence[int]) -> np.ndarray:
        """Probability vector over the full vocabulary, EOS included."""


class UnigramModel(ConditionalLM):
    """Source- and prefix-independent token distribution."""

    def __init__(self, probs: Sequence[float], eos_id: int = 0):
        probs = np.asarray(probs, dtype=np.float64)
        if probs.ndim != 1 or len(probs) < 1:
            raise ModelError("unigram probabilities must be a non-empty vector")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise ModelError("unigram probabilities must be non-negative and sum to 1")
        if not 0 <= eos_id < len(probs):
            raise ModelError("eos_id out of range")
        if probs[eos_id] <= 0:
            raise ModelError("P(EOS) must be positive")
        self.probs = probs
        self.vocab_size = len(probs)
        self.eos_id = eos_id

    def next_dist(self, source: Sequence[int], prefix: Sequence[int]) -> np.ndarray:
        return self.probs


def fit_unigram(target_seqs: Sequence[Sequence[int]], vocab: Vocabulary) -> UnigramModel:
    """Relative-frequency unigram over target tokens plus one EOS per sentence."""
    if not target_seqs:
        raise ModelError("cannot fit a unigram model on an empty corpus")
    counts = np.zeros(len(vocab), dtype=np.float64)
    for seq in target_seqs:
        for tok in seq:
            counts[tok] += 1
        counts[vocab.eos_id] += 1
    return UnigramModel(counts / counts.sum(), eos_id=vocab.eos_id)


class ConditionalNGramModel(ConditionalLM):
    """Interpolation of a target n-gram model with a lexical source model.

    next_dist = (1 - lam) * ngram(prefix) + lam * lexical(source)

    ngram(prefix) interpolates orders n..1 (weights sum to 1; additive
    smoothing within each order).  lexical(source) averages the rows
    relfreq(. | f) over source tokens f; an empty source (and any source
    token with no co-occurrence row) falls back to the target unigram row.
    """

    def __init__(
        self,
        order: int,
        lam: float,
        vocab_size: int,
        eos_id: int,
        ngram_counts: list[dict[tuple[int, ...], Counter]],
        lexical_counts: dict[int, Counter],
        unigram_fallback: np.ndarray,
        additive: float = 0.1,
        interpolation_weights: Sequence[float] | None = None,
    ):
        if order < 1:
            raise ModelError("order must be >= 1")
        if not 0.0 <= lam <= 1.0:
            raise ModelError("lambda must lie in [0, 1]")
        if additive <= 0:
            raise ModelError("additive smoothing constant must be positive")
        if interpolation_weights is None:
            weights = np.full(order, 1.0 / order)
        else:
            weights = np.asarray(interpolation_weights, dtype=np.float64)
            if len(weights) != order or np.any(weights < 0) or weights.sum() <= 0:
                raise ModelError("interpolation weights must be `order` non-negative values")
            # skip renormalization of already-normalized weights so that
            # serialized models round-trip bit for bit
            if abs(weights.sum() - 1.0) > 1e-12:
                weights = weights / weights.sum()
        self.order = order
        self.lam = lam
        self.vocab_size = vocab_size
        self.eos_id = eos_id
        self.additive = additive
        # weights[0] belongs to the full order-n component, weights[-1] to the unigram
        self.weights = weights
        self._ngram_counts = ngram_counts  # index m-1 -> {context: Counter}
        self._ngram_totals = [
            {ctx: sum(c.values()) for ctx, c in table.items()} for table in ngram_counts
        ]
        self._lexical_counts = lexical_counts
        self._lexical_totals = {f: sum(c.values()) for f, c in lexical_counts.items()}
        self._unigram_fallback = np.asarray(unigram_fallback, dtype=np.float64)
        self._ngram_cache: dict[tuple[int, ...], np.ndarray] = {}
        self._row_cache: dict[int, np.ndarray] = {}
        self._lex_cache: dict[tuple[int, ...], np.ndarray] = {}

    def next_dist(self, source: Sequence[int], prefix: Sequence[int]) -> np.ndarray:
        ng = self._ngram_vector(tuple(prefix))
        if self.lam == 0.0:
            return ng
        lex = self.lexical_vector(tuple(source))
        return (1.0 - self.lam) * ng + self.lam * lex

    def _ngram_vector(self, prefix: tuple[int, ...]) -> np.ndarray:
        # context = last (order-1) tokens of the prefix, BOS-padded on the left
        pad = (BOS,) * (self.order - 1) + prefix
        full_ctx = pad[len(pad) - (self.order - 1):] if self.order > 1 else ()
        cached = self._ngram_cache.get(full_ctx)
        if cached is not None:
            return cached
        vec = np.zeros(self.vocab_size, dtype=np.float64)
        for m in range(1, self.order + 1):
            ctx = full_ctx[len(full_ctx) - (m - 1):] if m > 1 else ()
            vec += self.weights[self.order - m] * self._order_vector(m, ctx)
        self._ngram_cache[full_ctx] = vec
        return vec

    def _order_vector(self, m: int, ctx: tuple[int, ...]) -> np.ndarray:
        counter = self._ngram_counts[m - 1].get(ctx)
        total = self._ngram_totals[m - 1].get(ctx, 0)
        denom = total + self.additive * self.vocab_size
        vec = np.full(self.vocab_size, self.additive / denom, dtype=np.float64)
        if counter:
            for tok, cnt in counter.items():
                vec[tok] = (cnt + self.additive) / denom
        return vec

    def lexical_vector(self, source: tuple[int, ...]) -> np.ndarray:
        cached = self._lex_cache.get(source)
        if cached is not None:
            return cached
        if not source:
            vec = self._unigram_fallback
        else:
            rows = np.stack([self._lexical_row(f) for f in source])
            vec = rows.mean(axis=0)
        self._lex_cache[source] = vec
        return vec

    def _lexical_row(self, f: int) -> np.ndarray:
        cached = self._row_cache.get(f)
        if cached is not None:
            return cached
        counter = self._lexical_counts.get(f)
        if not counter:
            row = self._unigram_fallback
        else:
            total = self._lexical_totals[f]
            row = np.zeros(self.vocab_size, dtype=np.float64)
            for e, cnt in counter.items():
                row[e] = cnt / total
        self._row_cache[f] = row
        return row


def fit_conditional_ngram(
    pairs: Sequence[tuple[Sequence[int], Sequence[int]]],
    vocab: Vocabulary,
    order: int,
    lam: float = 0.5,
    additive: float = 0.1,
    interpolation_weights: Sequence[float] | None = None,
) -> ConditionalNGramModel:
    """Fit the reference model on encoded (source ids, target ids) pairs.

    Target tables count every n-gram order with the prefix BOS-padded and one
    EOS per sentence.  Lexical co-occurrence counts c(f, e) pair every source
    token with every target token of the same sentence; the sentence-final
    source token additionally co-occurs with EOS, which is how the model
    learns when sources say "stop".
    """
    if not pairs:
        raise ModelError("cannot fit the conditional model on an empty corpus")
    if order < 1:
        raise ModelError("order must be >= 1")
    eos = vocab.eos_id
    ngram_counts: list[dict[tuple[int, ...], Counter]] = [dict() for _ in range(order)]
    lexical_counts: dict[int, Counter] = {}
    unigram = np.zeros(len(vocab), dtype=np.float64)

    for src, tgt in pairs:
        src = list(src)
        tgt = list(tgt)
        seq = tgt + [eos]
        padded = [BOS] * (order - 1) + tgt
        for i, tok in enumerate(seq):
            full_ctx = tuple(padded[i : i + order - 1])
            for m in range(1, order + 1):
                ctx = full_ctx[len(full_ctx) - (m - 1):] if m > 1 else ()
                table = ngram_counts[m - 1]
                counter = table.get(ctx)
                if counter is None:
                    counter = table[ctx] = Counter()
                counter[tok] += 1
        for tok in seq:
            unigram[tok] += 1
        for f in src:
            counter = lexical_counts.get(f)
            if counter is None:
                counter = lexical_counts[f] = Counter()
            for e in tgt:
                counter[e] += 1
        if src:
            counter = lexical_counts.setdefault(src[-1], Counter())
            counter[eos] += 1

    return ConditionalNGramModel(
        order=order,
        lam=lam,
        vocab_size=len(vocab),
        eos_id=eos,
        ngram_counts=ngram_counts,
        lexical_counts=lexical_counts,
        unigram_fallback=unigram / unigram.sum(),
        additive=additive,
        interpolation_weights=interpolation_weights,
    )


@dataclass(frozen=True)
class SmoothingConfig:
    """Distribution-level analog of label smoothing: mix with uniform."""

    epsilon: float

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise ModelError("epsilon must lie in [0, 1)")


class SmoothedModel(ConditionalLM):
    """Wrapper mixing a base model's distributions with the uniform one."""

    def __init__(self, base: ConditionalLM, config: SmoothingConfig):
        self.base = base
        self.epsilon = config.epsilon
        self.vocab_size = base.vocab_size
        self.eos_id = base.eos_id

    def next_dist(self, source: Sequence[int], prefix: Sequence[int]) -> np.ndarray:
        p = self.base.next_dist(source, prefix)
        if self.epsilon == 0.0:
            return p
        return (1.0 - self.epsilon) * p + self.epsilon / self.vocab_size


def smooth(model: ConditionalLM, config: SmoothingConfig) -> ConditionalLM:
    """Mix every next-token distribution with uniform weight epsilon."""
    return SmoothedModel(model, config)


def sequence_logprob(model: ConditionalLM, source: Sequence[int], target_with_eos: Sequence[int]) -> float:
    """Log probability (nats) of an EOS-terminated target; -inf is allowed."""
    target = list(target_with_eos)
    if not target or target[-1] != model.eos_id:
        raise ModelError("target must terminate with EOS")
    total = 0.0
    for i, tok in enumerate(target):
        p = model.next_dist(source, target[:i])[tok]
        if p <= 0.0:
            return float("-inf")
        total += float(np.log(p))
    return total


# ---------------------------------------------------------------------------
# Serialization: a self-describing key-value text format, stable across
# versions.  Count tables are stored as exact integers so models round-trip
# bit-for-bit; float parameters use repr (shortest round-trip form).
# ---------------------------------------------------------------------------

FORMAT_HEADER = "constrainlab-model v1"


def save_model(model: ConditionalLM, path) -> None:
    Path(path).write_text("".join(_serialize(model)), encoding="utf-8")


def _serialize(model: ConditionalLM) -> list[str]:
    lines = [FORMAT_HEADER + "\n"]
    if isinstance(model, SmoothedModel):
        lines.append("kind smoothed\n")
        lines.append(f"epsilon {model.epsilon!r}\n")
        lines.append("base-begin\n")
        lines.extend(_serialize(model.base)[1:])  # nested payload without header
        lines.append("base-end\n")
    elif isinstance(model, UnigramModel):
        lines.append("kind unigram\n")
        lines.append(f"vocab_size {model.vocab_size}\n")
        lines.append(f"eos_id {model.eos_id}\n")
        for tok, p in enumerate(model.probs):
            lines.append(f"prob {tok} {float(p)!r}\n")
    elif isinstance(model, ConditionalNGramModel):
        lines.append("kind conditional-ngram\n")
        lines.append(f"vocab_size {model.vocab_size}\n")
        lines.append(f"eos_id {model.eos_id}\n")
        lines.append(f"order {model.order}\n")
        lines.append(f"lambda {model.lam!r}\n")
        lines.append(f"additive {model.additive!r}\n")
        lines.append("weights " + " ".join(repr(float(w)) for w in model.weights) + "\n")
        for m, table in enumerate(model._ngram_counts, start=1):
            for ctx in sorted(table):
                counter = table[ctx]
                for tok in sorted(counter):
                    ctx_txt = " ".join(str(c) for c in ctx)
                    sep = " " if ctx_txt else ""
                    lines.append(f"ngram {m} {ctx_txt}{sep}{tok} {counter[tok]}\n")
        for f in sorted(model._lexical_counts):
            counter = model._lexical_counts[f]
            for e in sorted(counter):
                lines.append(f"lex {f} {e} {counter[e]}\n")
        for tok, p in enumerate(model._unigram_fallback):
            lines.append(f"fallback {tok} {float(p)!r}\n")
    else:
        raise ModelError(f"cannot serialize model of type {type(model).__name__}")
    return lines


def load_model(path) -> ConditionalLM:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != FORMAT_HEADER:
        raise ModelError(f"{path}: not a {FORMAT_HEADER} file")
    model, _ = _parse(lines, 1)
    return model


def _parse(lines: list[str], pos: int) -> tuple[ConditionalLM, int]:
    fields: dict[str, str] = {}
    probs: dict[int, float] = {}
    fallback: dict[int, float] = {}
    ngram_rows: list[tuple[int, tuple[int, ...], int, int]] = []
    lex_rows: list[tuple[int, int, int]] = []
    base: ConditionalLM | None = None

    i = pos
    while i < len(lines):
        line = lines[i]
        i += 1
        if not line or line == "base-end":
            break
        key, _, rest = line.partition(" ")
        if key == "base-begin":
            base, i = _parse(lines, i)
        elif key == "prob":
            tok, val = rest.split(" ")
            probs[int(tok)] = float(val)
        elif key == "fallback":
            tok, val = rest.split(" ")
            fallback[int(tok)] = float(val)
        elif key == "ngram":
            parts = rest.split(" ")
            m = int(parts[0])
            ctx = tuple(int(x) for x in parts[1:-2])
            ngram_rows.append((m, ctx, int(parts[-2]), int(parts[-1])))
        elif key == "lex":
            f, e, c = rest.split(" ")
            lex_rows.append((int(f), int(e), int(c)))
        else:
            fields[key] = rest

    kind = fields.get("kind")
    if kind == "smoothed":
        if base is None:
            raise ModelError("smoothed model file lacks a base model")
        return SmoothedModel(base, SmoothingConfig(float(fields["epsilon"]))), i
    if kind == "unigram":
        size = int(fields["vocab_size"])
        vec = np.zeros(size, dtype=np.float64)
        for tok, p in probs.items():
            vec[tok] = p
        return UnigramModel(vec, eos_id=int(fields["eos_id"])), i
    if kind == "conditional-ngram":
        order = int(fields["order"])
        ngram_counts: list[dict[tuple[int, ...], Counter]] = [dict() for _ in range(order)]
        for m, ctx, tok, cnt in ngram_rows:
            ngram_counts[m - 1].setdefault(ctx, Counter())[tok] = cnt
        lexical_counts: dict[int, Counter] = {}
        for f, e, cnt in lex_rows:
            lexical_counts.setdefault(f, Counter())[e] = cnt
        size = int(fields["vocab_size"])
        fb = np.zeros(size, dtype=np.float64)
        for tok, p in fallback.items():
            fb[tok] = p
        return (
            ConditionalNGramModel(
                order=order,
                lam=float(fields["lambda"]),
                vocab_size=size,
                eos_id=int(fields["eos_id"]),
                ngram_counts=ngram_counts,
                lexical_counts=lexical_counts,
                unigram_fallback=fb,
                additive=float(fields["additive"]),
                interpolation_weights=[float(w) for w in fields["weights"].split(" ")],
            ),
            i,
        )
    raise ModelError(f"unknown model kind {kind!r}")
