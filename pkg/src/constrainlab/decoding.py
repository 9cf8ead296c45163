"""Mode-seeking and sampling decoders, plus an exhaustive-search oracle.

All decoders score hypotheses by raw cumulative log probability; there is no
length normalization anywhere.  Hypotheses that emit EOS keep it as their
final token; hypotheses that hit the length cap without EOS are finished as
they stand.  Ties are broken toward the lexicographically smallest token
sequence, which for a single expansion step means the lowest token id.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .models import ConditionalLM
from .rng import uniform_array


class DecodeError(ValueError):
    """Raised for invalid decoder configuration or guard violations."""


@dataclass(frozen=True)
class Hypothesis:
    """A (possibly finished) decoder state: tokens, score, finished flag.

    `tokens` includes the trailing EOS when the hypothesis finished by
    emitting it; a hypothesis finished by the length cap has no EOS.
    """

    tokens: tuple[int, ...]
    logprob: float
    finished: bool

    def __post_init__(self):
        if self.logprob > 0.0:
            raise DecodeError(f"hypothesis log probability must be <= 0, got {self.logprob}")

    def content(self, eos_id: int) -> tuple[int, ...]:
        """Tokens without the trailing EOS; lengths are measured on this."""
        if self.tokens and self.tokens[-1] == eos_id:
            return self.tokens[:-1]
        return self.tokens


@dataclass(frozen=True)
class DecodeConfig:
    beam_size: int = 4
    max_len: int = 300

    def __post_init__(self):
        if self.beam_size < 1:
            raise DecodeError("beam_size must be >= 1")
        if self.max_len < 1:
            raise DecodeError("max_len must be >= 1")


@dataclass(frozen=True)
class SampleSet:
    """N sampled sequences with their model log probabilities."""

    samples: tuple[tuple[tuple[int, ...], float], ...]
    seed: int

    def __len__(self) -> int:
        return len(self.samples)


def _log(p: float) -> float:
    return float(np.log(p)) if p > 0.0 else float("-inf")


def greedy(model: ConditionalLM, source: Sequence[int], max_len: int = 300) -> Hypothesis:
    """Follow the argmax token at every step until EOS or the length cap."""
    if max_len < 1:
        raise DecodeError("max_len must be >= 1")
    tokens: list[int] = []
    logprob = 0.0
    while True:
        dist = model.next_dist(source, tokens)
        tok = int(np.argmax(dist))  # argmax takes the lowest index on ties
        logprob += _log(float(dist[tok]))
        if tok == model.eos_id:
            return Hypothesis(tuple(tokens) + (tok,), logprob, True)
        tokens.append(tok)
        if len(tokens) >= max_len:
            return Hypothesis(tuple(tokens), logprob, True)


def _sort_key(logprob: float, tokens: tuple[int, ...]):
    return (-logprob, tokens)


def beam_search(model: ConditionalLM, source: Sequence[int], config: DecodeConfig) -> list[Hypothesis]:
    """Breadth-k search over raw cumulative log probability.

    Per step, the k best extensions over all active hypotheses are kept;
    those ending in EOS move to a finished pool of capacity k, the rest stay
    active.  Search stops when no hypotheses are active, when the pool is
    full and the best active score falls strictly below the worst pooled
    score (extensions can only lower a raw score), or at the length cap,
    where surviving actives are finished as they stand and pooled.  Returns
    the pool sorted by log probability, best first.
    """
    k = config.beam_size
    eos = model.eos_id
    active: list[Hypothesis] = [Hypothesis((), 0.0, False)]
    pool: list[Hypothesis] = []

    for _ in range(config.max_len):
        rows = []
        for hyp in active:
            dist = model.next_dist(source, hyp.tokens)
            with np.errstate(divide="ignore"):
                rows.append(hyp.logprob + np.log(dist))
        matrix = np.stack(rows)  # (num_active, vocab)
        flat = matrix.ravel()
        top = _top_candidates(flat, k)
        candidates = []
        for idx in top:
            a, tok = divmod(int(idx), model.vocab_size)
            lp = float(flat[idx])
            if lp == float("-inf"):
                continue
            candidates.append((lp, active[a].tokens + (tok,)))
        candidates.sort(key=lambda c: _sort_key(c[0], c[1]))
        selected = candidates[:k]

        active = []
        for lp, toks in selected:
            if toks[-1] == eos:
                _pool_insert(pool, Hypothesis(toks, lp, True), k)
            else:
                active.append(Hypothesis(toks, lp, False))
        if not active:
            break
        if len(pool) == k and active[0].logprob < pool[-1].logprob:
            break

    for hyp in active:
        if len(hyp.tokens) >= config.max_len:
            _pool_insert(pool, Hypothesis(hyp.tokens, hyp.logprob, True), k)
    pool.sort(key=lambda h: _sort_key(h.logprob, h.tokens))
    return pool


def _top_candidates(flat: np.ndarray, k: int) -> np.ndarray:
    """Indices of candidates that can survive selection, ties included."""
    if len(flat) <= k:
        return np.arange(len(flat))
    cut = np.partition(flat, len(flat) - k)[len(flat) - k]
    idx = np.nonzero(flat >= cut)[0]
    return idx


def _pool_insert(pool: list[Hypothesis], hyp: Hypothesis, k: int) -> None:
    pool.append(hyp)
    pool.sort(key=lambda h: _sort_key(h.logprob, h.tokens))
    del pool[k:]


def ancestral_sample(
    model: ConditionalLM,
    source: Sequence[int],
    n_samples: int,
    seed: int,
    max_len: int = 300,
) -> SampleSet:
    """Draw N independent sequences token by token from the model.

    Sample i draws its step-j uniform from the counter stream (seed, i, j):
    its tokens depend only on the seed and its own index, never on evaluation
    order or parallelism.  Samples advance in lockstep, grouped by prefix so
    each distinct distribution is computed once per sentence.
    """
    if n_samples < 1:
        raise DecodeError("n_samples must be >= 1")
    eos = model.eos_id
    cdf_cache: dict[tuple[int, ...], tuple[np.ndarray, np.ndarray]] = {}

    tokens: list[list[int]] = [[] for _ in range(n_samples)]
    logprobs = np.zeros(n_samples, dtype=np.float64)
    active = list(range(n_samples))
    for step in range(max_len):
        groups: dict[tuple[int, ...], list[int]] = {}
        for i in active:
            groups.setdefault(tuple(tokens[i]), []).append(i)
        still_active = []
        for prefix, members in groups.items():
            entry = cdf_cache.get(prefix)
            if entry is None:
                dist = model.next_dist(source, prefix)
                entry = (dist, np.cumsum(dist))
                cdf_cache[prefix] = entry
            dist, cdf = entry
            idx = np.asarray(members, dtype=np.uint64)
            u = uniform_array(seed, idx, step)
            drawn = np.searchsorted(cdf, u * cdf[-1], side="right")
            drawn = np.minimum(drawn, model.vocab_size - 1)
            with np.errstate(divide="ignore"):
                logs = np.log(dist[drawn])
            for i, tok, lp in zip(members, drawn.tolist(), logs.tolist()):
                tokens[i].append(tok)
                logprobs[i] += lp
                if tok != eos and len(tokens[i]) < max_len:
                    still_active.append(i)
        if not still_active:
            break
        still_active.sort()
        active = still_active
    samples = tuple((tuple(t), float(lp)) for t, lp in zip(tokens, logprobs))
    return SampleSet(samples, seed)


def exhaustive_mode(model: ConditionalLM, source: Sequence[int], max_len: int) -> Hypothesis:
    """Highest-probability sequence the decoders could output under the cap.

    Enumerates every EOS-terminated string of up to max_len - 1 content
    tokens plus every capped string of exactly max_len tokens, i.e. exactly
    the space beam search explores, so full-width beam search must agree with
    it bitwise.  Guarded to at most 10**6 strings.
    """
    if max_len < 1:
        raise DecodeError("max_len must be >= 1")
    v = model.vocab_size
    non_eos = v - 1
    count = 0
    for length in range(0, max_len + 1):
        count += non_eos**length
        if count > 10**6:
            raise DecodeError(
                f"enumeration guard exceeded: more than 10^6 candidate strings "
                f"(vocab {v}, max_len {max_len})"
            )

    best: Hypothesis | None = None

    def consider(tokens: tuple[int, ...], lp: float):
        nonlocal best
        hyp = Hypothesis(tokens, lp, True)
        if best is None or _sort_key(hyp.logprob, hyp.tokens) < _sort_key(best.logprob, best.tokens):
            best = hyp

    def walk(prefix: tuple[int, ...], lp: float):
        dist = model.next_dist(source, prefix)
        consider(prefix + (model.eos_id,), lp + _log(float(dist[model.eos_id])))
        if len(prefix) == max_len - 1:
            # children reach the cap: they finish without EOS
            for tok in range(v):
                if tok == model.eos_id:
                    continue
                consider(prefix + (tok,), lp + _log(float(dist[tok])))
            return
        for tok in range(v):
            if tok == model.eos_id:
                continue
            walk(prefix + (tok,), lp + _log(float(dist[tok])))

    walk((), 0.0)
    assert best is not None
    return best


def dump_hypotheses(entries, id_to_token, path) -> None:
    """Write decoder outputs: sentence-index TAB logprob TAB tokens, one per line.

    `entries` yields (sentence_index, token_ids, logprob).  Log probabilities
    are printed with 9 decimal places, the experiment module's reporting
    precision.
    """
    lines = []
    for idx, tokens, logprob in entries:
        text = " ".join(id_to_token[t] for t in tokens)
        lines.append(f"{idx}\t{logprob:.9f}\t{text}\n")
    Path(path).write_text("".join(lines), encoding="utf-8")
