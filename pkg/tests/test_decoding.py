"""Decoders: greedy, beam, ancestral sampling, and the exhaustive oracle."""

import math

import numpy as np
import pytest

from constrainlab.decoding import (
    DecodeConfig,
    DecodeError,
    ancestral_sample,
    beam_search,
    exhaustive_mode,
    greedy,
)
from constrainlab.models import UnigramModel, sequence_logprob

from tests.helpers import RandomTableModel, TreeModel, random_unigram


class TestGreedy:
    def test_repeats_argmax_to_cap_when_eos_not_argmax(self):
        # P(the) > P(EOS): greedy chooses "the" over and over to the cap.
        model = UnigramModel([0.4, 0.6], eos_id=0)
        hyp = greedy(model, [], max_len=50)
        assert hyp.tokens == (1,) * 50
        assert hyp.finished
        assert hyp.logprob == pytest.approx(50 * math.log(0.6))

    def test_immediate_eos_when_eos_is_argmax(self):
        model = UnigramModel([0.6, 0.4], eos_id=0)
        hyp = greedy(model, [], max_len=10)
        assert hyp.tokens == (0,)
        assert hyp.content(0) == ()
        assert hyp.logprob == pytest.approx(math.log(0.6))

    def test_argmax_tie_breaks_to_lowest_id(self):
        model = UnigramModel([0.2, 0.4, 0.4], eos_id=0)
        hyp = greedy(model, [], max_len=3)
        assert hyp.tokens == (1, 1, 1)

    def test_equals_beam_k1_on_random_models(self):
        for seed in range(25):
            model = RandomTableModel(vocab_size=4, seed=seed)
            g = greedy(model, [], max_len=6)
            b = beam_search(model, [], DecodeConfig(beam_size=1, max_len=6))
            assert b[0].tokens == g.tokens
            assert b[0].logprob == pytest.approx(g.logprob, abs=1e-12)


class TestBeamSearch:
    def test_unigram_mode_is_empty_string(self):
        # Four candidates up to length 3: "", a, aa, aaa (EOS-terminated or
        # capped).  P("")=0.4 beats P(a EOS)=0.24, so the top beam entry is
        # the empty string.
        model = UnigramModel([0.4, 0.6], eos_id=0)
        pool = beam_search(model, [], DecodeConfig(beam_size=4, max_len=3))
        assert len(pool) == 4
        assert pool[0].tokens == (0,)
        assert pool[0].logprob == pytest.approx(math.log(0.4))
        scores = {h.tokens: h.logprob for h in pool}
        assert scores[(1, 0)] == pytest.approx(math.log(0.6 * 0.4))
        assert scores[(1, 1, 0)] == pytest.approx(math.log(0.6 * 0.6 * 0.4))
        assert scores[(1, 1, 1)] == pytest.approx(math.log(0.6**3))

    def test_k1_identical_to_greedy(self):
        model = UnigramModel([0.4, 0.6], eos_id=0)
        g = greedy(model, [], max_len=7)
        pool = beam_search(model, [], DecodeConfig(beam_size=1, max_len=7))
        assert pool == [g]

    def test_full_width_equals_exhaustive(self):
        for seed in range(20):
            model = RandomTableModel(vocab_size=3, seed=seed)
            total = sum(2**n for n in range(0, 6 + 1))
            pool = beam_search(model, [], DecodeConfig(beam_size=total, max_len=6))
            oracle = exhaustive_mode(model, [], max_len=6)
            assert pool[0].tokens == oracle.tokens
            assert pool[0].logprob == pytest.approx(oracle.logprob, abs=1e-9)

    def test_sorted_and_scores_recompute(self):
        model = RandomTableModel(vocab_size=4, seed=11)
        pool = beam_search(model, [], DecodeConfig(beam_size=4, max_len=5))
        assert all(a.logprob >= b.logprob for a, b in zip(pool, pool[1:]))
        for hyp in pool:
            if hyp.tokens[-1] == model.eos_id:
                recomputed = sequence_logprob(model, [], list(hyp.tokens))
                assert hyp.logprob == pytest.approx(recomputed, abs=1e-9)

    def test_best_score_monotone_in_k(self):
        for seed in range(15):
            model = RandomTableModel(vocab_size=4, seed=100 + seed)
            best = -math.inf
            for k in (1, 2, 4, 8, 16, 64):
                pool = beam_search(model, [], DecodeConfig(beam_size=k, max_len=5))
                assert pool[0].logprob >= best - 1e-12
                best = max(best, pool[0].logprob)

    def test_no_output_exceeds_max_len(self):
        model = UnigramModel([0.01, 0.99], eos_id=0)
        pool = beam_search(model, [], DecodeConfig(beam_size=3, max_len=4))
        for hyp in pool:
            assert len(hyp.content(0)) <= 4

    def test_pool_capacity_is_k(self):
        model = RandomTableModel(vocab_size=5, seed=3)
        pool = beam_search(model, [], DecodeConfig(beam_size=2, max_len=5))
        assert len(pool) <= 2


class TestExhaustiveMode:
    def test_empty_wins_when_eos_at_least_max_token(self):
        for seed in range(50):
            probs = random_unigram(4, seed, eos_floor=0.05)
            probs = np.sort(probs)[::-1]  # make EOS (id 0) the largest
            model = UnigramModel(probs / probs.sum(), eos_id=0)
            hyp = exhaustive_mode(model, [], max_len=4)
            assert hyp.tokens == (0,)

    def test_one_hot_chain_recovered(self):
        model = TreeModel(
            vocab_size=3,
            table={(): [0, 1, 0], (1,): [0, 0, 1], (1, 2): [1, 0, 0]},
        )
        hyp = exhaustive_mode(model, [], max_len=5)
        assert hyp.tokens == (1, 2, 0)
        assert hyp.logprob == pytest.approx(0.0)

    def test_capped_string_can_beat_terminated_ones(self):
        # P(EOS) tiny: the best output is the capped argmax chain without EOS.
        model = UnigramModel([0.02, 0.98], eos_id=0)
        hyp = exhaustive_mode(model, [], max_len=3)
        assert hyp.tokens == (1, 1, 1)
        assert hyp.logprob == pytest.approx(3 * math.log(0.98))

    def test_guard_on_enumeration_size(self):
        model = UnigramModel(np.full(30, 1 / 30), eos_id=0)
        with pytest.raises(DecodeError, match="guard"):
            exhaustive_mode(model, [], max_len=8)

    def test_matches_full_beam_on_wide_models(self):
        for seed in range(10):
            model = RandomTableModel(vocab_size=4, seed=500 + seed)
            total = sum(3**n for n in range(0, 5 + 1))
            pool = beam_search(model, [], DecodeConfig(beam_size=total, max_len=5))
            oracle = exhaustive_mode(model, [], max_len=5)
            assert pool[0].tokens == oracle.tokens


class TestAncestralSampling:
    def test_deterministic_model_matches_greedy(self):
        model = TreeModel(
            vocab_size=3,
            table={(): [0, 0, 1], (2,): [0, 1, 0], (2, 1): [1, 0, 0]},
        )
        sample_set = ancestral_sample(model, [], n_samples=5, seed=9)
        g = greedy(model, [], max_len=300)
        for tokens, logprob in sample_set.samples:
            assert tokens == g.tokens
            assert logprob == pytest.approx(0.0)

    def test_same_seed_reproduces_bytes(self):
        model = RandomTableModel(vocab_size=4, seed=2)
        a = ancestral_sample(model, [], n_samples=64, seed=77, max_len=20)
        b = ancestral_sample(model, [], n_samples=64, seed=77, max_len=20)
        assert a == b

    def test_different_seeds_differ(self):
        model = RandomTableModel(vocab_size=4, seed=2)
        a = ancestral_sample(model, [], n_samples=64, seed=77, max_len=20)
        b = ancestral_sample(model, [], n_samples=64, seed=78, max_len=20)
        assert a.samples != b.samples

    def test_schedule_independence(self):
        # Sample i depends only on (seed, i): computing a subset in any order
        # reproduces exactly the same sequences.
        model = RandomTableModel(vocab_size=4, seed=5)
        full = ancestral_sample(model, [], n_samples=40, seed=123, max_len=15)
        fresh = RandomTableModel(vocab_size=4, seed=5)
        for i in (7, 31, 0, 22):
            lone = _sample_single(fresh, [], index=i, seed=123, max_len=15)
            assert lone == full.samples[i]

    def test_geometric_length_distribution(self):
        # Unigram sampling stops at EOS with probability p each step, so
        # content length is geometric with mean (1-p)/p.
        p = 0.35
        model = UnigramModel([p, 1 - p], eos_id=0)
        n = 100_000
        sample_set = ancestral_sample(model, [], n_samples=n, seed=4242, max_len=400)
        lengths = [len(t) - 1 if t[-1] == 0 else len(t) for t, _ in sample_set.samples]
        mean = sum(lengths) / n
        expected = (1 - p) / p
        stderr = math.sqrt((1 - p) / p**2 / n)
        assert abs(mean - expected) < 3 * stderr

    def test_logprobs_match_model(self):
        model = RandomTableModel(vocab_size=4, seed=8)
        sample_set = ancestral_sample(model, [], n_samples=50, seed=10, max_len=12)
        for tokens, logprob in sample_set.samples:
            if tokens[-1] == model.eos_id:
                assert logprob == pytest.approx(
                    sequence_logprob(model, [], list(tokens)), abs=1e-9
                )

    def test_eos_terminated_or_at_cap(self):
        model = RandomTableModel(vocab_size=4, seed=21)
        sample_set = ancestral_sample(model, [], n_samples=200, seed=1, max_len=6)
        for tokens, _ in sample_set.samples:
            assert tokens[-1] == model.eos_id or len(tokens) == 6

    def test_requires_at_least_one_sample(self):
        with pytest.raises(DecodeError):
            ancestral_sample(UnigramModel([0.5, 0.5]), [], n_samples=0, seed=1)


def _sample_single(model, source, index, seed, max_len):
    """Reference re-derivation of one sample straight from the stream rule."""
    from constrainlab.rng import uniform

    tokens = []
    logprob = 0.0
    for step in range(max_len):
        dist = model.next_dist(source, tokens)
        cdf = np.cumsum(dist)
        u = uniform(seed, index, step)
        tok = min(int(np.searchsorted(cdf, u * cdf[-1], side="right")), model.vocab_size - 1)
        logprob += math.log(dist[tok])
        tokens.append(tok)
        if tok == model.eos_id or len(tokens) >= max_len:
            break
    return tuple(tokens), logprob


class TestUnigramFailureModes:
    """The three failure modes of a unigram model, on one instance."""

    def test_mode_search_greedy_and_samples_disagree_in_character(self):
        model = UnigramModel([0.4, 0.6], eos_id=0)
        # exact search: empty output
        assert exhaustive_mode(model, [], max_len=6).tokens == (0,)
        # greedy: the argmax token repeated forever
        assert greedy(model, [], max_len=6).tokens == (1,) * 6
        # sampling: varied lengths (disfluent but not degenerate)
        sample_set = ancestral_sample(model, [], n_samples=200, seed=3, max_len=50)
        lengths = {len(t) for t, _ in sample_set.samples}
        assert len(lengths) > 3
