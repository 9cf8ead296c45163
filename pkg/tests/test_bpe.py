"""BPE learning, application, vocabulary, and round trips."""

import pytest
from hypothesis import given, strategies as st

from constrainlab.bpe import (
    BpeError,
    BpeModel,
    Vocabulary,
    apply_bpe,
    build_vocabulary,
    decode,
    detokenize,
    encode,
    learn_bpe,
    load_merges,
    load_vocabulary,
    save_merges,
    save_vocabulary,
    segment_word,
)
from constrainlab.corpus import Sentence

from tests.test_corpus import make_corpus


class TestLearnBpe:
    def test_abab_two_merges(self):
        # Hand-run of the count loop: (a,b) occurs twice per word, (b,a) once,
        # so (a,b) merges first; then (ab,ab) is the only remaining pair.
        corpus = make_corpus([("abab abab", "abab")] * 5)
        model = learn_bpe(corpus, 2)
        assert model.merges == (("a", "b"), ("ab", "ab"))

    def test_zero_merges_is_character_model(self):
        corpus = make_corpus([("ab", "cd")])
        assert learn_bpe(corpus, 0).merges == ()

    def test_deterministic(self):
        corpus = make_corpus([("abcd abcd", "bcda"), ("dcba", "cdab abc")])
        assert learn_bpe(corpus, 10) == learn_bpe(corpus, 10)

    def test_joint_over_both_sides(self):
        # Source alone ties zz with qv (tie-break would pick qv); the target
        # side pushes zz ahead, so joint learning must pick it.
        corpus = make_corpus([("zz qv", "zz"), ("qv zz", "zz qv")])
        model = learn_bpe(corpus, 1)
        assert model.merges == (("z", "z"),)

    def test_stops_when_no_pairs_remain(self):
        corpus = make_corpus([("ab", "ab")])
        model = learn_bpe(corpus, 50)
        assert len(model) == 1  # single merge exhausts every word

    def test_tie_break_lexicographic_on_concatenation(self):
        # "ba" and "ab" both appear twice; the tie goes to concatenation "ab".
        corpus = make_corpus([("ab ba", "ab ba")])
        model = learn_bpe(corpus, 1)
        assert model.merges[0] == ("a", "b")

    def test_empty_corpus_rejected(self):
        with pytest.raises(BpeError):
            learn_bpe(make_corpus([]), 4)

    def test_duplicate_merges_rejected(self):
        with pytest.raises(BpeError):
            BpeModel((("a", "b"), ("a", "b")))


class TestApplyBpe:
    def test_marker_on_non_final_pieces(self):
        # A model that knows the pieces "play" and "ing" but not the whole word
        # splits "playing" into a marked piece plus an unmarked final piece.
        model = BpeModel(
            (("p", "l"), ("pl", "a"), ("pla", "y"), ("i", "n"), ("in", "g"), ("c", "a"), ("ca", "t"))
        )
        out = apply_bpe(model, Sentence(("playing", "cat")))
        assert out == ["play@@", "ing", "cat"]

    def test_empty_sentence(self):
        assert apply_bpe(BpeModel(()), Sentence(())) == []

    def test_learned_word_rebuilds_whole(self):
        corpus = make_corpus([("abab abab", "abab")] * 5)
        model = learn_bpe(corpus, 2)
        assert apply_bpe(model, Sentence(("abab",))) == ["abab"]

    def test_merge_rank_order_applies(self):
        model = BpeModel((("b", "c"), ("a", "bc")))
        assert segment_word(model, "abc") == ["abc"]

    def test_word_prefix_gives_token_prefix(self):
        corpus = make_corpus([("abc abd ab", "cd ab abc")] * 3)
        model = learn_bpe(corpus, 6)
        full = Sentence(("abc", "abd", "ab"))
        prefix = Sentence(full.words[:2])
        assert apply_bpe(model, prefix) == apply_bpe(model, full)[: len(apply_bpe(model, prefix))]


class TestDetokenize:
    def test_inverts_marker_convention(self):
        assert detokenize(["play@@", "ing", "cat"]).words == ("playing", "cat")

    def test_empty(self):
        assert detokenize([]).words == ()

    def test_chained_markers(self):
        assert detokenize(["a@@", "b@@", "c"]).words == ("abc",)

    def test_dangling_marker_dropped_with_report(self, caplog):
        import logging

        with caplog.at_level(logging.WARNING, logger="constrainlab.bpe"):
            out = detokenize(["a@@", "b@@"])
        assert out.words == ("ab",)
        assert "dangling" in caplog.text

    @given(
        st.lists(
            st.text(alphabet="abcdef", min_size=1, max_size=8), min_size=0, max_size=8
        ).map(tuple)
    )
    def test_roundtrip_under_learned_model(self, words):
        sent = Sentence(words)
        if words:
            corpus = make_corpus([(" ".join(words), "x")])
            model = learn_bpe(corpus, 5)
        else:
            model = BpeModel(())
        assert detokenize(apply_bpe(model, sent)) == sent

    @given(
        st.lists(st.text(alphabet="abcd", min_size=1, max_size=6), min_size=1, max_size=6),
        st.lists(st.tuples(st.text("abcd", min_size=1, max_size=2), st.text("abcd", min_size=1, max_size=2)), max_size=6),
    )
    def test_roundtrip_under_arbitrary_merges(self, words, raw_merges):
        merges = tuple(dict.fromkeys(raw_merges))
        sent = Sentence(tuple(words))
        assert detokenize(apply_bpe(BpeModel(merges), sent)) == sent


class TestVocabulary:
    def test_reserved_tokens_and_dense_ids(self):
        vocab = build_vocabulary([["b", "a"], ["c"]])
        assert vocab.id_to_token[:2] == ("<eos>", "<unk>")
        assert vocab.id_to_token[2:] == ("a", "b", "c")
        assert vocab.eos_id == 0 and vocab.unk_id == 1

    def test_encode_appends_eos(self):
        vocab = build_vocabulary([["a"]])
        assert encode(vocab, ["a"], append_eos=True) == [vocab.token_to_id["a"], vocab.eos_id]

    def test_roundtrip_identity(self):
        vocab = build_vocabulary([["a", "b", "c"]])
        pieces = ["c", "a", "b", "a"]
        assert decode(vocab, encode(vocab, pieces)) == pieces

    def test_unknown_maps_to_unk(self):
        vocab = build_vocabulary([["a"]])
        assert encode(vocab, ["zz"]) == [vocab.unk_id]

    def test_decode_out_of_range(self):
        vocab = build_vocabulary([["a"]])
        with pytest.raises(BpeError, match="out of range"):
            decode(vocab, [99])

    def test_missing_reserved_token_rejected(self):
        with pytest.raises(BpeError):
            Vocabulary(("<eos>", "a"))


class TestFiles:
    def test_merge_file_roundtrip(self, tmp_path):
        model = BpeModel((("a", "b"), ("ab", "c@@")))
        save_merges(model, tmp_path / "m")
        assert load_merges(tmp_path / "m") == model
        assert (tmp_path / "m").read_text() == "a b\nab c@@\n"

    def test_vocab_file_roundtrip(self, tmp_path):
        vocab = build_vocabulary([["b", "a"]])
        save_vocabulary(vocab, tmp_path / "v")
        assert load_vocabulary(tmp_path / "v") == vocab
        assert (tmp_path / "v").read_text().splitlines()[0] == "<eos>\t0"

    def test_non_dense_vocab_rejected(self, tmp_path):
        (tmp_path / "v").write_text("<eos>\t0\n<unk>\t2\n", encoding="utf-8")
        with pytest.raises(BpeError, match="dense"):
            load_vocabulary(tmp_path / "v")
