import random
import string
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqdec.errors import ConfigurationError
from seqdec.textprep import (
    EOW,
    SPECIALS,
    UNK,
    UNK_ID,
    BpeMerges,
    TokenSequence,
    Vocabulary,
    apply_bpe,
    build_vocab,
    decode,
    detokenize,
    encode,
    join_bpe,
    learn_bpe,
    tokenize,
)

words = st.text(alphabet="abcde", min_size=1, max_size=8)


class TestTokenize:
    def test_contraction(self):
        assert tokenize("It's no use") == ["It", "'s", "no", "use"]

    def test_empty(self):
        assert tokenize("") == []
        assert tokenize("   \t\n") == []

    def test_whitespace_collapse(self):
        assert tokenize("a   b") == ["a", "b"]

    def test_punctuation_detached(self):
        assert tokenize('"Don\'t," she said.') == ['"', "Do", "n't", ",", '"', "she", "said", "."]

    def test_inner_punctuation_kept(self):
        assert tokenize("e-mail 3.14") == ["e-mail", "3.14"]

    @given(st.text())
    def test_no_empty_tokens(self, text):
        assert all(tok for tok in tokenize(text))

    def test_detokenize_reattaches(self):
        assert detokenize(tokenize("It's fine, really.")) == "It's fine, really."


class TestVocabulary:
    def test_frequency_truncation(self):
        corpus = [["a", "a", "b"], ["c", "a", "b"]]
        vocab = build_vocab(corpus, max_size=6)
        assert vocab.tokens == SPECIALS + ("a", "b")
        assert encode(["c"], vocab).ids == (UNK_ID,)

    def test_empty_corpus(self):
        assert build_vocab([], max_size=4).tokens == SPECIALS

    def test_lexicographic_tie_break(self):
        vocab = build_vocab([["y", "x", "y", "x"]], max_size=5)
        assert vocab.tokens == SPECIALS + ("x",)

    def test_max_size_below_specials(self):
        with pytest.raises(ConfigurationError):
            build_vocab([["a"]], max_size=3)

    def test_specials_are_fixed(self):
        with pytest.raises(ConfigurationError):
            Vocabulary(("a",) + SPECIALS)

    @given(st.lists(st.lists(st.sampled_from("abcdefg"), max_size=6), max_size=8), st.integers(4, 12))
    def test_bijection_and_dense_ids(self, corpus, max_size):
        vocab = build_vocab(corpus, max_size)
        assert 4 <= len(vocab) <= max_size
        assert [vocab.id(t) for t in vocab.tokens] == list(range(len(vocab)))
        assert vocab.tokens[:4] == SPECIALS
        assert build_vocab(corpus, max_size) == vocab

    def test_encode_decode(self):
        vocab = Vocabulary.from_tokens(["a"])
        seq = encode(["a", "zzz"], vocab)
        assert isinstance(seq, TokenSequence)
        assert seq.ids == (vocab.id("a"), UNK_ID)
        assert decode(seq.ids, vocab) == ["a", UNK]
        assert encode([], vocab).ids == ()

    def test_roundtrip_known_tokens(self):
        vocab = Vocabulary.from_tokens("the cat sat".split())
        tokens = ["sat", "the", "cat", "the"]
        assert decode(encode(tokens, vocab).ids, vocab) == tokens

    def test_decode_out_of_range(self):
        vocab = Vocabulary.from_tokens(["a"])
        with pytest.raises(IndexError):
            decode([5], vocab)

    def test_file_roundtrip(self, tmp_path):
        vocab = build_vocab([tokenize("the cat sat on the mat")], 8)
        vocab.save(tmp_path / "v.txt")
        lines = (tmp_path / "v.txt").read_text().splitlines()
        assert lines[:4] == list(SPECIALS)
        assert Vocabulary.load(tmp_path / "v.txt") == vocab


class TestBpe:
    def test_hand_traced_merges(self):
        # ab</w> x2, abc</w> x1 as symbols a b </w> / a b c </w>:
        # round 1 counts (a,b)=3 (b,</w>)=2 (b,c)=1 (c,</w>)=1 -> merge (a,b)
        # round 2 counts (ab,</w>)=2 (ab,c)=1 (c,</w>)=1 -> merge (ab,</w>)
        merges = learn_bpe({"ab": 2, "abc": 1}, 2)
        assert merges.merges == (("a", "b"), ("ab", EOW))

    def test_zero_merges(self):
        merges = learn_bpe({"hello": 3}, 0)
        assert merges.merges == ()
        assert apply_bpe("hello", merges) == ["h", "e", "l", "l", "o</w>"]

    def test_early_stop_on_singletons(self):
        assert learn_bpe({"abc": 1, "def": 1}, 10).merges == ()

    def test_apply_single_merge(self):
        assert apply_bpe("ab", BpeMerges((("a", "b"),))) == ["ab</w>"]

    def test_single_character(self):
        assert apply_bpe("q", learn_bpe({"ab": 2, "abc": 1}, 2)) == ["q</w>"]

    def test_priority_order(self):
        merges = BpeMerges((("b", "c"), ("a", "b")))
        assert apply_bpe("abc", merges) == ["a", "bc</w>"]

    def test_duplicate_merges_rejected(self):
        with pytest.raises(ConfigurationError):
            BpeMerges((("a", "b"), ("a", "b")))

    @settings(max_examples=60)
    @given(st.dictionaries(words, st.integers(1, 5), min_size=1, max_size=12), st.integers(0, 15), words)
    def test_roundtrip(self, corpus, n, word):
        merges = learn_bpe(corpus, n)
        for w in list(corpus) + [word]:
            assert join_bpe(apply_bpe(w, merges)) == w

    def test_token_count_monotone(self):
        rnd = random.Random(3)
        corpus = Counter("".join(rnd.choices("abcd", k=rnd.randint(1, 7))) for _ in range(300))
        totals = []
        for n in range(0, 30):
            merges = learn_bpe(corpus, n)
            totals.append(sum(len(apply_bpe(w, merges)) * c for w, c in corpus.items()))
        assert all(a >= b for a, b in zip(totals, totals[1:]))
        assert totals[-1] < totals[0]

    def test_file_roundtrip(self, tmp_path):
        merges = learn_bpe(Counter(tokenize("low lower lowest newer wider new")), 10)
        merges.save(tmp_path / "m.txt")
        assert BpeMerges.load(tmp_path / "m.txt") == merges

    def test_empty_merges_file_has_header_only(self, tmp_path):
        BpeMerges().save(tmp_path / "m.txt")
        assert (tmp_path / "m.txt").read_text().splitlines() == ["#bpe merges v1"]

    def test_deterministic(self):
        corpus = {w: len(w) for w in string.ascii_lowercase[:6]}
        corpus.update({"abab": 3, "baba": 3})
        assert learn_bpe(corpus, 5) == learn_bpe(dict(reversed(list(corpus.items()))), 5)
