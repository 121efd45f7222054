import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phonocoref.errors import (
    EmptyCorpusError,
    PadTooShortError,
    UnknownCharacterError,
    UnknownSegmentError,
)
from phonocoref.phonology import (
    FEATURE_DIM,
    FeatureTable,
    PhonemeSequence,
    Transliterator,
    concat_with_embedding,
    max_pad_length,
    pad_features,
)


@pytest.fixture(scope="module")
def translit():
    return Transliterator()


@pytest.fixture(scope="module")
def table():
    return FeatureTable()


# ---------------------------------------------------------------------------
# transliteration
# ---------------------------------------------------------------------------

class TestTransliterate:
    @pytest.mark.parametrize("text,ipa", [
        ("ছিঙ্গাপুৰ", "siŋgapuɹ"),    # Singapore
        ("অসমীয়া", "ɔxɔmija"),       # the language name
        ("নিউয়ৰ্ক", "niujɔɹk"),      # New York
        ("মৃত্যুৰ", "mɹittuɹ"),
        ("হত্যা", "ɦɔtta"),
        ("ইঞ্জিনিয়াৰিং", "indʒinijaɹiŋ"),
    ])
    def test_reference_words(self, translit, text, ipa):
        assert "".join(translit.transliterate(text).segments) == ipa

    def test_empty_input(self, translit):
        assert translit.transliterate("").segments == ()

    def test_whitespace_separates_words(self, translit):
        # final consonants of both words drop the inherent vowel
        two = translit.transliterate("ৰাম ৰাম").segments
        one = translit.transliterate("ৰাম").segments
        assert two == one + one

    def test_unknown_characters_skipped_with_count(self, translit):
        res = translit.transliterate_detailed("অ7!")
        assert res.sequence.segments == ("ɔ",)
        assert res.skipped == 2
        assert res.skipped_chars == ["7", "!"]

    def test_strict_mode_raises(self):
        strict = Transliterator(policy="error")
        with pytest.raises(UnknownCharacterError):
            strict.transliterate("অx")

    def test_unknown_char_acts_as_word_boundary(self, translit):
        # the consonant before a skipped character behaves as word-final
        with_boundary = translit.transliterate("ৰাম।").segments
        assert with_boundary == translit.transliterate("ৰাম").segments

    @given(st.text(min_size=0, max_size=40))
    @settings(max_examples=200, deadline=None)
    def test_deterministic(self, text):
        t = Transliterator()
        assert t.transliterate(text).segments == t.transliterate(text).segments

    @given(st.text(alphabet=st.characters(min_codepoint=0x980, max_codepoint=0x9FF),
                   max_size=20))
    @settings(max_examples=200, deadline=None)
    def test_output_segments_always_featurizable(self, text):
        t = Transliterator()
        ft = FeatureTable()
        for seg in t.transliterate(text).segments:
            assert seg in ft


# ---------------------------------------------------------------------------
# featurize
# ---------------------------------------------------------------------------

class TestFeaturize:
    def test_m_row(self, table):
        row = table.row("m")
        names = table.feature_names
        idx = {n: i for i, n in enumerate(names)}
        assert row[idx["voi"]] == 1
        assert row[idx["nas"]] == 1
        assert row[idx["son"]] == 1
        assert row[idx["lab"]] == 1

    def test_row_count_matches_segments(self, translit, table):
        seq = translit.transliterate("ছিঙ্গাপুৰ")
        m = table.featurize(seq)
        # hand segmentation: s i ŋ g a p u ɹ
        assert len(seq.segments) == 8
        assert m.shape == (8, FEATURE_DIM)

    def test_empty_sequence(self, table):
        assert table.featurize(PhonemeSequence(())).shape == (0, FEATURE_DIM)

    def test_unknown_segment(self, table):
        with pytest.raises(UnknownSegmentError):
            table.featurize(["Q"])

    def test_all_cells_ternary(self, table):
        for seg in table.segments():
            row = table.row(seg)
            assert set(np.unique(row)) <= {-1.0, 0.0, 1.0}

    def test_24_features(self, table):
        assert len(table.feature_names) == FEATURE_DIM == 24


# ---------------------------------------------------------------------------
# padding / concatenation
# ---------------------------------------------------------------------------

class TestPadding:
    def test_two_rows_padded_to_five(self):
        m = np.ones((2, FEATURE_DIM))
        out = pad_features(m, 5)
        assert out.shape == (5 * FEATURE_DIM,)
        assert np.all(out[: 2 * FEATURE_DIM] == 1)
        assert np.all(out[2 * FEATURE_DIM :] == 0)

    def test_empty_matrix_cloze_pad(self):
        out = pad_features(np.zeros((0, FEATURE_DIM)), 360)
        assert out.shape == (360 * FEATURE_DIM,)
        assert out.shape[0] == 8640
        assert not out.any()

    def test_pad_too_short(self):
        with pytest.raises(PadTooShortError):
            pad_features(np.ones((3, FEATURE_DIM)), 2)

    @given(st.integers(0, 6), st.integers(0, 12))
    @settings(max_examples=60, deadline=None)
    def test_prefix_roundtrip_and_zero_tail(self, rows, extra):
        rng = np.random.default_rng(rows * 13 + extra)
        m = rng.choice([-1.0, 0.0, 1.0], size=(rows, FEATURE_DIM))
        out = pad_features(m, rows + extra)
        assert np.array_equal(out[: m.size].reshape(rows, FEATURE_DIM), m)
        assert not out[m.size :].any()


class TestMaxPadLength:
    def test_simple(self, translit):
        # two collections of plain Assamese vowel strings: 1 segment per char
        assert max_pad_length([["অআ"], ["অআইঈ"]], translit) == 4

    def test_single_empty_string(self, translit):
        assert max_pad_length([[""]], translit) == 0

    def test_empty_corpus(self, translit):
        with pytest.raises(EmptyCorpusError):
            max_pad_length([[], []], translit)

    @given(st.lists(st.lists(st.text(
        alphabet=st.characters(min_codepoint=0x985, max_codepoint=0x9B9),
        max_size=12), max_size=4), min_size=1, max_size=4))
    @settings(max_examples=60, deadline=None)
    def test_matches_brute_force_scan(self, corpora):
        t = Transliterator()
        counts = [len(t.transliterate(x).segments)
                  for coll in corpora for x in coll]
        if not counts:
            with pytest.raises(EmptyCorpusError):
                max_pad_length(corpora, t)
        else:
            assert max_pad_length(corpora, t) == max(counts)


class TestConcat:
    def test_length_arithmetic(self):
        out = concat_with_embedding(np.zeros(768), np.zeros(8640))
        assert out.shape == (9408,)

    def test_zero_plus_zero(self):
        assert not concat_with_embedding(np.zeros(3), np.zeros(5)).any()

    def test_order(self):
        out = concat_with_embedding([1, 2], [0, 0, 0])
        assert out.tolist() == [1, 2, 0, 0, 0]

    @given(st.integers(0, 20), st.integers(0, 20))
    @settings(max_examples=40, deadline=None)
    def test_length_additivity(self, a, b):
        out = concat_with_embedding(np.ones(a), np.ones(b))
        assert out.shape == (a + b,)
