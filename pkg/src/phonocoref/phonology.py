"""Assamese text to IPA segments and padded articulatory feature vectors.

The transliterator is a longest-match-first, left-to-right transducer over a
rule table (grapheme sequence -> IPA segments).  On top of the raw rules it
applies the two orthographic conventions of the script that cannot be
expressed context-free:

* a consonant letter carries the inherent vowel /ɔ/ unless it is followed by
  a vowel sign or a virama,
* the inherent vowel is dropped word-finally.

Feature extraction maps each IPA segment to a row of 24 ternary values
(+1/-1/0) taken from the shipped feature table, then pads the flattened
matrix with zeros to a fixed number of segments.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import (
    EmptyCorpusError,
    PadTooShortError,
    UnknownCharacterError,
    UnknownSegmentError,
)

INHERENT_VOWEL = "ɔ"
FEATURE_DIM = 24

_VALUE_MAP = {"+": 1, "-": -1, "0": 0}


def _nfc(s):
    return unicodedata.normalize("NFC", s)


@dataclass(frozen=True)
class Rule:
    grapheme: str
    segments: tuple
    cls: str  # vowel | vsign | cons | virama | coda


@dataclass(frozen=True)
class PhonemeSequence:
    segments: tuple

    def __len__(self):
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)


@dataclass
class TransliterationResult:
    sequence: PhonemeSequence
    skipped: int = 0
    skipped_chars: list = field(default_factory=list)


def load_g2p_rules(path=None):
    """Read a grapheme->IPA rule table (TSV: grapheme, ipa, class)."""
    if path is None:
        text = resources.files("phonocoref.data").joinpath("asm_g2p.tsv").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    rules = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"g2p table line {lineno}: expected 3 tab-separated columns")
        grapheme, ipa, cls = parts
        if cls not in {"vowel", "vsign", "cons", "virama", "coda"}:
            raise ValueError(f"g2p table line {lineno}: unknown class {cls!r}")
        segments = tuple(ipa.split()) if ipa.strip() else ()
        rules.append(Rule(_nfc(grapheme), segments, cls))
    return rules


class Transliterator:
    """Deterministic longest-match grapheme-to-phoneme transducer.

    ``policy`` is ``"skip"`` (drop unmapped characters, counting them) or
    ``"error"`` (raise :class:`UnknownCharacterError`).  Instances are
    immutable after construction and safe to share across threads.
    """

    def __init__(self, rules=None, policy="skip"):
        if policy not in {"skip", "error"}:
            raise ValueError(f"unknown policy {policy!r}")
        self.policy = policy
        rules = load_g2p_rules() if rules is None else list(rules)
        self._by_grapheme = {r.grapheme: r for r in rules}
        self._max_len = max((len(r.grapheme) for r in rules), default=1)

    def _tokenize_word(self, word):
        """Greedy longest-match split of one whitespace-free chunk."""
        tokens = []
        skipped = []
        i = 0
        n = len(word)
        while i < n:
            match = None
            for length in range(min(self._max_len, n - i), 0, -1):
                rule = self._by_grapheme.get(word[i : i + length])
                if rule is not None:
                    match = rule
                    i += length
                    break
            if match is None:
                if self.policy == "error":
                    raise UnknownCharacterError(word[i], i)
                skipped.append(word[i])
                # an unmapped character also terminates the word for the
                # purpose of final-vowel dropping
                tokens.append(None)
                i += 1
            else:
                tokens.append(match)
        return tokens, skipped

    def transliterate_detailed(self, text) -> TransliterationResult:
        segments = []
        skipped_chars = []
        text = _nfc(text).replace("‌", "").replace("‍", "")
        for word in text.split():
            tokens, skipped = self._tokenize_word(word)
            skipped_chars.extend(skipped)
            for idx, tok in enumerate(tokens):
                if tok is None:
                    continue
                segments.extend(tok.segments)
                if tok.cls != "cons":
                    continue
                nxt = tokens[idx + 1] if idx + 1 < len(tokens) else None
                if nxt is None:
                    continue  # word-final (or boundary): inherent vowel drops
                if nxt.cls in {"vsign", "virama"}:
                    continue
                segments.append(INHERENT_VOWEL)
        return TransliterationResult(
            PhonemeSequence(tuple(segments)), len(skipped_chars), skipped_chars
        )

    def transliterate(self, text) -> PhonemeSequence:
        return self.transliterate_detailed(text).sequence


class FeatureTable:
    """IPA segment -> 24-dimensional ternary articulatory feature row."""

    def __init__(self, path=None):
        if path is None:
            text = resources.files("phonocoref.data").joinpath("artic_features.tsv").read_text("utf-8")
        else:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        lines = [l for l in text.splitlines() if l.strip() and not l.lstrip().startswith("#")]
        header = lines[0].split("\t")
        if header[0] != "ipa" or len(header) != FEATURE_DIM + 1:
            raise ValueError(f"feature table must have 'ipa' plus {FEATURE_DIM} feature columns")
        self.feature_names = tuple(header[1:])
        self._rows = {}
        for line in lines[1:]:
            cells = line.split("\t")
            if len(cells) != FEATURE_DIM + 1:
                raise ValueError(f"feature row for {cells[0]!r} has {len(cells) - 1} values")
            try:
                row = np.array([_VALUE_MAP[c] for c in cells[1:]], dtype=np.float64)
            except KeyError as exc:
                raise ValueError(f"feature row for {cells[0]!r}: bad value {exc}") from exc
            self._rows[_nfc(cells[0])] = row

    def __contains__(self, segment):
        return _nfc(segment) in self._rows

    def segments(self):
        return sorted(self._rows)

    def row(self, segment):
        try:
            return self._rows[_nfc(segment)]
        except KeyError:
            raise UnknownSegmentError(f"segment {segment!r} not in feature table") from None

    def featurize(self, seq) -> np.ndarray:
        """One feature row per segment; shape (len(seq), 24)."""
        segments = list(seq.segments if isinstance(seq, PhonemeSequence) else seq)
        if not segments:
            return np.zeros((0, FEATURE_DIM))
        return np.stack([self.row(s) for s in segments])


def pad_features(matrix, pad_len) -> np.ndarray:
    """Flatten a feature matrix and zero-pad it to ``pad_len`` segments."""
    matrix = np.asarray(matrix, dtype=np.float64).reshape(-1, FEATURE_DIM)
    if pad_len < matrix.shape[0]:
        raise PadTooShortError(
            f"pad_len {pad_len} < {matrix.shape[0]} segments in the matrix"
        )
    out = np.zeros(pad_len * FEATURE_DIM)
    out[: matrix.size] = matrix.ravel()
    return out


def max_pad_length(corpora, translit=None) -> int:
    """Longest segment count over every text in every collection."""
    translit = translit or Transliterator()
    longest = None
    for collection in corpora:
        for text in collection:
            n = len(translit.transliterate(text))
            longest = n if longest is None else max(longest, n)
    if longest is None:
        raise EmptyCorpusError("no texts in any collection")
    return longest


def concat_with_embedding(embedding, padded) -> np.ndarray:
    """Embedding first, padded articulatory features after."""
    return np.concatenate([np.asarray(embedding, dtype=np.float64).ravel(),
                           np.asarray(padded, dtype=np.float64).ravel()])
