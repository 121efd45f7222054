"""Exception types shared across the toolkit."""


class PhonocorefError(Exception):
    """Base class for all toolkit errors."""


class UnknownCharacterError(PhonocorefError):
    """A character has no transliteration rule and the policy is strict."""

    def __init__(self, char, position):
        self.char = char
        self.position = position
        super().__init__(f"no rule for character {char!r} at position {position}")


class UnknownSegmentError(PhonocorefError):
    """An IPA segment is missing from the articulatory feature table."""


class PadTooShortError(PhonocorefError):
    """Requested pad length is shorter than the feature matrix."""


class EmptyCorpusError(PhonocorefError):
    """No texts supplied where at least one collection is required."""


class DimensionMismatchError(PhonocorefError):
    """Vectors that must share a dimensionality do not."""


class EmptyBatchError(PhonocorefError):
    """A loss or statistic was requested over zero samples."""


class ZeroNormVectorError(PhonocorefError):
    """Cosine similarity is undefined for a zero-norm vector."""


class NonFiniteLossError(PhonocorefError):
    """Training produced a NaN or infinite loss."""

    def __init__(self, message, diagnostics=None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class InvalidSpanError(PhonocorefError):
    """Mention span is outside its sentence."""


class AlreadyMarkedError(PhonocorefError):
    """Sentence already carries trigger markers."""


class DuplicateMentionIdError(PhonocorefError):
    """Two mentions share an id."""


class MissingLemmaError(PhonocorefError):
    """A mention lacks the lemma required by the heuristic."""


class DegenerateLabelsError(PhonocorefError):
    """Pairwise training needs at least one positive and one negative."""


class EmptyListError(PhonocorefError):
    """A statistic was requested over an empty list."""


class InsufficientSetsError(PhonocorefError):
    """Beyond-set similarities need at least two sets."""


class MentionUniverseMismatchError(PhonocorefError):
    """Key and response clusterings cover different mentions (strict mode)."""


class ValidationError(PhonocorefError):
    """A config or data file failed validation."""

    def __init__(self, failures):
        self.failures = list(failures)
        super().__init__("; ".join(str(f) for f in self.failures) or "validation failed")


class PipelineStageError(PhonocorefError):
    """A pipeline stage failed; partial outputs are flagged stale."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")
