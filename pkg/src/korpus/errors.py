"""Exception hierarchy shared across pipeline stages."""


class KorpusError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(KorpusError):
    """Invalid configuration, spec file, or parameter combination."""


class ShardFormatError(KorpusError):
    """Corpus file violates the JSONL shard format."""


class IntegrityError(KorpusError):
    """Stored counts, checksums, or cross-references disagree with recomputation."""


class CapacityError(KorpusError):
    """Input exceeds a hard representational limit."""


class UnscorableError(KorpusError):
    """Text yields no features or events for the requested scorer."""


class StageError(KorpusError):
    """A pipeline stage failed; partial outputs are retained for resume."""
