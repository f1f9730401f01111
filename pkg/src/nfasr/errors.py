"""Exception hierarchy shared by every stage of the pipeline."""


class NfasrError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(NfasrError, ValueError):
    """A configuration value violates its contract."""


class DataError(NfasrError, ValueError):
    """Input data is malformed or violates a precondition."""


class WavParseError(DataError):
    """The byte stream is not a well-formed RIFF/WAVE container."""

    def __init__(self, chunk, message):
        self.chunk = chunk
        super().__init__(f"{chunk!r} chunk: {message}")


class UnsupportedFormatError(DataError):
    """A well-formed WAV file that this reader does not handle."""


class ManifestError(DataError):
    """Base for manifest validation failures."""

    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class EmptyManifestError(ManifestError):
    pass


class VocabularyError(ManifestError):
    pass


class DuplicateEntryError(ManifestError):
    pass


class TooShortError(DataError):
    """Signal shorter than one analysis frame."""


class DimensionError(DataError):
    """Vector or matrix has the wrong shape."""


class DegenerateDimensionError(DataError):
    """A feature dimension has zero variance over the training set."""

    def __init__(self, dim):
        self.dim = dim
        super().__init__(f"feature dimension {dim} has zero variance")


class NoSpeechError(DataError):
    """Voice activity detection found no speech segment."""
