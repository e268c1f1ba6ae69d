"""Exception types raised across the pipeline."""


class CorpusForgeError(Exception):
    pass


# metadata
class ParseError(CorpusForgeError):
    pass


class SchemaError(CorpusForgeError):
    pass


class InvariantError(CorpusForgeError):
    pass


class InsufficientDataError(CorpusForgeError):
    pass


# textnorm
class EncodingError(CorpusForgeError):
    pass


class UnsupportedNumberError(CorpusForgeError):
    pass


# alignment
class InconsistentTimestampsError(CorpusForgeError):
    pass


# graph / decoding
class EmptyReferenceError(CorpusForgeError):
    pass


class NoPathError(CorpusForgeError):
    pass


# evaluation
class OverlapError(CorpusForgeError):
    pass


class LengthMismatchError(CorpusForgeError):
    pass


class NoHumanSpeechError(CorpusForgeError):
    pass


# pipeline
class UnknownStageError(CorpusForgeError):
    pass


class ConfigError(CorpusForgeError):
    pass
