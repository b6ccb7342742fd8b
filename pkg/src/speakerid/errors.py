"""Exception types raised across the toolkit."""


class SpeakerIdError(Exception):
    """Base class for every error raised by speakerid."""


class ConfigError(SpeakerIdError, ValueError):
    pass


class FormatUnsupported(SpeakerIdError):
    pass


class CorruptHeader(SpeakerIdError):
    pass


class AudioIoError(SpeakerIdError, OSError):
    pass


class TooShort(SpeakerIdError, ValueError):
    pass


class NoSpeechDetected(SpeakerIdError):
    pass


class DegenerateFrame(SpeakerIdError, ValueError):
    pass


class DegenerateUtterance(SpeakerIdError, ValueError):
    pass


class NumericalInstability(SpeakerIdError, ArithmeticError):
    pass


class EmptyFeatures(SpeakerIdError, ValueError):
    pass


class LengthMismatch(SpeakerIdError, ValueError):
    pass


class DimMismatch(SpeakerIdError, ValueError):
    pass


class EmptyInput(SpeakerIdError, ValueError):
    pass


class CorpusEmpty(SpeakerIdError):
    pass


class SingleSpeaker(SpeakerIdError):
    pass


class UnknownSpeakerLabel(SpeakerIdError):
    pass


class ModelFormatError(SpeakerIdError):
    pass
