"""Exception types shared across the codec."""


class CodecError(Exception):
    """Base class for all splatcodec errors."""


class FormatError(CodecError):
    """Malformed PLY or container structure (bad magic, missing property, ...)."""


class UnsupportedFormatError(FormatError):
    """Structurally valid input that this codec deliberately does not handle."""


class ValidationError(CodecError):
    """Input data violates a precondition (non-finite values, bad parameters, ...)."""


class CorruptStreamError(CodecError):
    """Entropy-coded payload failed a checksum or ended prematurely."""
