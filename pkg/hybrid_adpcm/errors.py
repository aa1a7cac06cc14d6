"""Exception hierarchy shared by the codec, the evaluation harness and the CLI.

Every error carries a short machine-greppable ``code`` so the CLI can report
failures as a single ``error[CODE]: message`` line.
"""
from __future__ import annotations


class AdpcmError(Exception):
    code = "E_ADPCM"


class ConfigError(AdpcmError):
    code = "E_CONFIG"


class SignalError(AdpcmError):
    code = "E_SIGNAL"


class ManifestError(AdpcmError):
    code = "E_MANIFEST"


class DegenerateRecursionError(AdpcmError):
    """Levinson-Durbin hit a non-positive prediction error."""

    code = "E_LPC"


class TrainingError(AdpcmError):
    """MLP training produced a non-finite loss."""

    code = "E_TRAIN"


class StreamError(AdpcmError):
    code = "E_STREAM"


class BadMagicError(StreamError):
    code = "E_MAGIC"


class DigestMismatchError(StreamError):
    code = "E_DIGEST"


class TruncatedStreamError(StreamError):
    code = "E_TRUNCATED"
