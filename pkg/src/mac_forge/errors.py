"""Exception hierarchy shared by every mac_forge module."""


class MacForgeError(Exception):
    """Base class for all errors raised by mac_forge."""


class ParseError(MacForgeError, ValueError):
    """A text resource (meta set, lexicon, rules, manifest) is malformed."""

    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line is not None:
            where += f"line {line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class OOVError(MacForgeError, KeyError):
    """A grapheme has no lexicon entry and the OOV policy is ``error``."""

    def __init__(self, grapheme, position):
        self.grapheme = grapheme
        self.position = position
        super().__init__(f"out-of-vocabulary grapheme {grapheme!r} at position {position}")

    def __str__(self):
        return self.args[0]


class EmptySequenceError(MacForgeError, ValueError):
    """Mapping produced no meta-audio ids at all."""


class InfeasibleAlignmentError(MacForgeError, ValueError):
    """Too few frames to give every label its minimum segment length."""


class ImpossibleAlignmentError(MacForgeError, ValueError):
    """Every feasible segmentation has probability zero."""


class LabelRangeError(MacForgeError, IndexError):
    """A meta-audio id is outside ``0..K-1``."""


class GuardExceededError(MacForgeError, RuntimeError):
    """Brute-force enumeration refused because it would be too large."""

    def __init__(self, count, limit):
        self.count = count
        self.limit = limit
        super().__init__(f"{count} feasible segmentations exceed the enumeration guard of {limit}")


class FormatError(MacForgeError, ValueError):
    """A binary or on-disk artifact does not conform to its format."""


class BadMagicError(FormatError):
    pass


class UnsupportedVersionError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class HashMismatchError(FormatError):
    """The meta-audio set hash recorded in an artifact differs from the expected one."""


class IndexCorruptError(FormatError):
    """A line of a clip database index could not be parsed or verified."""

    def __init__(self, message, line):
        self.line = line
        super().__init__(f"index.tsv line {line}: {message}")


class MissingIndexError(FormatError):
    pass


class SampleRateMismatchError(MacForgeError, ValueError):
    pass


class CoverageError(MacForgeError, LookupError):
    """Some meta-audio ids have no clip in the database."""

    def __init__(self, missing):
        self.missing = tuple(sorted(set(missing)))
        super().__init__(f"no clips for meta-audio ids {list(self.missing)}")

    def __str__(self):
        return self.args[0]


class EmptyDistributionError(MacForgeError, ValueError):
    """No transcripts remain after exclusion."""
