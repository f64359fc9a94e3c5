"""Exception hierarchy shared by every module.

Everything raised on purpose derives from :class:`AptError`, so the CLI can map
data problems to exit code 1 with a single ``except`` clause.
"""


class AptError(Exception):
    """Base class for all expected, user-facing failures."""


# ingest
class MalformedRow(AptError):
    def __init__(self, row: int, reason: str):
        super().__init__(f"row {row}: {reason}")
        self.row = row
        self.reason = reason


class DuplicateHash(AptError):
    def __init__(self, sha256: str, row: int):
        super().__init__(f"row {row}: duplicate sha256 {sha256}")
        self.sha256 = sha256
        self.row = row


class SchemaError(AptError):
    def __init__(self, path: str, reason: str, source: str | None = None):
        where = f"{source}: " if source else ""
        super().__init__(f"{where}{path}: {reason}")
        self.path = path
        self.reason = reason
        self.source = source


class EmptyCorpus(AptError):
    pass


# pipeline
class ClassTooSmall(AptError):
    def __init__(self, label, size: int, needed: int = 2):
        super().__init__(f"class {label!r} has {size} member(s); at least {needed} required")
        self.label = label
        self.size = size


class DimensionMismatch(AptError):
    pass


# environment
class EmptySplit(AptError):
    pass


class EpisodeFinished(AptError):
    pass


class ActionOutOfRange(AptError):
    pass


# learning
class ShapeMismatch(AptError):
    pass


class BufferTooSmall(AptError):
    pass


class CheckpointError(AptError):
    pass


# baselines / metrics
class NotFitted(AptError):
    pass


class LengthMismatch(AptError):
    pass


class CodeOutOfRange(AptError):
    pass


class EmptyMatrix(AptError):
    pass


class EmptyLog(AptError):
    pass


class InvalidConfig(AptError):
    pass
