"""
exceptions.py
=============

Errors raised by the quality app. Management commands turn any
EmbermineError into a CommandError with exit status 2.
"""


class EmbermineError(Exception):
    """Base class for every error raised by embermine."""


class ConfigError(EmbermineError):
    """Invalid run configuration, manifest or project dates."""


class InputError(EmbermineError):
    """A side file (labs.csv, grades.csv, per-repo artifacts) is unusable."""


# -----------------------------------------------------------------------
# Repository access


class RepoOpenError(EmbermineError):
    """The path is not a git repository or cannot be opened."""


class BranchNotFound(RepoOpenError):
    def __init__(self, branch: str):
        super().__init__(f"Branch '{branch}' does not exist")
        self.branch = branch


class ObjectMissing(EmbermineError):
    """A commit or blob is not present in the object database."""


class BlameRangeError(EmbermineError):
    """A blame query asked for a line the file does not have."""


# -----------------------------------------------------------------------
# External analyzer


class AnalyzerError(EmbermineError):
    """Base class for external analyzer problems."""

    kind = "AnalyzerError"

    def __init__(self, message: str, output: str = ""):
        super().__init__(message)
        self.output = output


class AnalyzerUnavailable(AnalyzerError):
    kind = "AnalyzerUnavailable"


class AnalyzerFailed(AnalyzerError):
    kind = "AnalyzerFailed"


class AnalyzerTimeout(AnalyzerError):
    kind = "AnalyzerTimeout"


class ReportParseError(EmbermineError):
    """The analyzer's XML could not be parsed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


# -----------------------------------------------------------------------
# Statistics


class StatsError(EmbermineError):
    """Base class for invalid statistical input."""


class EmptySampleError(StatsError):
    pass


class DegenerateInput(StatsError):
    pass


class ShapeError(StatsError):
    pass


class ShareError(StatsError):
    pass
