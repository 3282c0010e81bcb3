"""Exception hierarchy shared by every module."""


class EmochurnError(Exception):
    """Base class for all package errors."""


class ContractError(EmochurnError, ValueError):
    """An argument violates a documented precondition."""


class UndefinedTestError(EmochurnError, ValueError):
    """A statistic cannot be computed for the given input (e.g. zero trials)."""


class InsufficientDataError(EmochurnError, ValueError):
    pass


class DivergentEstimateError(EmochurnError, ArithmeticError):
    pass


class ParseError(EmochurnError, ValueError):
    """Malformed input document. ``offset`` is the byte offset of the failure."""

    def __init__(self, message, offset=None):
        super().__init__(message if offset is None else f"{message} (at byte {offset})")
        self.offset = offset


class ChannelError(EmochurnError, ValueError):
    pass


class LexiconError(EmochurnError, ValueError):
    """Invalid lexicon file. ``line`` is 1-based."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


class ConfigError(EmochurnError, ValueError):
    pass


class ReorderError(EmochurnError, ValueError):
    """An event arrived with a timestamp earlier than the contributor's last one."""


class FetchError(EmochurnError):
    def __init__(self, message, bug_id=None, status=None):
        super().__init__(message)
        self.bug_id = bug_id
        self.status = status


class StageError(EmochurnError):
    """A pipeline stage failed. Carries the stage name and the partial manifest."""

    def __init__(self, stage, cause, manifest=None):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.manifest = manifest or {}
