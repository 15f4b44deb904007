"""Exception hierarchy shared by all cachescape modules."""


class CachescapeError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(CachescapeError):
    """An input value violates a documented precondition or invariant."""


class TraceParseError(CachescapeError):
    """A trace file is malformed; carries the 1-based offending line number."""

    def __init__(self, line_no, reason):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class ContractError(CachescapeError):
    """A runtime contract between modules was violated (e.g. a multi-thread
    trace handed to the single-thread simulator)."""


class EnergyLookupError(CachescapeError):
    """An energy table has no row for the requested cache configuration."""

    def __init__(self, key):
        super().__init__(f"no energy table row for configuration {key!r}")
        self.key = key
