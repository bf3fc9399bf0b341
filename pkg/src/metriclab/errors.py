"""Exception hierarchy.

The CLI maps :class:`UsageError` to exit code 1 and every other
:class:`MetricLabError` to exit code 2.
"""


class MetricLabError(Exception):
    """Base class for errors raised on bad input data."""


class UsageError(MetricLabError, ValueError):
    """Bad user-supplied option, e.g. an unknown metric name."""


class ParseError(MetricLabError, ValueError):
    def __init__(self, message, source=None, line=None):
        self.source = source
        self.line = line
        where = ""
        if source is not None:
            where += f"{source}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class MetricError(MetricLabError, ValueError):
    """A metric cannot be computed for the given topic."""


class DataError(MetricLabError, ValueError):
    """Tables or collections do not satisfy an operation's preconditions."""


class StatisticsError(MetricLabError, ValueError):
    """Degenerate input to a statistic (constant vector, length mismatch)."""
