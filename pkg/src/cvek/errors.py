"""Exception taxonomy shared across the package.

Three buckets map onto the CLI exit codes: usage problems (bad flags,
malformed config) exit 1, data problems (unreadable or malformed input
files) exit 2, and numerical failures (degenerate systems, no admissible
tuning value) exit 3.
"""


class CvekError(Exception):
    """Base class for all package-specific errors."""


class UsageError(CvekError):
    """Bad command line, malformed config, or inconsistent options."""


class DataError(CvekError):
    """Input data could not be read or violates basic requirements."""


class NumericalError(CvekError):
    """A numerical procedure failed or produced a degenerate result."""
