"""Exception hierarchy.  Everything raised deliberately by the package derives
from :class:`CollegeDAError`; the CLI maps these to exit code 1."""


class CollegeDAError(Exception):
    pass


class MalformedInputError(CollegeDAError, ValueError):
    """A market, matching or student set violates its invariants."""


class ConfigurationError(CollegeDAError, ValueError):
    """Invalid generator, capacity or experiment configuration."""


class OracleSizeError(CollegeDAError):
    """The brute-force oracle refused an instance above its size guard."""


class EmptyInputError(CollegeDAError, ValueError):
    pass
