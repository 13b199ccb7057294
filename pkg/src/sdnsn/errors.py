"""Exception hierarchy shared across the package."""


class SdnsnError(Exception):
    """Base class for every error raised by sdnsn."""


class MalformedName(SdnsnError, ValueError):
    pass


class ElementNotFirst(SdnsnError, ValueError):
    pass


class MissingHop(SdnsnError, KeyError):
    pass


class InvalidChart(SdnsnError, ValueError):
    pass


class PacketError(SdnsnError, ValueError):
    """Raised when bytes cannot be decoded into a packet."""


class TruncatedPacket(PacketError):
    pass


class UnknownType(PacketError):
    pass


class MalformedTlv(PacketError):
    pass


class UnknownDeadline(SdnsnError, ValueError):
    pass


class DuplicateHead(SdnsnError, KeyError):
    pass


class Unplaceable(SdnsnError):
    pass


class UnknownData(SdnsnError, KeyError):
    pass


class UnknownHead(SdnsnError, KeyError):
    pass


class NoRoute(SdnsnError):
    pass


class TimeTravel(SdnsnError, ValueError):
    pass


class ScenarioError(SdnsnError):
    """A scenario file could not be read or failed validation.

    ``violations`` lists every problem found, one human-readable string each.
    """

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class ParseError(ScenarioError):
    """Syntax error in a scenario file; ``line`` is 1-based when known."""

    def __init__(self, message, line=None, violations=()):
        super().__init__(message, violations)
        self.line = line


class NonQuiescent(SdnsnError):
    pass
