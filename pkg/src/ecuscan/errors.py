"""Exception types raised by the simulator."""


class SimError(Exception):
    """Base class for all simulator errors."""


class UnresolvedHighZ(SimError):
    pass


class LengthMismatch(SimError):
    pass


class UnknownDevice(SimError):
    pass


class BusConflict(SimError):
    pass


class BadChannel(SimError):
    pass


class UnknownTarget(SimError):
    pass


class UnknownNode(SimError):
    pass


class NotADriver(SimError):
    pass


class NoEdges(SimError):
    pass


class NoSignal(SimError):
    pass


class SegmentBusy(SimError):
    pass


class NoAbmAccess(SimError):
    pass


class AmbiguousProfile(SimError):
    pass


class LastDriver(SimError):
    pass


class NoAbmNodes(SimError):
    pass


class CapacityExhausted(SimError):
    pass


class DanglingReference(SimError):
    pass


class ParseError(SimError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
