"""Exception hierarchy shared across the twin."""


class TwinError(Exception):
    """Base class for all domain errors raised by this package."""


# -- scenario / geometry ---------------------------------------------------

class ParseError(TwinError):
    """Scenario document could not be parsed."""


class ValidationError(TwinError):
    """A domain invariant is violated; message names the offending field."""


class UnknownDevice(TwinError):
    pass


class OutOfBounds(TwinError):
    pass


class DegenerateRay(TwinError):
    pass


class DegenerateSegment(TwinError):
    pass


# -- RIS / channel ---------------------------------------------------------

class BacksidePanel(TwinError):
    """A propagation direction lies behind the panel plane."""


class DomainError(TwinError):
    pass


class MissingProfile(TwinError):
    """A via-surface path was evaluated without a phase profile."""


# -- vision / tracking -----------------------------------------------------

class UnknownCamera(TwinError):
    pass


class NonMonotonicTimestamp(TwinError):
    pass


# -- simulation ------------------------------------------------------------

class InvalidCommand(TwinError):
    pass


# -- service layer ---------------------------------------------------------

class Unauthorized(TwinError):
    pass


class QuotaExceeded(TwinError):
    pass


class UnknownScenario(TwinError):
    pass


class UnknownSession(TwinError):
    pass


class IllegalTransition(TwinError):
    def __init__(self, from_state, to_state):
        super().__init__(f"illegal transition {from_state} -> {to_state}")
        self.from_state = from_state
        self.to_state = to_state


class SessionNotRunning(TwinError):
    pass


class UnknownDataset(TwinError):
    pass


class Unsealed(TwinError):
    pass


class DuplicateModel(TwinError):
    pass


class UnknownModel(TwinError):
    pass


class SchemaMismatch(TwinError):
    pass
