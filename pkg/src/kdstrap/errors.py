"""Exception hierarchy."""


class KdsError(Exception):
    """Base class for all toolkit errors."""


class DomainError(KdsError, ValueError):
    pass


class NotSubextremal(DomainError):
    pass


class RootIsolationFailure(KdsError, RuntimeError):
    pass


class EmptyInterval(KdsError):
    """The admissible cosmological-constant interval is empty (a valid outcome)."""


class BandFitFailure(KdsError, RuntimeError):
    pass


class ChartDomainError(DomainError):
    pass


class NotCharacteristic(DomainError):
    pass


class DegenerateClassification(DomainError):
    pass


class StepFailure(KdsError, RuntimeError):
    def __init__(self, message, last_state=None, last_s=None):
        super().__init__(message)
        self.last_state = last_state
        self.last_s = last_s


class SampleConstructionFailure(KdsError, RuntimeError):
    pass
