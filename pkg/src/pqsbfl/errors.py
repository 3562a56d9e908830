"""Exception types shared across the simulator."""


class PqsBflError(Exception):
    """Base class for all simulator errors."""


# -- signature suite --------------------------------------------------------

class UnsupportedScheme(PqsBflError):
    """The requested signature backend is not available in this build."""


class MalformedKey(PqsBflError):
    """A key pair is missing material or carries wrong-sized encodings."""


class SchemeMismatch(PqsBflError):
    """A signature's scheme tag disagrees with the scheme it is checked under."""


# -- federated core ---------------------------------------------------------

class InvalidDimensions(PqsBflError):
    """Dataset dimensions violate the generator's preconditions."""


class TooManyClients(PqsBflError):
    """More partitions requested than there are samples."""


class LayoutMismatch(PqsBflError):
    """Model parameter layouts disagree between operands."""


class EmptyUpdateSet(PqsBflError):
    """Aggregation was asked to average zero client updates."""


# -- ledger -----------------------------------------------------------------

class UnregisteredClient(PqsBflError):
    """A transaction came from an address with no registered key."""


class InfeasibleCalibration(PqsBflError):
    """Gas targets are too small to leave a nonnegative verification cost."""


# -- protocol ---------------------------------------------------------------

class NoVerifiedUpdates(PqsBflError):
    """Every client submission in a round was rejected; the round is aborted."""


class ZeroDenominator(PqsBflError):
    """Overhead ratio requested with a nonpositive time denominator."""


class NotApplicable(PqsBflError):
    """A blockchain-only metric was requested for a no-blockchain run."""


# -- benchmark CLI ----------------------------------------------------------

class ParseError(PqsBflError):
    """A config file or flag could not be parsed."""


class ValidationError(PqsBflError):
    """One or more config constraints are violated.

    ``violations`` lists every failed constraint, not just the first.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class InsufficientPoints(PqsBflError):
    """A scaling dataset needs at least two distinct client counts."""
