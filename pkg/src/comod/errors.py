"""Exception types shared across the engine."""


class ModerationError(Exception):
    """Base class for all engine errors."""


class EmptyAnnotations(ModerationError):
    """An annotation record carries no votes."""


class DomainError(ModerationError):
    """A numeric argument is outside its admissible range."""


class EmptyCalibration(ModerationError):
    """Calibration was attempted with no calibration examples."""


class CalibrationMismatch(ModerationError):
    """A prediction routine was handed a calibration built for another method."""


class MissingClass(ModerationError):
    """Class-conditional calibration requires every class to appear at least once."""


class InfeasibleRisk(ModerationError):
    """No threshold satisfies the risk bound (alpha too small for n)."""


class ConfigError(ModerationError):
    """Invalid configuration value."""


class SchemaError(ModerationError):
    """Input data violates the expected schema."""


class EmptyDataset(ModerationError):
    """An operation that needs data received none."""


class DivergenceError(ModerationError):
    """Training produced a non-finite loss."""


class UndefinedMetric(ModerationError):
    """The metric is undefined on the given records (e.g. empty group, zero variance)."""


class UnreachableTarget(ModerationError):
    """No flagging threshold reaches the requested true positive rate."""


class PolicyError(ModerationError):
    """Routing inputs are inconsistent with the active policy."""


class DuplicateId(ModerationError):
    """Two records in one dataset share an id."""


class InvalidProbability(ModerationError):
    """A probability vector violates its simplex constraint beyond tolerance."""


class VersionError(ModerationError):
    """A persisted document was written under an unsupported schema version."""


class IntegrityError(ModerationError):
    """A persisted document failed its checksum or is structurally corrupt."""
