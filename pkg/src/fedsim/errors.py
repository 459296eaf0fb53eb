"""Exception types shared across the simulator."""


class FedsimError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(FedsimError):
    """Invalid configuration: inconsistent architecture, bad attack spec, unknown config key."""


class DimensionError(FedsimError):
    """Array shapes do not match what an operation requires."""


class DataError(FedsimError):
    """Dataset violates a precondition (empty, bad labels)."""


class FormatError(FedsimError):
    """A file on disk is not in the expected format."""


class InfeasibilityError(FedsimError):
    """The requested operation has no valid result for these sizes (e.g. more clients than samples)."""


class TrainingError(FedsimError):
    """Training cannot proceed (e.g. single-class training set for a binary classifier)."""
