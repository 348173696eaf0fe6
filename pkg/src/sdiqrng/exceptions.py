"""Typed errors shared across the toolkit, mapped to CLI exit codes."""


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration (CLI exit code 2)."""


class CalibrationError(RuntimeError):
    """Calibration cannot produce a usable noise model (CLI exit code 3)."""


class StaleCalibrationError(CalibrationError):
    """Scheduler demands recalibration or raised an alarm; extraction refused."""


class InfeasiblePlanError(ValueError):
    """Requested extraction target exceeds the certified entropy (exit code 4)."""


class SecurityModelViolation(AssertionError):
    """A certified mathematical property failed verification (exit code 5)."""
