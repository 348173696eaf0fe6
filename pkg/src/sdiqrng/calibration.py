"""Variance-vs-power calibration of the homodyne noise model.

Vacuum-input variance (raw analog units squared) is an affine function of
the LO power: ``variance = m * power + intercept``, where the gradient m is
the shot-noise conversion gain and the intercept is the electronic noise.
An ordinary least-squares fit over a sweep of at least ``min_points``
distinct powers spanning a factor of two provides m with a standard error;
the certified bin width uses the conservative gradient
``m - conservatism * stderr`` so that fit uncertainty can only shrink the
claimed entropy:

    delta              = adc_step / sqrt(2 * m * operating_power)
    delta_conservative = adc_step / sqrt(2 * (m - k * se_m) * operating_power)

The recalibration scheduler is a pure function of explicit timestamps and
the calibration history; it never reads the wall clock, so runs replay
deterministically.  Results append to a line-oriented text log (one CSV
line per calibration, ISO timestamp first).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .detector import vacuum_unit_resolution
from .entropy import vacuum_min_entropy
from .exceptions import CalibrationError

__all__ = [
    "CalibrationPoint",
    "CalibrationResult",
    "fit_calibration",
    "RecalibrationPolicy",
    "recalibration_decision",
    "append_log",
    "read_log",
]

MIN_SAMPLES_PER_POINT = 10_000


@dataclass(frozen=True)
class CalibrationPoint:
    """One sweep point: vacuum-input variance at a given LO power.

    ``variance`` is the filtered-sample variance in raw analog units
    squared (codes times the ADC step).
    """

    power: float
    variance: float
    n_samples: int

    def __post_init__(self):
        if self.power <= 0 or not math.isfinite(self.power):
            raise ValueError("power must be positive and finite")
        if self.variance <= 0 or not math.isfinite(self.variance):
            raise ValueError("variance must be positive and finite")
        if self.n_samples < MIN_SAMPLES_PER_POINT:
            raise ValueError(
                f"need at least {MIN_SAMPLES_PER_POINT} samples per point, "
                f"got {self.n_samples}")


@dataclass(frozen=True)
class CalibrationResult:
    gradient: float
    intercept: float
    gradient_stderr: float
    intercept_stderr: float
    r_squared: float
    operating_power: float
    adc_step: float
    delta: float
    delta_conservative: float
    h_min_bits: float
    intercept_suspicious: bool
    timestamp: float


def fit_calibration(points, adc_step: float, *, operating_power: float | None = None,
                    min_points: int = 5, conservatism: float = 2.0,
                    timestamp: float = 0.0) -> CalibrationResult:
    """OLS fit of variance against power; derives the certified bin width.

    Parameters
    ----------
    points : sequence of CalibrationPoint
        At least ``min_points`` distinct powers whose span (max/min) is at
        least 2; equal per-point sample counts are enforced so the
        unweighted fit is valid.
    adc_step : float
        Digitizer step in raw analog units.
    operating_power : float, optional
        Power at which extraction will run; defaults to the largest swept
        power.
    conservatism : float
        Number of gradient standard errors subtracted before converting to
        a bin width (default 2).

    Raises CalibrationError when the sweep is degenerate or when the
    conservative gradient is not positive.
    """
    points = list(points)
    if min_points < 3:
        raise ValueError("min_points must be at least 3")
    powers = np.array([p.power for p in points])
    variances = np.array([p.variance for p in points])
    if len({p.n_samples for p in points}) > 1:
        raise CalibrationError("per-point sample counts must be equal for the OLS fit")
    distinct = np.unique(powers)
    if distinct.size < min_points:
        raise CalibrationError(
            f"need {min_points} distinct powers, got {distinct.size}")
    if distinct.max() / distinct.min() < 2.0:
        raise CalibrationError(
            f"power span {distinct.max() / distinct.min():.3f}x is below the required 2x")
    if adc_step <= 0:
        raise ValueError("adc_step must be positive")
    if conservatism < 0:
        raise ValueError("conservatism must be non-negative")

    n = powers.size
    x_mean = powers.mean()
    y_mean = variances.mean()
    sxx = float(np.sum((powers - x_mean) ** 2))
    sxy = float(np.sum((powers - x_mean) * (variances - y_mean)))
    gradient = float(sxy / sxx)
    intercept = float(y_mean - gradient * x_mean)
    residuals = variances - (intercept + gradient * powers)
    ssr = float(np.sum(residuals ** 2))
    sst = float(np.sum((variances - y_mean) ** 2))
    # residual variance with the exact-fit and n==2 corner cases pinned to 0
    s2 = ssr / (n - 2) if n > 2 else 0.0
    gradient_stderr = math.sqrt(s2 / sxx)
    intercept_stderr = math.sqrt(s2 * (1.0 / n + x_mean ** 2 / sxx))
    r_squared = 1.0 if sst == 0.0 else 1.0 - ssr / sst

    conservative_gradient = gradient - conservatism * gradient_stderr
    if conservative_gradient <= 0.0:
        raise CalibrationError(
            f"conservative gradient {conservative_gradient} <= 0: sweep does not "
            "support a positive shot-noise slope")
    power_op = float(operating_power if operating_power is not None else powers.max())
    delta = vacuum_unit_resolution(adc_step, gradient, power_op)
    delta_conservative = vacuum_unit_resolution(adc_step, conservative_gradient, power_op)
    suspicious = intercept < -2.0 * intercept_stderr
    h_min = vacuum_min_entropy(delta_conservative).h_min_bits
    return CalibrationResult(
        gradient=gradient, intercept=intercept,
        gradient_stderr=gradient_stderr, intercept_stderr=intercept_stderr,
        r_squared=r_squared, operating_power=power_op, adc_step=adc_step,
        delta=delta, delta_conservative=delta_conservative, h_min_bits=h_min,
        intercept_suspicious=suspicious, timestamp=float(timestamp))


@dataclass(frozen=True)
class RecalibrationPolicy:
    """Recalibrate after ``interval_seconds``; alarm on relative H_min drift."""

    interval_seconds: float = 600.0
    drift_threshold: float = 0.02

    def __post_init__(self):
        if self.interval_seconds <= 0:
            raise ValueError("interval_seconds must be positive")
        if not 0.0 < self.drift_threshold < 1.0:
            raise ValueError("drift_threshold must lie in (0, 1)")


def recalibration_decision(history, now: float,
                           policy: RecalibrationPolicy) -> str:
    """Return "keep", "recalibrate" or "alarm" for the given instant.

    Alarm dominates: if the two latest calibrations disagree on H_min by
    more than the drift threshold, the pipeline must stop regardless of
    age.  With no history at all the answer is "recalibrate".
    """
    history = sorted(history, key=lambda r: r.timestamp)
    if not history:
        return "recalibrate"
    if len(history) >= 2:
        prev, last = history[-2], history[-1]
        drift = abs(last.h_min_bits - prev.h_min_bits) / prev.h_min_bits
        if drift > policy.drift_threshold:
            return "alarm"
    if now - history[-1].timestamp >= policy.interval_seconds:
        return "recalibrate"
    if now < history[-1].timestamp:
        raise ValueError("decision instant precedes the latest calibration")
    return "keep"


_LOG_FIELDS = ("gradient", "intercept", "gradient_stderr", "intercept_stderr",
               "delta", "delta_conservative", "h_min_bits")


def _iso(ts: float) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def append_log(path, result: CalibrationResult) -> None:
    """Append one calibration as a CSV line: ISO timestamp then the fit fields."""
    from ._io import append_line
    fields = [_iso(result.timestamp)] + [repr(getattr(result, f)) for f in _LOG_FIELDS]
    fields.append(repr(result.operating_power))
    fields.append(repr(result.adc_step))
    fields.append(repr(result.timestamp))
    append_line(path, ",".join(fields))


def read_log(path) -> list[CalibrationResult]:
    """Parse the append-only calibration log back into results."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != len(_LOG_FIELDS) + 4:
                raise CalibrationError(f"{path}:{line_no}: malformed log line")
            vals = dict(zip(_LOG_FIELDS, map(float, parts[1:1 + len(_LOG_FIELDS)])))
            out.append(CalibrationResult(
                gradient=vals["gradient"], intercept=vals["intercept"],
                gradient_stderr=vals["gradient_stderr"],
                intercept_stderr=vals["intercept_stderr"],
                r_squared=float("nan"), operating_power=float(parts[-3]),
                adc_step=float(parts[-2]), delta=vals["delta"],
                delta_conservative=vals["delta_conservative"],
                h_min_bits=vals["h_min_bits"],
                intercept_suspicious=False, timestamp=float(parts[-1])))
    return out
