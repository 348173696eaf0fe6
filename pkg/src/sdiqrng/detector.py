"""Pulsed homodyne detector and ADC model.

One sample per local-oscillator pulse: the quadrature outcome ``q`` (vacuum
units) is scaled to the analog front-end as

    analog = q * sqrt(2 * conversion_gain * lo_power) + N(0, electronic) + N(0, excess)

so that the vacuum contribution to the analog variance is exactly
``conversion_gain * lo_power``.  The digitizer is a signed ``adc_bits``
converter covering the peak-to-peak range ``adc_full_scale``:

    step  = adc_full_scale / 2**adc_bits
    code  = round-half-away-from-zero(analog / step), saturating into the
            edge codes [-2**(b-1), 2**(b-1)-1]; saturated samples are counted.

One vacuum unit of quadrature therefore spans sqrt(2 * gain * power) analog
units, which is where the bin-width conversion

    delta = step / sqrt(2 * m * power)

comes from (``m`` is the calibrated variance-vs-power gradient).

Raw blocks serialize to a little-endian binary format with a fixed 8-line
ASCII header (magic, version, bits, count, config hash, run id, timestamp,
terminator) or to a one-code-per-line CSV for debugging.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import states
from .states import QuantumStateModel

__all__ = [
    "FixedPhase",
    "UniformRandomPhase",
    "WrappedGaussianPhase",
    "MeasurementConfig",
    "RawSampleBlock",
    "draw_phases",
    "measure_block",
    "quantize",
    "requantize",
    "adc_resolution_vacuum_units",
    "vacuum_unit_resolution",
    "write_block",
    "read_block",
    "write_block_csv",
]

_MAGIC = "SDIQRNG-BLOCK"
_VERSION = "1"


@dataclass(frozen=True)
class FixedPhase:
    theta: float = 0.0


@dataclass(frozen=True)
class UniformRandomPhase:
    """Fresh uniform LO phase on [0, 2*pi) for every pulse."""


@dataclass(frozen=True)
class WrappedGaussianPhase:
    """Imperfect randomization: wrapped normal around ``center`` with ``width`` sd."""

    center: float = 0.0
    width: float = 0.1


PhasePolicy = FixedPhase | UniformRandomPhase | WrappedGaussianPhase


@dataclass(frozen=True)
class MeasurementConfig:
    """Static description of one measurement run.

    lo_power is in the calibration's power units (typically W); the pulse
    rate only enters rate bookkeeping, never the per-sample statistics.
    """

    lo_phase_policy: PhasePolicy = field(default_factory=UniformRandomPhase)
    lo_power: float = 1.0
    pulse_rate: float = 50e6
    adc_bits: int = 8
    adc_full_scale: float = 160.0
    electronic_noise_var: float = 0.0
    excess_noise_var: float = 0.0
    excess_noise_tracks_power: bool = False
    conversion_gain: float = 136.0

    def __post_init__(self):
        if self.lo_power <= 0 or not math.isfinite(self.lo_power):
            raise ValueError("lo_power must be positive and finite")
        if self.pulse_rate <= 0:
            raise ValueError("pulse_rate must be positive")
        if not 2 <= self.adc_bits <= 16:
            raise ValueError("adc_bits must be between 2 and 16")
        if self.adc_full_scale <= 0:
            raise ValueError("adc_full_scale must be positive")
        if self.electronic_noise_var < 0 or self.excess_noise_var < 0:
            raise ValueError("noise variances cannot be negative")
        if self.conversion_gain <= 0:
            raise ValueError("conversion_gain must be positive")

    @property
    def adc_step(self) -> float:
        return self.adc_full_scale / 2 ** self.adc_bits

    @property
    def code_min(self) -> int:
        return -(2 ** (self.adc_bits - 1))

    @property
    def code_max(self) -> int:
        return 2 ** (self.adc_bits - 1) - 1

    def content_hash(self) -> str:
        text = repr(sorted(self.__dict__.items(), key=lambda kv: kv[0]))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class RawSampleBlock:
    """A contiguous run of ADC codes plus the config that produced them."""

    codes: np.ndarray
    config: MeasurementConfig
    run_id: str = "run"
    timestamp: str = "1970-01-01T00:00:00Z"
    clipped: int = 0

    def __post_init__(self):
        codes = np.asarray(self.codes)
        if codes.ndim != 1 or codes.size == 0:
            raise ValueError("codes must be a non-empty 1-d array")
        if codes.min() < self.config.code_min or codes.max() > self.config.code_max:
            raise ValueError("codes outside the ADC range for this config")
        if self.clipped < 0:
            raise ValueError("clipped count cannot be negative")

    def __len__(self):
        return self.codes.size


def quantize(analog: np.ndarray, config: MeasurementConfig) -> tuple[np.ndarray, int]:
    """Digitize analog values; returns (codes, clipped_count).

    Round half away from zero, then saturate into the edge codes.
    """
    scaled = np.asarray(analog, dtype=float) / config.adc_step
    codes = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    clipped = int(np.count_nonzero((codes < config.code_min) | (codes > config.code_max)))
    codes = np.clip(codes, config.code_min, config.code_max)
    return codes.astype(np.int16), clipped


def draw_phases(policy: PhasePolicy, count: int,
                rng: np.random.Generator) -> np.ndarray:
    """One LO phase per pulse according to the configured policy."""
    match policy:
        case FixedPhase(theta=th):
            return np.full(count, th % (2 * math.pi))
        case UniformRandomPhase():
            return rng.uniform(0.0, 2.0 * math.pi, count)
        case WrappedGaussianPhase(center=c, width=w):
            return rng.normal(c, w, count) % (2.0 * math.pi)
        case _:
            raise ValueError(f"unknown phase policy {policy!r}")


def measure_block(state: QuantumStateModel, config: MeasurementConfig, count: int,
                  rng: np.random.Generator, *, run_id: str = "run",
                  timestamp: str = "1970-01-01T00:00:00Z") -> RawSampleBlock:
    """Simulate ``count`` pulses of homodyne detection of ``state``.

    Per pulse: draw the LO phase from the policy, draw the quadrature,
    scale to analog units, add electronic and excess noise, digitize.
    """
    states.validate_state(state)
    if count <= 0:
        raise ValueError("count must be positive")
    theta = draw_phases(config.lo_phase_policy, count, rng)
    q = states.sample_quadrature(state, theta, rng, size=count)
    analog = q * math.sqrt(2.0 * config.conversion_gain * config.lo_power)
    if config.electronic_noise_var > 0:
        analog = analog + rng.normal(0.0, math.sqrt(config.electronic_noise_var), count)
    excess = config.excess_noise_var
    if config.excess_noise_tracks_power:
        excess = excess * config.lo_power
    if excess > 0:
        analog = analog + rng.normal(0.0, math.sqrt(excess), count)
    codes, clipped = quantize(analog, config)
    return RawSampleBlock(codes=codes, config=config, run_id=run_id,
                          timestamp=timestamp, clipped=clipped)


def vacuum_unit_resolution(adc_step: float, gradient: float, power: float) -> float:
    """ADC bin width re-expressed in vacuum units: step / sqrt(2 * m * power)."""
    if adc_step <= 0:
        raise ValueError("adc_step must be positive")
    if gradient <= 0 or not math.isfinite(gradient):
        raise ValueError(f"calibration gradient must be positive, got {gradient!r}")
    if power <= 0 or not math.isfinite(power):
        raise ValueError(f"operating power must be positive, got {power!r}")
    return adc_step / math.sqrt(2.0 * gradient * power)


def adc_resolution_vacuum_units(config: MeasurementConfig, gradient: float,
                                power: float) -> float:
    """Bin width delta in vacuum units for this digitizer at a calibrated gradient."""
    return vacuum_unit_resolution(config.adc_step, gradient, power)


# ---------------------------------------------------------------------------
# serialization

def _header_lines(block: RawSampleBlock) -> list[str]:
    return [
        _MAGIC,
        _VERSION,
        f"bits={block.config.adc_bits}",
        f"count={len(block)}",
        f"config={block.config.content_hash()}",
        f"run={block.run_id}",
        f"created={block.timestamp}",
        "---",
    ]


def _payload_dtype(bits: int) -> np.dtype:
    return np.dtype("<i1") if bits <= 8 else np.dtype("<i2")


def block_to_bytes(block: RawSampleBlock) -> bytes:
    header = "\n".join(_header_lines(block)) + "\n"
    payload = np.asarray(block.codes).astype(_payload_dtype(block.config.adc_bits))
    return header.encode("ascii") + payload.tobytes()


def write_block(path, block: RawSampleBlock) -> None:
    from ._io import write_bytes_atomic
    write_bytes_atomic(path, block_to_bytes(block))


def read_block(path, config: MeasurementConfig) -> RawSampleBlock:
    """Read a binary block; the header is validated against ``config``."""
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 8)
    if len(parts) < 9:
        raise ValueError(f"{path}: truncated block header")
    lines = [p.decode("ascii", "replace") for p in parts[:8]]
    if lines[0] != _MAGIC:
        raise ValueError(f"{path}: bad magic {lines[0]!r}")
    if lines[1] != _VERSION:
        raise ValueError(f"{path}: unsupported version {lines[1]!r}")
    bits = int(lines[2].removeprefix("bits="))
    count = int(lines[3].removeprefix("count="))
    cfg_hash = lines[4].removeprefix("config=")
    if bits != config.adc_bits:
        raise ValueError(f"{path}: header bits {bits} != config bits {config.adc_bits}")
    if cfg_hash != config.content_hash():
        raise ValueError(f"{path}: config hash mismatch")
    if lines[7] != "---":
        raise ValueError(f"{path}: malformed header terminator")
    codes = np.frombuffer(parts[8], dtype=_payload_dtype(bits))
    if codes.size != count:
        raise ValueError(f"{path}: payload has {codes.size} codes, header says {count}")
    return RawSampleBlock(codes=codes.astype(np.int16), config=config,
                          run_id=lines[5].removeprefix("run="),
                          timestamp=lines[6].removeprefix("created="))


def write_block_csv(path, block: RawSampleBlock) -> None:
    from ._io import write_text_atomic
    body = "\n".join(str(int(c)) for c in block.codes) + "\n"
    write_text_atomic(path, body)


def requantize(filtered: np.ndarray, block: RawSampleBlock) -> RawSampleBlock:
    """Map filtered analog-domain samples back onto the ADC grid.

    Filtering happens on dequantized values (codes * step); the extractor
    consumes integer codes, so the filtered stream is re-digitized with the
    same step and saturation rules.
    """
    codes, clipped = quantize(np.asarray(filtered, dtype=float), block.config)
    return replace(block, codes=codes, clipped=block.clipped + clipped)
