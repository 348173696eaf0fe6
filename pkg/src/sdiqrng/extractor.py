"""Seeded randomness extraction with binary Toeplitz hashing.

A Toeplitz matrix T over GF(2) with shape (m, n) is defined by a seed of
n + m - 1 bits: ``T[i][j] = seed[i + (n - 1) - j]``.  Hashing is the
matrix-vector product over GF(2).  Output length follows the leftover-hash
budget

    m = floor(N * h_min_per_sample - 2 * log2(1 / epsilon))

for a block of N samples, which keeps the extracted block within trace
distance ``epsilon`` of uniform given the certified min-entropy.
``plan_extraction`` searches for the smallest N whose budget meets the
requested output bits per sample.

Two hashing routes are kept deliberately independent and must agree bit
for bit: a naive GF(2) row-times-vector product (AND then XOR-reduce, no
floating point), and an accelerated path that evaluates all output parities
at once as an integer convolution via FFT (counts are below 2**14 so the
float64 FFT is exact after rounding).

Sample serialization: each ADC code contributes ``bits_per_sample`` bits of
its two's complement representation, most significant bit first; output
bits pack MSB-first into bytes.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import signal as _signal

from .exceptions import InfeasiblePlanError, StaleCalibrationError

__all__ = [
    "ExtractionPlan",
    "plan_extraction",
    "ToeplitzSeed",
    "test_prng_seed",
    "read_seed_file",
    "write_seed_file",
    "toeplitz_hash",
    "serialize_samples",
    "extract_stream",
    "AccountingReport",
    "pack_bits",
    "unpack_bits",
]


@dataclass(frozen=True)
class ExtractionPlan:
    """Frozen extraction geometry for one run."""

    bits_per_sample: int
    h_min_per_sample: float
    epsilon: float
    target_bits_per_sample: float
    samples_per_block: int      # N
    input_bits: int             # n = N * bits_per_sample
    output_bits: int            # m
    seed_bits: int              # n + m - 1

    @property
    def bits_per_sample_effective(self) -> float:
        return self.output_bits / self.samples_per_block

    @property
    def security_bits(self) -> float:
        return -2.0 * math.log2(self.epsilon)


def plan_extraction(bits_per_sample: int, h_min_per_sample: float, epsilon: float,
                    target_bits_per_sample: float) -> ExtractionPlan:
    """Smallest block size N whose leftover-hash budget meets the target.

    Raises InfeasiblePlanError when ``target_bits_per_sample`` is not
    strictly below the certified per-sample min-entropy (the floor penalty
    and the epsilon cost must fit into the gap).
    """
    if not isinstance(bits_per_sample, (int, np.integer)) or not 2 <= bits_per_sample <= 16:
        raise ValueError("bits_per_sample must be an integer in [2, 16]")
    if not 0.0 < h_min_per_sample <= bits_per_sample:
        raise ValueError(
            f"h_min_per_sample must lie in (0, bits_per_sample], got {h_min_per_sample}")
    if not 0.0 < epsilon < 0.5:
        raise ValueError(f"epsilon must lie in (0, 0.5), got {epsilon}")
    if target_bits_per_sample <= 0.0:
        raise ValueError("target_bits_per_sample must be positive")
    if target_bits_per_sample >= h_min_per_sample:
        raise InfeasiblePlanError(
            f"target {target_bits_per_sample} bits/sample >= certified "
            f"{h_min_per_sample} bits/sample")

    security = -2.0 * math.log2(epsilon)
    # analytic start: N * (h - target) >= security; the floor() then forces
    # at most a few extra increments
    n_start = max(1, int(security / (h_min_per_sample - target_bits_per_sample)) - 2)
    tol = 1e-9
    for n_samples in range(n_start, n_start + 10_000_000):
        m = math.floor(n_samples * h_min_per_sample - security)
        if m >= 1 and m >= target_bits_per_sample * n_samples - tol:
            n_bits = n_samples * bits_per_sample
            return ExtractionPlan(
                bits_per_sample=int(bits_per_sample),
                h_min_per_sample=h_min_per_sample, epsilon=epsilon,
                target_bits_per_sample=target_bits_per_sample,
                samples_per_block=n_samples, input_bits=n_bits,
                output_bits=m, seed_bits=n_bits + m - 1)
    raise InfeasiblePlanError("no feasible block size found")  # pragma: no cover


@dataclass(frozen=True)
class ToeplitzSeed:
    """Seed bits plus a provenance tag recorded in the accounting report."""

    bits: np.ndarray
    provenance: str

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 1 or bits.size == 0:
            raise ValueError("seed bits must be a non-empty 1-d array")
        if not np.all((bits == 0) | (bits == 1)):
            raise ValueError("seed bits must be 0/1")

    def __len__(self):
        return self.bits.size


def test_prng_seed(seed_bits: int, rng_seed: int) -> ToeplitzSeed:
    """Deterministic PRNG-derived seed for tests and demos, tagged insecure."""
    if seed_bits <= 0:
        raise ValueError("seed_bits must be positive")
    rng = np.random.default_rng(rng_seed)
    bits = rng.integers(0, 2, size=seed_bits, dtype=np.uint8)
    return ToeplitzSeed(bits=bits, provenance="test-prng-insecure")


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack 0/1 bits MSB-first into uint8 bytes (final byte zero-padded)."""
    return np.packbits(np.asarray(bits, dtype=np.uint8))


def unpack_bits(data: bytes | np.ndarray, n_bits: int) -> np.ndarray:
    arr = np.frombuffer(bytes(data), dtype=np.uint8)
    bits = np.unpackbits(arr)
    if bits.size < n_bits:
        raise ValueError(f"need {n_bits} bits, buffer holds {bits.size}")
    return bits[:n_bits]


def write_seed_file(path, seed: ToeplitzSeed) -> None:
    from ._io import write_bytes_atomic
    write_bytes_atomic(path, pack_bits(seed.bits).tobytes())


def read_seed_file(path, seed_bits: int) -> ToeplitzSeed:
    """Load a raw binary seed; the byte length must be exactly ceil(bits/8)."""
    with open(path, "rb") as fh:
        data = fh.read()
    expect = (seed_bits + 7) // 8
    if len(data) != expect:
        raise ValueError(
            f"{path}: seed file holds {len(data)} bytes, need exactly {expect} "
            f"for {seed_bits} bits")
    return ToeplitzSeed(bits=unpack_bits(data, seed_bits), provenance=f"file:{path}")


def _check_hash_args(x: np.ndarray, seed: np.ndarray, m: int) -> None:
    if x.ndim != 1 or x.size == 0:
        raise ValueError("input bits must be a non-empty 1-d array")
    if m < 1:
        raise ValueError("output length m must be >= 1")
    if seed.size != x.size + m - 1:
        raise ValueError(
            f"seed length {seed.size} != n + m - 1 = {x.size + m - 1}")
    for name, arr in (("input", x), ("seed", seed)):
        if not np.all((arr == 0) | (arr == 1)):
            raise ValueError(f"{name} bits must be 0/1")


def _toeplitz_naive(x: np.ndarray, seed: np.ndarray, m: int,
                    chunk: int = 2048) -> np.ndarray:
    """Reference route: explicit rows, AND, XOR-reduce.  Pure GF(2)."""
    n = x.size
    windows = sliding_window_view(seed, n)  # windows[i] = seed[i : i + n]
    out = np.empty(m, dtype=np.uint8)
    for start in range(0, m, chunk):
        stop = min(start + chunk, m)
        rows = windows[start:stop, ::-1]     # row i of T = reversed window i
        out[start:stop] = np.bitwise_xor.reduce(rows & x, axis=1)
    return out


def _toeplitz_fft(x: np.ndarray, seed: np.ndarray, m: int) -> np.ndarray:
    """Accelerated route: every output parity is a coefficient of conv(seed, x)."""
    n = x.size
    counts = _signal.fftconvolve(seed.astype(float), x.astype(float))
    counts = np.rint(counts[n - 1:n - 1 + m]).astype(np.int64)
    return (counts & 1).astype(np.uint8)


def toeplitz_hash(input_bits, seed: ToeplitzSeed | np.ndarray, m: int, *,
                  method: str = "fft") -> np.ndarray:
    """GF(2) Toeplitz hash of ``input_bits`` down to ``m`` bits.

    ``method`` picks the route: "fft" (default) or "naive" (the reference
    oracle).  The two are bit-identical; tests enforce it across sizes.
    """
    x = np.asarray(input_bits, dtype=np.uint8)
    s = np.asarray(seed.bits if isinstance(seed, ToeplitzSeed) else seed, dtype=np.uint8)
    _check_hash_args(x, s, m)
    if method == "naive":
        return _toeplitz_naive(x, s, m)
    if method == "fft":
        return _toeplitz_fft(x, s, m)
    raise ValueError(f"unknown method {method!r}")


def serialize_samples(codes: np.ndarray, bits_per_sample: int) -> np.ndarray:
    """Two's complement bits of each code, MSB first, concatenated."""
    codes = np.asarray(codes)
    if not 2 <= bits_per_sample <= 16:
        raise ValueError("bits_per_sample must be in [2, 16]")
    lo = -(1 << (bits_per_sample - 1))
    hi = (1 << (bits_per_sample - 1)) - 1
    if codes.size and (codes.min() < lo or codes.max() > hi):
        raise ValueError(f"codes outside the {bits_per_sample}-bit two's complement range")
    wrapped = (codes.astype(np.int64) & ((1 << bits_per_sample) - 1)).astype(np.uint16)
    if bits_per_sample == 8:
        return np.unpackbits(wrapped.astype(np.uint8))
    shifts = np.arange(bits_per_sample - 1, -1, -1, dtype=np.uint16)
    return ((wrapped[:, None] >> shifts[None, :]) & 1).astype(np.uint8).ravel()


@dataclass(frozen=True)
class AccountingReport:
    """Entropy bookkeeping for one extraction run."""

    samples_in: int
    samples_used: int
    blocks: int
    raw_bits: int
    output_bits: int
    bits_per_sample_effective: float
    h_min_per_sample: float
    epsilon: float
    seed_provenance: str
    pulse_rate: float
    clipped_samples: int

    @property
    def equivalent_rate_bits_per_s(self) -> float:
        return self.pulse_rate * self.bits_per_sample_effective

    def budget_slack_bits(self, plan: ExtractionPlan) -> float:
        """Leftover-hash slack per block: N*h - 2*log2(1/eps) - m >= 0."""
        return (plan.samples_per_block * plan.h_min_per_sample
                - plan.security_bits - plan.output_bits)

    def to_text(self) -> str:
        lines = [
            f"samples_in: {self.samples_in}",
            f"samples_used: {self.samples_used}",
            f"blocks: {self.blocks}",
            f"raw_bits: {self.raw_bits}",
            f"output_bits: {self.output_bits}",
            f"bits_per_sample_effective: {self.bits_per_sample_effective!r}",
            f"h_min_per_sample: {self.h_min_per_sample!r}",
            f"epsilon: {self.epsilon!r}",
            f"seed_provenance: {self.seed_provenance}",
            f"pulse_rate_hz: {self.pulse_rate!r}",
            f"equivalent_rate_bits_per_s: {self.equivalent_rate_bits_per_s!r}",
            f"clipped_samples: {self.clipped_samples}",
        ]
        return "\n".join(lines) + "\n"


def extract_stream(blocks, plan: ExtractionPlan, seed: ToeplitzSeed, *,
                   scheduler_decision: str = "keep", threads: int = 1,
                   method: str = "fft") -> tuple[np.ndarray, AccountingReport]:
    """Hash a sequence of raw sample blocks into near-uniform output bits.

    ``blocks`` is an iterable of detector.RawSampleBlock.  Samples are
    concatenated, cut into plan-sized blocks (a trailing partial block is
    discarded and accounted), serialized, hashed with the shared seed and
    concatenated in input order.  Returns (packed bytes as uint8 array,
    report).

    Extraction refuses to run when the recalibration scheduler demanded
    attention: ``scheduler_decision`` of "recalibrate" or "alarm" raises
    StaleCalibrationError.
    """
    if scheduler_decision not in ("keep", "recalibrate", "alarm"):
        raise ValueError(f"unknown scheduler decision {scheduler_decision!r}")
    if scheduler_decision != "keep":
        raise StaleCalibrationError(
            f"calibration scheduler said {scheduler_decision!r}; refusing to extract")
    if len(seed) != plan.seed_bits:
        raise ValueError(f"seed has {len(seed)} bits, plan needs {plan.seed_bits}")
    if threads < 1:
        raise ValueError("threads must be >= 1")

    blocks = list(blocks)
    if not blocks:
        raise ValueError("no input blocks")
    pulse_rate = blocks[0].config.pulse_rate
    clipped = 0
    for b in blocks:
        if b.config.adc_bits != plan.bits_per_sample:
            raise ValueError(
                f"block carries {b.config.adc_bits}-bit codes, plan expects "
                f"{plan.bits_per_sample}")
        clipped += b.clipped
    codes = np.concatenate([np.asarray(b.codes) for b in blocks])
    n_samples = codes.size
    n_blocks = n_samples // plan.samples_per_block
    if n_blocks == 0:
        raise ValueError(
            f"{n_samples} samples cannot fill one block of {plan.samples_per_block}")
    used = n_blocks * plan.samples_per_block
    chunks = codes[:used].reshape(n_blocks, plan.samples_per_block)

    def hash_one(chunk: np.ndarray) -> np.ndarray:
        bits = serialize_samples(chunk, plan.bits_per_sample)
        return toeplitz_hash(bits, seed, plan.output_bits, method=method)

    if threads == 1:
        outputs = [hash_one(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(hash_one, chunks))

    out_bits = np.concatenate(outputs) if outputs else np.zeros(0, np.uint8)
    report = AccountingReport(
        samples_in=n_samples, samples_used=used, blocks=n_blocks,
        raw_bits=used * plan.bits_per_sample, output_bits=int(out_bits.size),
        bits_per_sample_effective=plan.bits_per_sample_effective,
        h_min_per_sample=plan.h_min_per_sample, epsilon=plan.epsilon,
        seed_provenance=seed.provenance, pulse_rate=pulse_rate,
        clipped_samples=clipped)
    return pack_bits(out_bits), report
