"""Statistical randomness battery for extracted bit streams.

Implements eight of the standard binary randomness tests (ten p-value
statistics in total): monobit frequency, block frequency, runs, longest
run of ones, cumulative sums (forward and backward), spectral, approximate
entropy, and serial (two statistics).  The remaining seven tests of the
usual fifteen-test battery are deliberately not implemented and are listed
by name in every report so downstream tooling cannot mistake a pass here
for full coverage.

Battery semantics: the input stream is split into equal-length strings,
each statistic produces one p-value per string, and a statistic passes
when (a) the fraction of strings with p >= alpha stays above the
three-sigma binomial bound (1-alpha) - 3*sqrt(alpha*(1-alpha)/n_strings)
and (b) the p-values are uniform over ten bins at significance 1e-4 by a
chi-square test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erfc, gammaincc
from scipy.stats import norm

__all__ = [
    "bits_from_bytes",
    "frequency_test",
    "block_frequency_test",
    "runs_test",
    "longest_run_test",
    "cumulative_sums_test",
    "spectral_test",
    "approximate_entropy_test",
    "serial_test",
    "StatisticSummary",
    "BatteryReport",
    "run_battery",
    "UNIMPLEMENTED_TESTS",
]

UNIMPLEMENTED_TESTS = (
    "binary-matrix-rank",
    "non-overlapping-template",
    "overlapping-template",
    "maurer-universal",
    "linear-complexity",
    "random-excursions",
    "random-excursions-variant",
)


def bits_from_bytes(data) -> np.ndarray:
    """Unpack bytes (or a uint8 array) into a 0/1 array, MSB first."""
    arr = np.frombuffer(bytes(data), dtype=np.uint8) if isinstance(
        data, (bytes, bytearray)) else np.asarray(data, dtype=np.uint8)
    return np.unpackbits(arr)


def _check_bits(bits: np.ndarray, minimum: int, name: str) -> np.ndarray:
    bits = np.asarray(bits)
    if bits.ndim != 1:
        raise ValueError(f"{name}: bits must be one-dimensional")
    if bits.size < minimum:
        raise ValueError(f"{name}: need at least {minimum} bits, got {bits.size}")
    if bits.size and (bits.min() < 0 or bits.max() > 1):
        raise ValueError(f"{name}: bits must be 0 or 1")
    return bits.astype(np.int64)


def frequency_test(bits) -> float:
    """Monobit test: erfc(|sum of +-1| / sqrt(2n)).

    The structural minimum here is tiny so the published worked-example
    vectors (10 to 128 bits) stay reproducible; the battery applies the
    recommended per-test minimum lengths when deciding what to run.
    """
    bits = _check_bits(bits, 2, "frequency")
    n = bits.size
    s = abs(int(2 * bits.sum() - n))
    return float(erfc(s / math.sqrt(2.0 * n)))


def block_frequency_test(bits, block_size: int = 128) -> float:
    """Chi-square on per-block ones fractions."""
    m = int(block_size)
    if m < 2:
        raise ValueError("block_size must be >= 2")
    bits = _check_bits(bits, m, "block-frequency")
    n_blocks = bits.size // m
    pi = bits[: n_blocks * m].reshape(n_blocks, m).mean(axis=1)
    chi2 = 4.0 * m * float(np.sum((pi - 0.5) ** 2))
    return float(gammaincc(n_blocks / 2.0, chi2 / 2.0))


def runs_test(bits) -> float:
    """Total number of runs against its expectation under i.i.d. bits."""
    bits = _check_bits(bits, 2, "runs")
    n = bits.size
    pi = bits.mean()
    if abs(pi - 0.5) >= 2.0 / math.sqrt(n):
        return 0.0  # monobit prerequisite failed: runs count is meaningless
    v = 1 + int(np.count_nonzero(bits[1:] != bits[:-1]))
    num = abs(v - 2.0 * n * pi * (1.0 - pi))
    den = 2.0 * math.sqrt(2.0 * n) * pi * (1.0 - pi)
    return float(erfc(num / den))


_LONGEST_RUN_TABLES = (
    # (min_n, block_size, categories (upper edges, last open), probabilities)
    (750_000, 10_000, (10, 11, 12, 13, 14, 15),
     (0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727)),
    (6_272, 128, (4, 5, 6, 7, 8),
     (0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124)),
    (128, 8, (1, 2, 3),
     (0.2148, 0.3672, 0.2305, 0.1875)),
)


def _max_run_per_row(rows: np.ndarray) -> np.ndarray:
    """Longest run of ones in each row of a 0/1 matrix, vectorized."""
    c = np.cumsum(rows, axis=1)
    reset = np.where(rows == 0, c, 0)
    run = c - np.maximum.accumulate(reset, axis=1)
    return run.max(axis=1)


def longest_run_test(bits) -> float:
    """Distribution of the longest run of ones within fixed-size blocks."""
    bits = _check_bits(bits, 128, "longest-run")
    n = bits.size
    for min_n, m, edges, probs in _LONGEST_RUN_TABLES:
        if n >= min_n:
            break
    n_blocks = n // m
    runs = _max_run_per_row(bits[: n_blocks * m].reshape(n_blocks, m))
    lo = edges[0]
    hi = edges[-1] + 1
    cats = np.clip(runs, lo, hi) - lo
    counts = np.bincount(cats, minlength=hi - lo + 1)
    expected = n_blocks * np.asarray(probs)
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    k = len(probs) - 1
    return float(gammaincc(k / 2.0, chi2 / 2.0))


def _trunc_div(a: int, b: int) -> int:
    """Integer division truncating toward zero (C semantics)."""
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b > 0) else -q


def _cusum_pvalue(n: int, z: int) -> float:
    sqrt_n = math.sqrt(n)
    nz = n // z
    k1 = np.arange(_trunc_div(-nz + 1, 4), _trunc_div(nz - 1, 4) + 1)
    term1 = np.sum(norm.cdf((4 * k1 + 1) * z / sqrt_n)
                   - norm.cdf((4 * k1 - 1) * z / sqrt_n))
    k2 = np.arange(_trunc_div(-nz - 3, 4), _trunc_div(nz - 1, 4) + 1)
    term2 = np.sum(norm.cdf((4 * k2 + 3) * z / sqrt_n)
                   - norm.cdf((4 * k2 + 1) * z / sqrt_n))
    return float(np.clip(1.0 - term1 + term2, 0.0, 1.0))


def cumulative_sums_test(bits) -> tuple[float, float]:
    """Maximum excursion of the +-1 random walk, forward and backward."""
    bits = _check_bits(bits, 2, "cumulative-sums")
    x = 2 * bits - 1
    n = bits.size
    z_fwd = int(np.max(np.abs(np.cumsum(x))))
    z_bwd = int(np.max(np.abs(np.cumsum(x[::-1]))))
    return _cusum_pvalue(n, max(z_fwd, 1)), _cusum_pvalue(n, max(z_bwd, 1))


def spectral_test(bits) -> float:
    """Count of low DFT peaks of the +-1 sequence against the 95% threshold."""
    bits = _check_bits(bits, 8, "spectral")
    n = bits.size
    x = 2.0 * bits - 1.0
    mags = np.abs(np.fft.rfft(x))[: n // 2]
    threshold = math.sqrt(math.log(1.0 / 0.05) * n)
    n0 = 0.95 * n / 2.0
    n1 = int(np.count_nonzero(mags < threshold))
    d = (n1 - n0) / math.sqrt(n * 0.95 * 0.05 / 4.0)
    return float(erfc(abs(d) / math.sqrt(2.0)))


def _pattern_counts(bits: np.ndarray, m: int) -> np.ndarray:
    """Counts of all overlapping m-bit patterns with wraparound, length 2^m."""
    if m == 0:
        return np.array([bits.size], dtype=np.int64)
    padded = np.concatenate([bits, bits[: m - 1]])
    weights = 1 << np.arange(m - 1, -1, -1, dtype=np.int64)
    codes = sliding_window_view(padded, m) @ weights
    return np.bincount(codes, minlength=1 << m)


def approximate_entropy_test(bits, block_size: int | None = None) -> float:
    """Compare overlapping pattern frequencies at lengths m and m+1.

    With ``block_size=None`` the block length is min(10, floor(log2 n) - 6)
    so pattern counts stay dense enough for the chi-square approximation.
    An explicit ``block_size`` is honored as given, which keeps the short
    published worked-example vectors reproducible.
    """
    bits = _check_bits(bits, 4, "approximate-entropy")
    n = bits.size
    m = min(10, int(math.floor(math.log2(n))) - 6) if block_size is None \
        else int(block_size)
    if m < 1 or m + 1 >= n:
        raise ValueError("approximate-entropy: sequence too short for the block size")

    def phi(mm: int) -> float:
        counts = _pattern_counts(bits, mm)
        nz = counts[counts > 0].astype(float)
        p = nz / n
        return float(np.sum(p * np.log(p)))

    apen = phi(m) - phi(m + 1)
    chi2 = 2.0 * n * (math.log(2.0) - apen)
    return float(gammaincc(2.0 ** (m - 1), chi2 / 2.0))


def serial_test(bits, block_size: int | None = None) -> tuple[float, float]:
    """First and second differences of the overlapping-pattern statistic.

    With ``block_size=None`` the block length is min(16, floor(log2 n) - 3);
    an explicit ``block_size`` is honored as given.
    """
    bits = _check_bits(bits, 4, "serial")
    n = bits.size
    m = min(16, int(math.floor(math.log2(n))) - 3) if block_size is None \
        else int(block_size)
    if m < 2 or m >= n:
        raise ValueError("serial: sequence too short for the block size")

    def psi_sq(mm: int) -> float:
        if mm == 0:
            return 0.0
        counts = _pattern_counts(bits, mm).astype(float)
        return float((1 << mm) / n * np.sum(counts ** 2) - n)

    p_m, p_m1, p_m2 = psi_sq(m), psi_sq(m - 1), psi_sq(m - 2)
    d1 = p_m - p_m1
    d2 = p_m - 2.0 * p_m1 + p_m2
    pv1 = float(gammaincc(2.0 ** (m - 2), d1 / 2.0))
    pv2 = float(gammaincc(2.0 ** (m - 3), d2 / 2.0))
    return pv1, pv2


# ---------------------------------------------------------------------------
# battery

_MIN_BITS = {
    "frequency": 100,
    "block-frequency": 128,
    "runs": 100,
    "longest-run": 128,
    "cumulative-sums": 100,
    "spectral": 1000,
    "approximate-entropy": 256,
    "serial": 32,
}


@dataclass(frozen=True)
class StatisticSummary:
    """Per-statistic battery outcome across all strings."""

    name: str
    p_values: np.ndarray
    proportion: float
    proportion_bound: float
    uniformity_p: float
    passed: bool


@dataclass(frozen=True)
class BatteryReport:
    n_strings: int
    string_bits: int
    alpha: float
    results: tuple[StatisticSummary, ...]
    skipped: tuple[str, ...]
    unimplemented: tuple[str, ...] = UNIMPLEMENTED_TESTS

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_text(self) -> str:
        width = max(len(r.name) for r in self.results) + 2
        lines = [
            f"strings: {self.n_strings} x {self.string_bits} bits, alpha={self.alpha}",
            f"{'statistic':<{width}}{'proportion':>11}{'bound':>9}"
            f"{'uniformity':>12}  result",
        ]
        for r in self.results:
            lines.append(
                f"{r.name:<{width}}{r.proportion:>11.4f}{r.proportion_bound:>9.4f}"
                f"{r.uniformity_p:>12.6f}  {'pass' if r.passed else 'FAIL'}")
        if self.skipped:
            lines.append("skipped (string too short): " + ", ".join(self.skipped))
        lines.append("not implemented: " + ", ".join(self.unimplemented))
        lines.append(f"overall: {'pass' if self.all_passed else 'FAIL'}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        rows = ["statistic,proportion,proportion_bound,uniformity_p,passed"]
        for r in self.results:
            rows.append(f"{r.name},{r.proportion!r},{r.proportion_bound!r},"
                        f"{r.uniformity_p!r},{int(r.passed)}")
        return "\n".join(rows) + "\n"


def _uniformity_p(p_values: np.ndarray) -> float:
    counts, _ = np.histogram(p_values, bins=10, range=(0.0, 1.0))
    expected = p_values.size / 10.0
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    return float(gammaincc(4.5, chi2 / 2.0))


def run_battery(bits, string_bits: int, *, alpha: float = 0.01) -> BatteryReport:
    """Split ``bits`` into strings and apply every implemented statistic."""
    bits = np.asarray(bits)
    if bits.ndim != 1:
        raise ValueError("bits must be one-dimensional")
    if not 0.0 < alpha < 0.5:
        raise ValueError("alpha must lie in (0, 0.5)")
    if string_bits < 100:
        raise ValueError("string_bits must be >= 100")
    n_strings = bits.size // int(string_bits)
    if n_strings < 10:
        raise ValueError(
            f"need at least 10 strings for proportion statistics, got {n_strings}")
    strings = bits[: n_strings * string_bits].reshape(n_strings, string_bits)

    single = {
        "frequency": frequency_test,
        "block-frequency": block_frequency_test,
        "runs": runs_test,
        "longest-run": longest_run_test,
        "spectral": spectral_test,
        "approximate-entropy": approximate_entropy_test,
    }
    collected: dict[str, list[float]] = {}
    skipped: list[str] = []
    for name, fn in single.items():
        if string_bits < _MIN_BITS[name]:
            skipped.append(name)
            continue
        collected[name] = [fn(row) for row in strings]
    if string_bits >= _MIN_BITS["cumulative-sums"]:
        fwd, bwd = zip(*(cumulative_sums_test(row) for row in strings))
        collected["cumulative-sums-forward"] = list(fwd)
        collected["cumulative-sums-backward"] = list(bwd)
    else:
        skipped.append("cumulative-sums")
    if string_bits >= _MIN_BITS["serial"]:
        s1, s2 = zip(*(serial_test(row) for row in strings))
        collected["serial-1"] = list(s1)
        collected["serial-2"] = list(s2)
    else:
        skipped.append("serial")

    p_hat = 1.0 - alpha
    bound = p_hat - 3.0 * math.sqrt(p_hat * alpha / n_strings)
    results = []
    for name, values in collected.items():
        pv = np.asarray(values, dtype=float)
        proportion = float(np.mean(pv >= alpha))
        uni = _uniformity_p(pv)
        results.append(StatisticSummary(
            name=name, p_values=pv, proportion=proportion,
            proportion_bound=bound, uniformity_p=uni,
            passed=proportion >= bound and uni >= 1e-4))
    return BatteryReport(
        n_strings=n_strings, string_bits=int(string_bits), alpha=float(alpha),
        results=tuple(results), skipped=tuple(skipped))
