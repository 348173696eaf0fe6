"""Tests for extraction planning and Toeplitz hashing.

The hashing oracle here is a deliberately naive pure-Python double loop
over T[i][j] = seed[i + (n-1) - j]; the package's two vectorized routes
must agree with it bit for bit.  Plan sizes are re-derived by a brute
search over block sizes.
"""

import math

import numpy as np
import pytest

from sdiqrng.detector import MeasurementConfig, RawSampleBlock
from sdiqrng.exceptions import InfeasiblePlanError, StaleCalibrationError
from sdiqrng.extractor import (
    AccountingReport,
    ExtractionPlan,
    ToeplitzSeed,
    extract_stream,
    pack_bits,
    plan_extraction,
    read_seed_file,
    serialize_samples,
    test_prng_seed as prng_seed,
    toeplitz_hash,
    unpack_bits,
    write_seed_file,
)


def oracle_toeplitz(x_bits, seed_bits, m):
    """Definitional GF(2) product, one scalar at a time."""
    x = [int(b) for b in x_bits]
    s = [int(b) for b in seed_bits]
    n = len(x)
    out = []
    for i in range(m):
        acc = 0
        for j in range(n):
            acc ^= s[i + (n - 1) - j] & x[j]
        out.append(acc)
    return np.array(out, dtype=np.uint8)


def oracle_plan_block_size(h_min, security, target):
    n = 1
    while True:
        m = math.floor(n * h_min - security)
        if m >= 1 and m >= target * n - 1e-9:
            return n, m
        n += 1


def _code_blocks(rng, sizes, clipped=None):
    cfg = MeasurementConfig()
    clipped = clipped or [0] * len(sizes)
    return [RawSampleBlock(codes=rng.integers(-128, 128, s, dtype=np.int16),
                           config=cfg, clipped=c)
            for s, c in zip(sizes, clipped)]


def test_plan_operating_point():
    plan = plan_extraction(8, 5.53, 2.0 ** -100, 5.4)
    assert plan.samples_per_block == 1540
    assert plan.output_bits == 8316
    assert plan.input_bits == 12320
    assert plan.seed_bits == 12320 + 8316 - 1
    assert plan.bits_per_sample_effective == pytest.approx(5.4, abs=1e-12)
    assert plan.security_bits == pytest.approx(200.0, abs=1e-9)
    n_oracle, m_oracle = oracle_plan_block_size(5.53, 200.0, 5.4)
    assert (plan.samples_per_block, plan.output_bits) == (n_oracle, m_oracle)
    # one block smaller fails its own floor inequality (5.4*1539 = 8310.6
    # but only 8310 bits fit), which is why 1540 is the first feasible size
    assert math.floor(1539 * 5.53 - 200.0) < 5.4 * 1539 - 1e-9


def test_plan_integer_entropy_example():
    plan = plan_extraction(8, 8.0, 2.0 ** -100, 7.9)
    assert plan.samples_per_block == 2000
    assert plan.output_bits == 15800
    assert plan.bits_per_sample_effective == pytest.approx(7.9, abs=1e-12)


def test_plan_search_property_grid():
    for h_min, gap in ((1.7, 0.1), (3.3, 0.37), (5.53, 0.13), (7.2, 0.25)):
        for eps_log2 in (-64, -100):
            target = h_min - gap
            plan = plan_extraction(8, h_min, 2.0 ** eps_log2, target)
            security = -2.0 * eps_log2
            n, m = plan.samples_per_block, plan.output_bits
            assert m == math.floor(n * h_min - security)
            assert m >= target * n - 1e-9
            assert plan.seed_bits == plan.input_bits + m - 1
            assert plan.input_bits == 8 * n
            n_oracle, m_oracle = oracle_plan_block_size(h_min, security,
                                                        target)
            assert (n, m) == (n_oracle, m_oracle)


def test_plan_rejections():
    with pytest.raises(InfeasiblePlanError):
        plan_extraction(8, 5.53, 2.0 ** -100, 5.53)
    with pytest.raises(InfeasiblePlanError):
        plan_extraction(8, 5.53, 2.0 ** -100, 6.0)
    for eps in (0.0, 0.5, 0.7, -0.1):
        with pytest.raises(ValueError):
            plan_extraction(8, 5.53, eps, 5.4)
    for bits in (1, 17, 8.0):
        with pytest.raises(ValueError):
            plan_extraction(bits, 5.53, 2.0 ** -100, 5.4)
    with pytest.raises(ValueError):
        plan_extraction(8, 9.0, 2.0 ** -100, 5.4)  # h_min above bit depth
    with pytest.raises(ValueError):
        plan_extraction(8, 5.53, 2.0 ** -100, 0.0)


def test_hash_hand_example():
    x = [1, 0, 1, 1]
    seed = [1, 0, 1, 1, 0]
    # rows of T are [1,1,0,1] and [0,1,1,0]; parities of x against them
    want = np.array([0, 1], dtype=np.uint8)
    np.testing.assert_array_equal(toeplitz_hash(x, np.array(seed), 2,
                                                method="naive"), want)
    np.testing.assert_array_equal(toeplitz_hash(x, np.array(seed), 2,
                                                method="fft"), want)
    np.testing.assert_array_equal(oracle_toeplitz(x, seed, 2), want)


def test_hash_zero_input_maps_to_zero():
    rng = np.random.default_rng(3)
    seed = rng.integers(0, 2, 64 + 32 - 1, dtype=np.uint8)
    x = np.zeros(64, dtype=np.uint8)
    for method in ("naive", "fft"):
        assert not np.any(toeplitz_hash(x, seed, 32, method=method))


def test_hash_linearity_at_operating_width():
    rng = np.random.default_rng(5)
    n, m = 12312, 8312
    seed = rng.integers(0, 2, n + m - 1, dtype=np.uint8)
    for _ in range(100):
        x = rng.integers(0, 2, n, dtype=np.uint8)
        y = rng.integers(0, 2, n, dtype=np.uint8)
        lhs = toeplitz_hash(x ^ y, seed, m)
        rhs = toeplitz_hash(x, seed, m) ^ toeplitz_hash(y, seed, m)
        np.testing.assert_array_equal(lhs, rhs)


def test_fast_route_matches_python_oracle():
    rng = np.random.default_rng(7)
    for _ in range(20):
        n = int(rng.integers(1, 257))
        m = int(rng.integers(1, n + 1))
        x = rng.integers(0, 2, n, dtype=np.uint8)
        seed = rng.integers(0, 2, n + m - 1, dtype=np.uint8)
        want = oracle_toeplitz(x, seed, m)
        np.testing.assert_array_equal(toeplitz_hash(x, seed, m,
                                                    method="naive"), want)
        np.testing.assert_array_equal(toeplitz_hash(x, seed, m,
                                                    method="fft"), want)


def test_routes_agree_across_random_sizes():
    rng = np.random.default_rng(11)
    cases = [(1, 1), (2, 1), (16, 16), (100, 100)]
    while len(cases) < 200:
        n = int(2 ** rng.uniform(0.0, 11.0))
        cases.append((n, int(rng.integers(1, n + 1))))
    for n, m in cases:
        x = rng.integers(0, 2, n, dtype=np.uint8)
        seed = rng.integers(0, 2, n + m - 1, dtype=np.uint8)
        np.testing.assert_array_equal(
            toeplitz_hash(x, seed, m, method="naive"),
            toeplitz_hash(x, seed, m, method="fft"))


def test_hash_argument_validation():
    x = np.ones(8, dtype=np.uint8)
    seed = np.ones(11, dtype=np.uint8)
    with pytest.raises(ValueError):
        toeplitz_hash(x, seed, 5)  # needs 12 seed bits
    with pytest.raises(ValueError):
        toeplitz_hash(x, seed, 0)
    with pytest.raises(ValueError):
        toeplitz_hash(np.array([0, 2, 1]), np.ones(6, np.uint8), 4)
    with pytest.raises(ValueError):
        toeplitz_hash(x, np.array([0, 1, 7] * 4), 5)
    with pytest.raises(ValueError):
        toeplitz_hash(np.zeros(0, np.uint8), seed, 4)
    with pytest.raises(ValueError):
        toeplitz_hash(x, ToeplitzSeed(np.ones(11, np.uint8), "t"), 4,
                      method="banana")


def test_serialize_samples_twos_complement_msb_first():
    got = serialize_samples(np.array([0, 1, -1, -128, 127]), 8)
    want = np.concatenate([
        [0, 0, 0, 0, 0, 0, 0, 0],
        [0, 0, 0, 0, 0, 0, 0, 1],
        [1, 1, 1, 1, 1, 1, 1, 1],
        [1, 0, 0, 0, 0, 0, 0, 0],
        [0, 1, 1, 1, 1, 1, 1, 1],
    ]).astype(np.uint8)
    np.testing.assert_array_equal(got, want)
    np.testing.assert_array_equal(serialize_samples(np.array([-8, 7, -1]), 4),
                                  [1, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1])

    rng = np.random.default_rng(13)
    for bits in (4, 8, 12):
        lo, hi = -(1 << (bits - 1)), (1 << (bits - 1)) - 1
        codes = rng.integers(lo, hi + 1, 50)
        flat = serialize_samples(codes, bits)
        text = "".join(format((int(c) + (1 << bits)) % (1 << bits),
                              f"0{bits}b") for c in codes)
        np.testing.assert_array_equal(flat,
                                      np.array([int(c) for c in text],
                                               dtype=np.uint8))
    with pytest.raises(ValueError):
        serialize_samples(np.array([128]), 8)
    with pytest.raises(ValueError):
        serialize_samples(np.array([0]), 1)


def test_pack_unpack_roundtrip():
    rng = np.random.default_rng(17)
    bits = rng.integers(0, 2, 77, dtype=np.uint8)
    packed = pack_bits(bits)
    assert packed.size == 10
    np.testing.assert_array_equal(unpack_bits(packed.tobytes(), 77), bits)
    np.testing.assert_array_equal(pack_bits(np.array([1], np.uint8)), [128])
    with pytest.raises(ValueError):
        unpack_bits(b"\x00", 9)


def test_seed_file_roundtrip(tmp_path):
    seed = prng_seed(20635, 42)
    assert seed.provenance == "test-prng-insecure"
    np.testing.assert_array_equal(seed.bits, prng_seed(20635, 42).bits)
    path = tmp_path / "toeplitz.seed"
    write_seed_file(path, seed)
    assert path.stat().st_size == (20635 + 7) // 8
    back = read_seed_file(path, 20635)
    np.testing.assert_array_equal(back.bits, seed.bits)
    assert back.provenance.startswith("file:")
    with pytest.raises(ValueError, match="bytes"):
        read_seed_file(path, 20636 + 8)
    with pytest.raises(ValueError):
        ToeplitzSeed(np.array([0, 1, 2]), "t")
    with pytest.raises(ValueError):
        prng_seed(0, 1)


def test_extract_stream_against_full_oracle():
    plan = plan_extraction(8, 5.53, 2.0 ** -20, 5.0)
    assert (plan.samples_per_block, plan.output_bits) == (76, 380)
    rng = np.random.default_rng(19)
    blocks = _code_blocks(rng, [100, 100, 100], clipped=[2, 3, 0])
    seed = prng_seed(plan.seed_bits, 23)
    packed, report = extract_stream(blocks, plan, seed)

    assert report.samples_in == 300
    assert report.samples_used == 228  # trailing partial block discarded
    assert report.blocks == 3
    assert report.raw_bits == 228 * 8
    assert report.output_bits == 3 * 380
    assert report.clipped_samples == 5
    assert report.bits_per_sample_effective == pytest.approx(5.0, abs=1e-12)
    assert report.seed_provenance == "test-prng-insecure"
    assert packed.size == (3 * 380 + 7) // 8

    codes = np.concatenate([b.codes for b in blocks])[:228]
    chunks = codes.reshape(3, 76)
    want_bits = np.concatenate([
        oracle_toeplitz(serialize_samples(c, 8), seed.bits, 380)
        for c in chunks])
    np.testing.assert_array_equal(packed, np.packbits(want_bits))


def test_extract_stream_determinism_threads_and_methods():
    plan = plan_extraction(8, 5.53, 2.0 ** -20, 5.0)
    rng = np.random.default_rng(29)
    blocks = _code_blocks(rng, [500])
    seed = prng_seed(plan.seed_bits, 31)
    ref, _ = extract_stream(blocks, plan, seed)
    again, _ = extract_stream(blocks, plan, seed)
    np.testing.assert_array_equal(ref, again)
    threaded, _ = extract_stream(blocks, plan, seed, threads=4)
    np.testing.assert_array_equal(ref, threaded)
    naive, _ = extract_stream(blocks, plan, seed, method="naive")
    np.testing.assert_array_equal(ref, naive)
    other, _ = extract_stream(blocks, plan, prng_seed(plan.seed_bits, 32))
    assert not np.array_equal(ref, other)


def test_extract_stream_operating_point_accounting():
    plan = plan_extraction(8, 5.53, 2.0 ** -100, 5.4)
    rng = np.random.default_rng(37)
    blocks = _code_blocks(rng, [30 * 1540 + 50])
    seed = prng_seed(plan.seed_bits, 41)
    packed, report = extract_stream(blocks, plan, seed)
    assert report.blocks == 30
    assert report.bits_per_sample_effective == pytest.approx(5.4, abs=1e-12)
    assert report.equivalent_rate_bits_per_s == pytest.approx(270e6,
                                                              rel=1e-12)
    assert report.budget_slack_bits(plan) >= 0.0
    assert report.budget_slack_bits(plan) == pytest.approx(0.2, abs=1e-6)
    text = report.to_text()
    assert "output_bits: 249480" in text
    assert "seed_provenance: test-prng-insecure" in text
    assert "equivalent_rate_bits_per_s: 270000000.0" in text


def test_extract_stream_refusals():
    plan = plan_extraction(8, 5.53, 2.0 ** -20, 5.0)
    rng = np.random.default_rng(43)
    blocks = _code_blocks(rng, [200])
    seed = prng_seed(plan.seed_bits, 47)
    for decision in ("recalibrate", "alarm"):
        with pytest.raises(StaleCalibrationError):
            extract_stream(blocks, plan, seed, scheduler_decision=decision)
    with pytest.raises(ValueError):
        extract_stream(blocks, plan, seed, scheduler_decision="banana")
    with pytest.raises(ValueError, match="seed"):
        extract_stream(blocks, plan, prng_seed(plan.seed_bits - 1, 1))
    with pytest.raises(ValueError):
        extract_stream([], plan, seed)
    with pytest.raises(ValueError, match="cannot fill"):
        extract_stream(_code_blocks(rng, [10]), plan, seed)
    with pytest.raises(ValueError, match="threads"):
        extract_stream(blocks, plan, seed, threads=0)
    wide = RawSampleBlock(codes=np.array([0, 1], dtype=np.int16),
                          config=MeasurementConfig(adc_bits=12))
    with pytest.raises(ValueError, match="12-bit"):
        extract_stream([wide], plan, seed)
