"""Run configuration: a sectioned key=value file mapped onto typed settings.

Grammar (INI subset, parsed with :mod:`configparser`):

* sections in square brackets, ``key = value`` lines, ``#`` comments;
* every key has a default, so the empty file (or no file) is valid;
* unknown sections or keys are rejected, not ignored, to catch typos;
* lists (calibration powers, verification bin widths) are space-separated;
* booleans accept true/false, yes/no, on/off, 1/0.

All randomness used by commands descends from ``run.rng_seed`` through
named substreams, and ``run.timestamp`` is the fixed reference time stamped
into artifacts, so identical config plus identical seed reproduces every
output byte for byte.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass

import numpy as np

from . import states
from .detector import (FixedPhase, MeasurementConfig, UniformRandomPhase,
                       WrappedGaussianPhase)
from .exceptions import ConfigError

__all__ = ["RunConfig", "load_config", "substream", "DEFAULT_CONFIG"]

DEFAULT_CONFIG = """\
[run]
out_dir = run-artifacts
rng_seed = 20260815
threads = 1
timestamp = 0.0

[source]
kind = vacuum
fock_n = 1
thermal_mean_photons = 0.5
squeeze_r = 1.5
squeeze_angle = 0.0
displacement_re = 0.0
displacement_im = 0.0
mixture = 0.5:0 0.5:1

[detector]
lo_phase_policy = uniform
lo_phase = 0.0
lo_phase_width = 0.1
lo_power = 1.0
pulse_rate = 50e6
adc_bits = 8
adc_full_scale = 160.0
electronic_noise_var = 2.0
excess_noise_var = 0.0
excess_noise_tracks_power = false
conversion_gain = 122.0

[dsp]
enabled = true
oversample = 8
pulse_duty = 0.5
lowpass_cutoff = 140e6
lowpass_taps = 257
sample_phase = 0.5
notch_enabled = true
modulation_freq = 25e6
notch_cutoff = 24.995e6
notch_taps = 16001
autocorr_max_lag = 400
autocorr_samples = 1000000

[simulate]
pulses = 1000000
blocks = 1

[calibration]
powers = 0.25 0.5 1.0 1.5 2.0
samples_per_point = 200000
min_points = 5
conservatism = 2.0
recalibration_interval = 600.0
drift_threshold = 0.02

[extractor]
epsilon_log2 = -100
target_bits_per_sample = 5.4
h_min_override =
seed_file =

[stats]
string_bits = 100000
alpha = 0.01

[attack]
r = 1.5
delta = 0.1
lo_mode = fixed
rounds = 1000000
displaced = true

[verify]
fock_n_max = 20
deltas = 0.01 0.05 0.1 0.5 1.0
equivalence_states = 100
equivalence_dim_max = 8
"""


@dataclass(frozen=True)
class RunSettings:
    out_dir: str
    rng_seed: int
    threads: int
    timestamp: float


@dataclass(frozen=True)
class ChainSettings:
    enabled: bool
    oversample: int
    pulse_duty: float
    lowpass_cutoff: float
    lowpass_taps: int
    sample_phase: float
    notch_enabled: bool
    modulation_freq: float
    notch_cutoff: float
    notch_taps: int
    autocorr_max_lag: int
    autocorr_samples: int


@dataclass(frozen=True)
class SimulateSettings:
    pulses: int
    blocks: int


@dataclass(frozen=True)
class CalibrationSettings:
    powers: tuple[float, ...]
    samples_per_point: int
    min_points: int
    conservatism: float
    recalibration_interval: float
    drift_threshold: float


@dataclass(frozen=True)
class ExtractorSettings:
    epsilon_log2: float
    target_bits_per_sample: float
    h_min_override: float | None
    seed_file: str | None


@dataclass(frozen=True)
class StatsSettings:
    string_bits: int
    alpha: float


@dataclass(frozen=True)
class AttackSettings:
    r: float
    delta: float
    lo_mode: str
    rounds: int
    displaced: bool


@dataclass(frozen=True)
class VerifySettings:
    fock_n_max: int
    deltas: tuple[float, ...]
    equivalence_states: int
    equivalence_dim_max: int


@dataclass(frozen=True)
class RunConfig:
    run: RunSettings
    source: states.QuantumStateModel
    detector: MeasurementConfig
    dsp: ChainSettings
    simulate: SimulateSettings
    calibration: CalibrationSettings
    extractor: ExtractorSettings
    stats: StatsSettings
    attack: AttackSettings
    verify: VerifySettings


class _Reader:
    """Typed access to one parsed section with section.key error context."""

    def __init__(self, parser: configparser.ConfigParser, section: str):
        self._p = parser
        self._s = section

    def _raw(self, key: str) -> str:
        return self._p.get(self._s, key)

    def _convert(self, key, fn, kind):
        raw = self._raw(key)
        try:
            return fn(raw)
        except ValueError:
            raise ConfigError(
                f"{self._s}.{key}: expected {kind}, got {raw!r}") from None

    def str(self, key: str) -> str:
        return self._raw(key).strip()

    def float(self, key: str) -> float:
        return self._convert(key, float, "a number")

    def int(self, key: str) -> int:
        def parse(raw):
            value = float(raw)
            if value != int(value):
                raise ValueError(raw)
            return int(value)
        return self._convert(key, parse, "an integer")

    def bool(self, key: str) -> bool:
        raw = self._raw(key).strip().lower()
        if raw in ("true", "yes", "on", "1"):
            return True
        if raw in ("false", "no", "off", "0"):
            return False
        raise ConfigError(f"{self._s}.{key}: expected a boolean, got {raw!r}")

    def floats(self, key: str) -> tuple[float, ...]:
        return self._convert(
            key, lambda raw: tuple(float(tok) for tok in raw.split()),
            "space-separated numbers")

    def opt_float(self, key: str) -> float | None:
        return self.float(key) if self._raw(key).strip() else None

    def opt_str(self, key: str) -> str | None:
        raw = self._raw(key).strip()
        return raw or None


def _build_source(sec: _Reader) -> states.QuantumStateModel:
    kind = sec.str("kind").lower()
    if kind == "vacuum":
        return states.Vacuum()
    if kind == "fock":
        return states.Fock(sec.int("fock_n"))
    if kind == "thermal":
        return states.Thermal(sec.float("thermal_mean_photons"))
    if kind == "displaced_squeezed":
        alpha = complex(sec.float("displacement_re"), sec.float("displacement_im"))
        return states.DisplacedSqueezed(
            r=sec.float("squeeze_r"), squeeze_angle=sec.float("squeeze_angle"),
            displacement=alpha)
    if kind == "mixture":
        comps = []
        for token in sec.str("mixture").split():
            try:
                w_text, n_text = token.split(":")
                comps.append((float(w_text), int(n_text)))
            except ValueError:
                raise ConfigError(
                    f"source.mixture: expected weight:fock_n tokens, got {token!r}"
                ) from None
        return states.Mixture(tuple(comps))
    raise ConfigError(f"source.kind: unknown state kind {kind!r}")


def _build_detector(sec: _Reader) -> MeasurementConfig:
    policy_name = sec.str("lo_phase_policy").lower()
    if policy_name == "fixed":
        policy = FixedPhase(sec.float("lo_phase"))
    elif policy_name == "uniform":
        policy = UniformRandomPhase()
    elif policy_name == "wrapped":
        policy = WrappedGaussianPhase(sec.float("lo_phase"), sec.float("lo_phase_width"))
    else:
        raise ConfigError(
            f"detector.lo_phase_policy: expected fixed|uniform|wrapped, got {policy_name!r}")
    try:
        return MeasurementConfig(
            lo_phase_policy=policy,
            lo_power=sec.float("lo_power"),
            pulse_rate=sec.float("pulse_rate"),
            adc_bits=sec.int("adc_bits"),
            adc_full_scale=sec.float("adc_full_scale"),
            electronic_noise_var=sec.float("electronic_noise_var"),
            excess_noise_var=sec.float("excess_noise_var"),
            excess_noise_tracks_power=sec.bool("excess_noise_tracks_power"),
            conversion_gain=sec.float("conversion_gain"))
    except ValueError as exc:
        raise ConfigError(f"detector: {exc}") from None


def _cross_validate(cfg: RunConfig) -> None:
    d = cfg.dsp
    det = cfg.detector
    if d.enabled:
        if d.oversample < 1:
            raise ConfigError("dsp.oversample must be >= 1")
        input_rate = d.oversample * det.pulse_rate
        if not d.lowpass_cutoff < input_rate / 2.0:
            raise ConfigError(
                f"dsp.lowpass_cutoff ({d.lowpass_cutoff:g}) must sit below the input "
                f"Nyquist rate ({input_rate / 2.0:g})")
        if not 0.0 < d.pulse_duty <= 1.0:
            raise ConfigError("dsp.pulse_duty must lie in (0, 1]")
        if not 0.0 <= d.sample_phase < 1.0:
            raise ConfigError("dsp.sample_phase must lie in [0, 1)")
        if d.lowpass_taps % 2 == 0 or d.notch_taps % 2 == 0:
            raise ConfigError("dsp tap counts must be odd (linear phase)")
        if d.notch_enabled:
            if d.modulation_freq > det.pulse_rate / 2.0:
                raise ConfigError("dsp.modulation_freq cannot exceed pulse Nyquist")
            if not d.notch_cutoff < det.pulse_rate / 2.0:
                raise ConfigError("dsp.notch_cutoff must sit below pulse Nyquist")
        if d.autocorr_max_lag < 1 or d.autocorr_samples <= 10 * d.autocorr_max_lag:
            raise ConfigError("dsp.autocorr_samples must exceed 10 * autocorr_max_lag")
    if cfg.simulate.pulses < 1 or cfg.simulate.blocks < 1:
        raise ConfigError("simulate.pulses and simulate.blocks must be >= 1")
    if cfg.run.threads < 1:
        raise ConfigError("run.threads must be >= 1")
    if not cfg.run.rng_seed >= 0:
        raise ConfigError("run.rng_seed must be a nonnegative integer")
    if cfg.extractor.epsilon_log2 >= 0:
        raise ConfigError("extractor.epsilon_log2 must be negative")
    if cfg.extractor.target_bits_per_sample <= 0:
        raise ConfigError("extractor.target_bits_per_sample must be positive")
    if cfg.stats.string_bits < 100:
        raise ConfigError("stats.string_bits must be >= 100")
    if not 0.0 < cfg.stats.alpha < 0.5:
        raise ConfigError("stats.alpha must lie in (0, 0.5)")
    if cfg.calibration.samples_per_point < 2:
        raise ConfigError("calibration.samples_per_point must be >= 2")
    if not cfg.calibration.powers:
        raise ConfigError("calibration.powers cannot be empty")
    if cfg.verify.fock_n_max < 1 or cfg.verify.equivalence_states < 1:
        raise ConfigError("verify counts must be >= 1")
    if not 2 <= cfg.verify.equivalence_dim_max <= 16:
        raise ConfigError("verify.equivalence_dim_max must lie in [2, 16]")
    if any(dl <= 0 for dl in cfg.verify.deltas):
        raise ConfigError("verify.deltas must all be positive")


def load_config(path: str | None = None, *, overrides: dict | None = None) -> RunConfig:
    """Parse ``path`` over the built-in defaults and validate the result.

    ``overrides`` maps dotted keys (``run.out_dir``) to replacement raw
    values, used for command-line flags.
    """
    parser = configparser.ConfigParser(
        inline_comment_prefixes=("#",), interpolation=None)
    parser.read_string(DEFAULT_CONFIG)
    known = {s: set(parser.options(s)) for s in parser.sections()}
    if path is not None:
        user = configparser.ConfigParser(
            inline_comment_prefixes=("#",), interpolation=None)
        try:
            with open(path, encoding="utf-8") as fh:
                user.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError(f"config syntax error in {path}: {exc}") from None
        for section in user.sections():
            if section not in known:
                raise ConfigError(f"unknown config section [{section}]")
            for key, value in user.items(section):
                if key not in known[section]:
                    raise ConfigError(f"unknown config key {section}.{key}")
                parser.set(section, key, value)
    for dotted, value in (overrides or {}).items():
        section, key = dotted.split(".", 1)
        parser.set(section, key, str(value))

    run = _Reader(parser, "run")
    dsp = _Reader(parser, "dsp")
    sim = _Reader(parser, "simulate")
    cal = _Reader(parser, "calibration")
    ext = _Reader(parser, "extractor")
    sta = _Reader(parser, "stats")
    att = _Reader(parser, "attack")
    ver = _Reader(parser, "verify")
    try:
        source = _build_source(_Reader(parser, "source"))
    except ValueError as exc:
        raise ConfigError(f"source: {exc}") from None
    cfg = RunConfig(
        run=RunSettings(
            out_dir=run.str("out_dir"), rng_seed=run.int("rng_seed"),
            threads=run.int("threads"), timestamp=run.float("timestamp")),
        source=source,
        detector=_build_detector(_Reader(parser, "detector")),
        dsp=ChainSettings(
            enabled=dsp.bool("enabled"), oversample=dsp.int("oversample"),
            pulse_duty=dsp.float("pulse_duty"),
            lowpass_cutoff=dsp.float("lowpass_cutoff"),
            lowpass_taps=dsp.int("lowpass_taps"),
            sample_phase=dsp.float("sample_phase"),
            notch_enabled=dsp.bool("notch_enabled"),
            modulation_freq=dsp.float("modulation_freq"),
            notch_cutoff=dsp.float("notch_cutoff"),
            notch_taps=dsp.int("notch_taps"),
            autocorr_max_lag=dsp.int("autocorr_max_lag"),
            autocorr_samples=dsp.int("autocorr_samples")),
        simulate=SimulateSettings(pulses=sim.int("pulses"), blocks=sim.int("blocks")),
        calibration=CalibrationSettings(
            powers=cal.floats("powers"),
            samples_per_point=cal.int("samples_per_point"),
            min_points=cal.int("min_points"),
            conservatism=cal.float("conservatism"),
            recalibration_interval=cal.float("recalibration_interval"),
            drift_threshold=cal.float("drift_threshold")),
        extractor=ExtractorSettings(
            epsilon_log2=ext.float("epsilon_log2"),
            target_bits_per_sample=ext.float("target_bits_per_sample"),
            h_min_override=ext.opt_float("h_min_override"),
            seed_file=ext.opt_str("seed_file")),
        stats=StatsSettings(string_bits=sta.int("string_bits"), alpha=sta.float("alpha")),
        attack=AttackSettings(
            r=att.float("r"), delta=att.float("delta"),
            lo_mode=att.str("lo_mode"), rounds=att.int("rounds"),
            displaced=att.bool("displaced")),
        verify=VerifySettings(
            fock_n_max=ver.int("fock_n_max"), deltas=ver.floats("deltas"),
            equivalence_states=ver.int("equivalence_states"),
            equivalence_dim_max=ver.int("equivalence_dim_max")))
    try:
        states.validate_state(cfg.source)
    except ValueError as exc:
        raise ConfigError(f"source: {exc}") from None
    _cross_validate(cfg)
    return cfg


def substream(rng_seed: int, name: str) -> np.random.Generator:
    """Deterministic per-purpose random stream derived from the global seed."""
    digest = int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([rng_seed, digest]))
