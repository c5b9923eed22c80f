"""Synthetic power-telemetry channels.

A channel reading for plaintext ``pt`` under key ``k`` is::

    baseline + replicas * (leak_coeff_rd0  * sum HW(pt ^ k)
                           + leak_coeff_rd10 * sum HW(last-round input))
             + N(0, noise_sigma)

rounded to the nearest multiple of ``quant_step`` (ties to even). Presets in
``data/presets.json`` are simulation knobs tuned to give strong, medium,
weak and absent data dependency; they say nothing about real hardware.
"""
import enum
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import MISSING, asdict, dataclass, fields, replace
from importlib import resources

import numpy as np

from telescp import aes, rng
from telescp.tracestore import PlaintextClass, TraceSet

DEFAULT_CHUNK = 8192
POWER_LAW_EXPONENT = 3.0


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class ChannelProfile:
    name: str
    leak_coeff_rd0: float
    leak_coeff_rd10: float
    baseline: float
    noise_sigma: float
    quant_step: float
    update_interval_s: float = 1.0
    replicas: int = 1
    samples_per_trace: int = 1

    def __post_init__(self):
        for f in ("leak_coeff_rd0", "leak_coeff_rd10", "baseline", "noise_sigma", "quant_step", "update_interval_s"):
            v = getattr(self, f)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ProfileError(f"{f} must be a finite number, got {v!r}")
        if self.noise_sigma < 0:
            raise ProfileError("noise_sigma must be >= 0")
        if self.quant_step <= 0:
            raise ProfileError("quant_step must be > 0")
        if self.update_interval_s <= 0:
            raise ProfileError("update_interval_s must be > 0")
        if int(self.replicas) != self.replicas or self.replicas < 1:
            raise ProfileError("replicas must be a positive integer")
        if int(self.samples_per_trace) != self.samples_per_trace or self.samples_per_trace < 1:
            raise ProfileError("samples_per_trace must be a positive integer")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ProfileError(f"unknown profile fields: {sorted(unknown)}")
        missing = {f.name for f in fields(cls) if f.default is MISSING} - set(data)
        if missing:
            raise ProfileError(f"missing profile fields: {sorted(missing)}")
        return cls(**data)

    def derive(self, **changes):
        return replace(self, **changes)


def _load_builtin():
    text = resources.files("telescp").joinpath("data/presets.json").read_text()
    doc = json.loads(text)
    return doc["version"], {k: ChannelProfile.from_dict(v) for k, v in doc["presets"].items()}


PRESETS_VERSION, PRESETS = _load_builtin()


def get_preset(name):
    key = name.strip().lower()
    if key not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    return PRESETS[key]


def load_profiles(path):
    """Read a profile (or ``{"presets": {...}}`` table) from a JSON file."""
    with open(path) as fh:
        doc = json.load(fh)
    if "presets" in doc:
        return {k: ChannelProfile.from_dict(v) for k, v in doc["presets"].items()}
    profile = ChannelProfile.from_dict(doc)
    return {profile.name: profile}


def kernel_victim_profile(profile):
    """Lower-SNR variant for an in-kernel victim driven by a single thread."""
    return profile.derive(name=f"{profile.name}-kernel", noise_sigma=profile.noise_sigma * math.sqrt(2.0), replicas=1)


def leakage_amplitude(profile):
    """Standard deviation of the data-dependent term under uniform plaintexts.

    Each byte's Hamming weight has variance 2, so each 16-byte state sum has
    variance 32; the two targeted states are treated as independent.
    """
    return profile.replicas * math.sqrt(32.0 * (profile.leak_coeff_rd0 ** 2 + profile.leak_coeff_rd10 ** 2))


def quantize(values, step):
    return np.round(np.asarray(values, dtype=np.float64) / step) * step


# ------------------------------------------------------------- plaintexts

@dataclass(frozen=True)
class PlaintextSource:
    """Where campaign plaintexts come from.

    ``random`` draws a fresh plaintext per trace; ``chosen-random`` draws one
    plaintext from ``seed`` and repeats it, as for a fixed-input TVLA class.
    """

    kind: str
    seed: int = 0

    KINDS = ("all0", "all1", "random", "chosen-random")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown plaintext source {self.kind!r}")

    @classmethod
    def all_zeros(cls):
        return cls("all0")

    @classmethod
    def all_ones(cls):
        return cls("all1")

    @classmethod
    def random(cls, seed):
        return cls("random", int(seed))

    @classmethod
    def chosen_random(cls, seed):
        return cls("chosen-random", int(seed))

    @property
    def class_label(self):
        return {"all0": PlaintextClass.ALL_ZEROS, "all1": PlaintextClass.ALL_ONES}.get(self.kind, PlaintextClass.RANDOM)

    def block(self, n, offset=0):
        if self.kind == "all0":
            return np.zeros((n, 16), dtype=np.uint8)
        if self.kind == "all1":
            return np.full((n, 16), 0xFF, dtype=np.uint8)
        if self.kind == "chosen-random":
            return np.repeat(rng.random_blocks(self.seed, 1), n, axis=0)
        return rng.random_blocks(self.seed, n, offset)


# -------------------------------------------------------------- simulation

def _readings(pts, key, profile, seed, offset):
    cts, rd0, rd10 = aes.encrypt_batch(pts, key)
    hw = aes.HW_TABLE
    s0 = hw[rd0].sum(axis=1, dtype=np.int64).astype(np.float64)
    s10 = hw[rd10].sum(axis=1, dtype=np.int64).astype(np.float64)
    signal = profile.baseline + profile.replicas * (profile.leak_coeff_rd0 * s0 + profile.leak_coeff_rd10 * s10)
    values = np.repeat(signal[:, None], profile.samples_per_trace, axis=1)
    if profile.noise_sigma > 0:
        values = values + profile.noise_sigma * rng.normals(seed, rng.STREAM_NOISE, len(pts),
                                                            profile.samples_per_trace, offset)
    return cts, quantize(values, profile.quant_step)


def simulate_trace(pt, key, profile, seed, index=0):
    """Sensor samples for one encryption; ``index`` selects the trace's random stream."""
    pts = aes.as_block(pt)[None, :]
    _, samples = _readings(pts, aes.as_block(key), profile, seed, index)
    return samples[0]


def _chunks(n, chunk_size):
    return [(lo, min(n, lo + chunk_size)) for lo in range(0, n, chunk_size)]


def _map_chunks(fn, spans, workers):
    if workers <= 1 or len(spans) <= 1:
        return [fn(span) for span in spans]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, spans))


def simulate_campaign(source, key, n_traces, profile, seed, workers=1, chunk_size=DEFAULT_CHUNK):
    """Simulate ``n_traces`` encryptions under ``key`` and record the channel.

    Trace ``i`` depends only on ``(seed, i)`` (and the plaintext source), so
    the result is identical for any ``workers``.
    """
    if int(n_traces) < 1:
        raise ValueError("n_traces must be >= 1")
    key = aes.as_block(key)

    def run(span):
        lo, hi = span
        pts = source.block(hi - lo, lo)
        cts, samples = _readings(pts, key, profile, seed, lo)
        return pts, cts, samples

    parts = _map_chunks(run, _chunks(int(n_traces), chunk_size), workers)
    ts = TraceSet(
        profile.name,
        np.concatenate([p[0] for p in parts]),
        np.concatenate([p[1] for p in parts]),
        np.concatenate([p[2] for p in parts]),
        source.class_label,
        key,
    )
    ts.meta.update(profile=profile.to_dict(), seed=int(seed), source=source.kind, source_seed=source.seed)
    return ts


# -------------------------------------------------------------- mitigation

@dataclass(frozen=True)
class MitigationSpec:
    """Noise blending plus a longer reporting interval.

    ``span="samples"`` averages consecutive samples inside each trace.
    ``span="traces"`` averages the readings of consecutive traces and reports
    the window average for every trace in it, which is what a sensor with a
    longer update interval shows a caller sampling once per encryption.
    """

    extra_noise_sigma: float = 0.0
    interval_multiplier: int = 1
    span: str = "samples"

    def __post_init__(self):
        if not math.isfinite(self.extra_noise_sigma) or self.extra_noise_sigma < 0:
            raise ValueError("extra_noise_sigma must be finite and >= 0")
        if int(self.interval_multiplier) != self.interval_multiplier or self.interval_multiplier < 1:
            raise ValueError("interval_multiplier must be a positive integer")
        if self.span not in ("samples", "traces"):
            raise ValueError("span must be 'samples' or 'traces'")


def apply_mitigation(ts, m, seed):
    k = int(m.interval_multiplier)
    if m.span == "samples":
        n, width = ts.samples.shape
        out_w = width // k
        samples = ts.samples[:, :out_w * k].reshape(n, out_w, k).mean(axis=2) if k > 1 else ts.samples.copy()
        if m.extra_noise_sigma > 0 and out_w:
            samples = samples + m.extra_noise_sigma * rng.normals(seed, rng.STREAM_MITIGATION, n, out_w)
        out = ts.with_samples(samples.reshape(n, out_w))
    else:
        n_win = len(ts) // k
        kept = ts.select(slice(0, n_win * k))
        width = ts.samples_per_trace
        windows = kept.samples.reshape(n_win, k, width).mean(axis=1)
        if m.extra_noise_sigma > 0 and n_win:
            windows = windows + m.extra_noise_sigma * rng.normals(seed, rng.STREAM_MITIGATION, n_win, width)
        out = kept.with_samples(np.repeat(windows, k, axis=0))
    out.meta["mitigation"] = asdict(m)
    out.meta["mitigation_seed"] = int(seed)
    return out


# -------------------------------------------------------------- throttling

class Driver(enum.Enum):
    ACTUAL_POWER = "actual"
    INDEPENDENT_SENSOR = "sensor"

    @classmethod
    def parse(cls, text):
        t = str(text).strip().lower().replace("_", "-")
        if t in ("actual", "actual-power", "actualpower"):
            return cls.ACTUAL_POWER
        if t in ("sensor", "independent-sensor", "independentsensor"):
            return cls.INDEPENDENT_SENSOR
        raise ValueError(f"unknown throttle driver {text!r}")


@dataclass(frozen=True)
class ThrottleSpec:
    power_limit: float = 4.0
    f_max: float = 3.5
    work_units: float = 1.0
    driver: Driver = Driver.ACTUAL_POWER

    def __post_init__(self):
        for f in ("power_limit", "f_max", "work_units"):
            v = getattr(self, f)
            if not math.isfinite(v) or v <= 0:
                raise ValueError(f"{f} must be finite and > 0")


def throttle_transform(demand_power, spec, sensor_reading=None):
    """Frequency and run time under a reactive power cap (P proportional to f**3).

    Power exactly at the limit does not throttle.
    """
    if not math.isfinite(demand_power) or demand_power <= 0:
        raise ValueError("demand_power must be finite and > 0")
    if spec.driver is Driver.INDEPENDENT_SENSOR:
        if sensor_reading is None or not math.isfinite(sensor_reading) or sensor_reading <= 0:
            raise ValueError("sensor_reading must be finite and > 0 for the independent-sensor driver")
        p = sensor_reading
    else:
        p = demand_power
    freq = spec.f_max if p <= spec.power_limit else spec.f_max * (spec.power_limit / p) ** (1.0 / POWER_LAW_EXPONENT)
    return freq, spec.work_units / freq


def throttle_arrays(demand, spec, sensor=None):
    """Vectorised :func:`throttle_transform`."""
    demand = np.asarray(demand, dtype=np.float64)
    p = demand if spec.driver is Driver.ACTUAL_POWER else np.asarray(sensor, dtype=np.float64)
    if np.any(~np.isfinite(demand) | (demand <= 0)) or np.any(~np.isfinite(p) | (p <= 0)):
        raise ValueError("power inputs must be finite and > 0")
    freq = np.where(p <= spec.power_limit, spec.f_max,
                    spec.f_max * (spec.power_limit / p) ** (1.0 / POWER_LAW_EXPONENT))
    return freq, spec.work_units / freq


def simulate_throttle_campaign(source, key, n_traces, demand_profile, sensor_profile, spec, seed,
                               timing_jitter=0.0, workers=1):
    """Execution-time traces of a victim running under a power cap.

    Demand power comes from ``demand_profile``; the throttle controller sees
    either that power or an independent ``sensor_profile`` reading, per
    ``spec.driver``. Samples of the returned set are elapsed times.
    """
    demand = simulate_campaign(source, key, n_traces, demand_profile, seed, workers)
    sensor = simulate_campaign(source, key, n_traces, sensor_profile,
                               int(rng.stream_key(seed, rng.STREAM_SENSOR)), workers)
    _, elapsed = throttle_arrays(demand.samples, spec, sensor.samples)
    if timing_jitter > 0:
        elapsed = elapsed + timing_jitter * rng.normals(seed, rng.STREAM_TIMING, *elapsed.shape)
    ts = demand.with_samples(elapsed)
    ts.channel_name = "time"
    ts.meta.update(throttle={"power_limit": spec.power_limit, "f_max": spec.f_max, "work_units": spec.work_units,
                             "driver": spec.driver.value, "power_law": "cubic"},
                   demand_profile=demand_profile.to_dict(), sensor_profile=sensor_profile.to_dict())
    return ts
