import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from telescp import aes, leakage
from telescp.leakage import (
    ChannelProfile,
    Driver,
    MitigationSpec,
    PlaintextSource,
    ProfileError,
    ThrottleSpec,
)
from telescp.tracestore import PlaintextClass

blocks = st.binary(min_size=16, max_size=16)


def profile(**kw):
    base = dict(name="t", leak_coeff_rd0=0.0, leak_coeff_rd10=0.0, baseline=5.0, noise_sigma=0.0, quant_step=0.001)
    base.update(kw)
    return ChannelProfile(**base)


def test_flat_profile_reads_baseline(key):
    s = leakage.simulate_trace(bytes(16), key, profile(samples_per_trace=4), seed=1)
    assert s.tolist() == [5.0] * 4


def test_pt_equal_key_gives_quantized_baseline(key):
    p = profile(leak_coeff_rd0=1.0, baseline=5.0004, quant_step=0.001)
    assert leakage.simulate_trace(key, key, p, seed=0)[0] == leakage.quantize(5.0004, 0.001)


def test_simulate_trace_deterministic(key):
    p = leakage.get_preset("phpc-like")
    a = leakage.simulate_trace(bytes(16), key, p, seed=9)
    assert np.array_equal(a, leakage.simulate_trace(bytes(16), key, p, seed=9))
    assert not np.array_equal(a, leakage.simulate_trace(bytes(16), key, p, seed=10))


def test_leakage_formula(key):
    pt = bytes(range(16))
    p = profile(leak_coeff_rd0=0.01, leak_coeff_rd10=0.02, replicas=2, quant_step=1e-9)
    _, it = aes.encrypt_block(pt, key)
    s0 = aes.hamming_weight(it.state_after_addroundkey[0]).sum()
    s10 = aes.hamming_weight(it.state_before_subbytes[10]).sum()
    expected = 5.0 + 2 * (0.01 * s0 + 0.02 * s10)
    assert leakage.simulate_trace(pt, key, p, 0)[0] == pytest.approx(expected, abs=1e-9)


@settings(max_examples=40)
@given(blocks, st.integers(0, 2**63), st.sampled_from([1e-6, 1e-3, 0.25]))
def test_samples_are_multiples_of_quant_step(pt, seed, q):
    p = profile(leak_coeff_rd0=3e-4, leak_coeff_rd10=1e-4, noise_sigma=1e-3, quant_step=q, samples_per_trace=3)
    s = leakage.simulate_trace(pt, bytes(16), p, seed)
    k = s / q
    assert np.all(np.abs(k - np.round(k)) < 1e-6)


def test_quantize_ties_to_even():
    assert leakage.quantize([0.5, 1.5, 2.5], 1.0).tolist() == [0.0, 2.0, 2.0]


def test_monotone_in_round0_weight(key):
    p = profile(leak_coeff_rd0=0.01, quant_step=1e-9)
    values = []
    for w in range(17):
        pt = np.array(key) ^ np.array([0xFF] * w + [0] * (16 - w), dtype=np.uint8)
        values.append(leakage.simulate_trace(pt, key, p, 0)[0])
    assert all(b > a for a, b in zip(values, values[1:]))


def test_replication_linearity(key):
    src = PlaintextSource.random(3)
    one = profile(leak_coeff_rd0=1e-3, leak_coeff_rd10=5e-4, quant_step=1e-12)
    three = one.derive(replicas=3)
    a = leakage.simulate_campaign(src, key, 200, one, 0).samples - one.baseline
    b = leakage.simulate_campaign(src, key, 200, three, 0).samples - one.baseline
    np.testing.assert_allclose(b, 3 * a, rtol=1e-8, atol=1e-11)


@pytest.mark.parametrize("field, value", [
    ("noise_sigma", -1.0), ("quant_step", 0.0), ("baseline", float("nan")),
    ("leak_coeff_rd0", float("inf")), ("replicas", 0), ("update_interval_s", 0.0),
])
def test_profile_validation(field, value):
    with pytest.raises(ProfileError):
        profile(**{field: value})


def test_profile_json_roundtrip(tmp_path):
    p = leakage.get_preset("pdtr-like")
    path = tmp_path / "p.json"
    path.write_text(json.dumps(p.to_dict()))
    assert leakage.load_profiles(path) == {p.name: p}
    with pytest.raises(ProfileError):
        ChannelProfile.from_dict({**p.to_dict(), "bogus": 1})
    d = p.to_dict()
    del d["baseline"]
    with pytest.raises(ProfileError):
        ChannelProfile.from_dict(d)


def test_presets_present():
    for name in ("phpc-like", "phpc-kernel-like", "pdtr-like", "pmvc-like", "pstr-like", "phps-like"):
        assert leakage.get_preset(name).name == name
    with pytest.raises(KeyError):
        leakage.get_preset("nope")
    phps = leakage.get_preset("phps-like")
    assert phps.leak_coeff_rd0 == phps.leak_coeff_rd10 == 0


def test_kernel_preset_is_snr_halved():
    phpc = leakage.get_preset("phpc-like")
    derived = leakage.kernel_victim_profile(phpc)
    shipped = leakage.get_preset("phpc-kernel-like")
    assert shipped.replicas == derived.replicas == 1
    assert shipped.noise_sigma == pytest.approx(derived.noise_sigma, rel=1e-12)


def test_campaign_examples(key):
    ts = leakage.simulate_campaign(PlaintextSource.random(4), key, 10, leakage.get_preset("phpc-like"), 1)
    assert len(ts) == 10
    for pt, ct, _ in ts:
        assert np.array_equal(ct, aes.encrypt_block(pt, key)[0])
    zeros = leakage.simulate_campaign(PlaintextSource.all_zeros(), key, 5, leakage.get_preset("phpc-like"), 1)
    assert not zeros.plaintexts.any()
    assert zeros.class_label is PlaintextClass.ALL_ZEROS
    ones = leakage.simulate_campaign(PlaintextSource.all_ones(), key, 5, leakage.get_preset("phpc-like"), 1)
    assert (ones.plaintexts == 0xFF).all()
    a = leakage.simulate_campaign(PlaintextSource.random(8), key, 50, leakage.get_preset("phpc-like"), 1)
    b = leakage.simulate_campaign(PlaintextSource.random(8), key, 50, leakage.get_preset("phpc-like"), 2)
    assert np.array_equal(a.plaintexts, b.plaintexts)
    with pytest.raises(ValueError):
        leakage.simulate_campaign(PlaintextSource.random(8), key, 0, leakage.get_preset("phpc-like"), 1)


def test_chosen_random_repeats_one_block(key):
    ts = leakage.simulate_campaign(PlaintextSource.chosen_random(5), key, 20, leakage.get_preset("phpc-like"), 1)
    assert (ts.plaintexts == ts.plaintexts[0]).all()
    assert ts.class_label is PlaintextClass.RANDOM


@pytest.mark.parametrize("workers, chunk", [(2, 100), (4, 37), (3, 1000)])
def test_campaign_independent_of_schedule(key, workers, chunk):
    p = leakage.get_preset("phpc-like").derive(samples_per_trace=2)
    ref = leakage.simulate_campaign(PlaintextSource.random(1), key, 777, p, 5)
    other = leakage.simulate_campaign(PlaintextSource.random(1), key, 777, p, 5, workers=workers, chunk_size=chunk)
    assert ref.equals(other)


def test_trace_matches_campaign_row(key):
    p = leakage.get_preset("phpc-like")
    ts = leakage.simulate_campaign(PlaintextSource.random(2), key, 30, p, 11)
    assert np.array_equal(leakage.simulate_trace(ts.plaintexts[17], key, p, 11, index=17), ts.samples[17])


# ----------------------------------------------------------- mitigation

def _wide_set(key, n=20, width=10):
    p = leakage.get_preset("phpc-like").derive(samples_per_trace=width)
    return leakage.simulate_campaign(PlaintextSource.random(0), key, n, p, 0)


def test_mitigation_identity(key):
    ts = _wide_set(key)
    out = leakage.apply_mitigation(ts, MitigationSpec(0.0, 1), seed=3)
    assert out.equals(ts)


@pytest.mark.parametrize("k", [1, 2, 3, 4, 7, 10, 11])
def test_mitigation_window_length(key, k):
    ts = _wide_set(key)
    out = leakage.apply_mitigation(ts, MitigationSpec(0.0, k), seed=3)
    assert out.samples_per_trace == 10 // k
    if k <= 10:
        np.testing.assert_allclose(out.samples[:, 0], ts.samples[:, :k].mean(axis=1))


def test_mitigation_noise_variance(key):
    flat = profile(samples_per_trace=10)
    ts = leakage.simulate_campaign(PlaintextSource.all_zeros(), key, 10_000, flat, 0)
    sigma = 0.3
    out = leakage.apply_mitigation(ts, MitigationSpec(sigma, 1), seed=4)
    var = out.samples.var(ddof=1)
    assert out.samples.size == 100_000
    assert abs(var / sigma ** 2 - 1) < 0.05


def test_mitigation_trace_span(key):
    ts = _wide_set(key, n=10, width=1)
    out = leakage.apply_mitigation(ts, MitigationSpec(0.0, 4, "traces"), seed=0)
    assert len(out) == 8
    np.testing.assert_allclose(out.samples[:4, 0], ts.samples[:4, 0].mean())
    assert np.array_equal(out.plaintexts, ts.plaintexts[:8])


@pytest.mark.parametrize("kw", [dict(extra_noise_sigma=-1), dict(interval_multiplier=0), dict(span="x")])
def test_mitigation_spec_validation(kw):
    with pytest.raises(ValueError):
        MitigationSpec(**kw)


# ----------------------------------------------------------- throttling

def test_throttle_below_limit():
    f, t = leakage.throttle_transform(2.8, ThrottleSpec(4.0, 3.5))
    assert f == 3.5
    assert t == pytest.approx(1 / 3.5)


def test_throttle_boundary():
    assert leakage.throttle_transform(4.0, ThrottleSpec(4.0, 3.5))[0] == 3.5


def test_throttle_cubic():
    f, t = leakage.throttle_transform(8.0, ThrottleSpec(4.0, 3.5))
    assert f == pytest.approx(3.5 * 0.5 ** (1 / 3), rel=1e-12)
    assert f == pytest.approx(2.778, abs=5e-4)
    assert t == pytest.approx(1 / f)


@given(st.floats(0.01, 100), st.floats(0.01, 100))
def test_throttle_monotone(p1, p2):
    spec = ThrottleSpec(4.0, 3.5)
    lo, hi = sorted((p1, p2))
    f_lo = leakage.throttle_transform(lo, spec)[0]
    f_hi = leakage.throttle_transform(hi, spec)[0]
    assert f_hi <= f_lo
    assert (f_lo == 3.5) == (lo <= 4.0)


def test_throttle_independent_sensor_ignores_demand():
    spec = ThrottleSpec(4.0, 3.5, driver=Driver.INDEPENDENT_SENSOR)
    assert leakage.throttle_transform(50.0, spec, 3.0)[0] == 3.5
    assert leakage.throttle_transform(1.0, spec, 8.0)[0] == pytest.approx(3.5 * 0.5 ** (1 / 3))


@pytest.mark.parametrize("demand, sensor", [(0.0, 1.0), (-1.0, 1.0), (float("nan"), 1.0), (1.0, None), (1.0, -2.0)])
def test_throttle_rejects_bad_inputs(demand, sensor):
    spec = ThrottleSpec(driver=Driver.INDEPENDENT_SENSOR)
    with pytest.raises(ValueError):
        leakage.throttle_transform(demand, spec, sensor)


def test_throttle_arrays_match_scalar():
    spec = ThrottleSpec(4.0, 3.5)
    demand = np.array([1.0, 4.0, 4.5, 9.0])
    f, t = leakage.throttle_arrays(demand, spec)
    for d, fv, tv in zip(demand, f, t):
        assert (fv, tv) == leakage.throttle_transform(float(d), spec)


def test_throttle_campaign_metadata(key):
    spec = ThrottleSpec(4.0, 3.5)
    ts = leakage.simulate_throttle_campaign(PlaintextSource.random(0), key, 100, leakage.get_preset("phpc-like"),
                                            leakage.get_preset("phps-like"), spec, 0)
    assert ts.channel_name == "time"
    assert ts.meta["throttle"]["power_law"] == "cubic"
    assert (ts.samples > 1 / 3.5).all()  # phpc-like demand sits above 4 W


def test_leakage_amplitude():
    p = profile(leak_coeff_rd0=3.0, leak_coeff_rd10=4.0, replicas=2)
    assert leakage.leakage_amplitude(p) == pytest.approx(2 * math.sqrt(32) * 5)
