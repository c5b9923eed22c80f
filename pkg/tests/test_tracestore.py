import io

import numpy as np
import pytest

from telescp import leakage, tracestore
from telescp.leakage import PlaintextSource
from telescp.tracestore import PlaintextClass, TraceRecord, TraceSet


@pytest.fixture
def traces(key):
    p = leakage.get_preset("phpc-like").derive(samples_per_trace=3)
    return leakage.simulate_campaign(PlaintextSource.random(2), key, 1000, p, 4)


def test_roundtrip_with_key(traces):
    buf = io.BytesIO()
    n = tracestore.write_traceset(traces, buf, embed_key=True)
    assert n == len(buf.getvalue())
    back = tracestore.read_traceset(io.BytesIO(buf.getvalue()))
    assert back.equals(traces)


def test_key_only_embedded_on_request(traces, tmp_path):
    path = tmp_path / "t.sct"
    tracestore.write_traceset(traces, path)
    back = tracestore.read_traceset(path)
    assert back.true_key is None
    assert back.equals(traces.select(slice(None)).with_samples(traces.samples)) is False
    assert np.array_equal(back.samples, traces.samples)


def test_class_label_roundtrip(key):
    ts = leakage.simulate_campaign(PlaintextSource.all_ones(), key, 4, leakage.get_preset("phpc-like"), 0)
    back = tracestore.read_traceset(io.BytesIO(_bytes(ts)))
    assert back.class_label is PlaintextClass.ALL_ONES


def _bytes(ts, **kw):
    buf = io.BytesIO()
    tracestore.write_traceset(ts, buf, **kw)
    return buf.getvalue()


def test_bad_magic(traces):
    data = b"XXXX" + _bytes(traces)[4:]
    with pytest.raises(tracestore.BadMagic):
        tracestore.read_traceset(io.BytesIO(data))


def test_unsupported_version(traces):
    data = bytearray(_bytes(traces))
    data[4] = 99
    with pytest.raises(tracestore.UnsupportedVersion):
        tracestore.read_traceset(io.BytesIO(bytes(data)))


def test_truncated(traces):
    ten = traces.select(slice(0, 10))
    data = _bytes(ten)
    record = 32 + 8 * ten.samples_per_trace
    with pytest.raises(tracestore.TruncatedStream):
        tracestore.read_traceset(io.BytesIO(data[:-record]))
    with pytest.raises(tracestore.TruncatedStream):
        tracestore.read_traceset(io.BytesIO(data[:10]))


def test_trailing_bytes(traces):
    with pytest.raises(tracestore.SampleCountMismatch):
        tracestore.read_traceset(io.BytesIO(_bytes(traces.select(slice(0, 3))) + b"\x00"))


def test_errors_are_value_errors():
    assert issubclass(tracestore.BadMagic, ValueError)
    assert issubclass(tracestore.TruncatedStream, tracestore.TraceFormatError)


def test_csv_rows_and_key_column(traces):
    three = traces.select(slice(0, 3))
    buf = io.StringIO()
    assert tracestore.export_csv(three, buf) == 4
    lines = buf.getvalue().strip().splitlines()
    assert len(lines) == 4
    assert lines[0].split(",")[:3] == ["plaintext", "ciphertext", "key"]
    no_key = TraceSet(three.channel_name, three.plaintexts, three.ciphertexts, three.samples)
    buf = io.StringIO()
    tracestore.export_csv(no_key, buf)
    assert "key" not in buf.getvalue().splitlines()[0].split(",")


def test_csv_reimport(traces):
    buf = io.StringIO()
    tracestore.export_csv(traces, buf)
    back = tracestore.import_csv(io.StringIO(buf.getvalue()))
    assert np.array_equal(back.plaintexts, traces.plaintexts)
    assert np.array_equal(back.ciphertexts, traces.ciphertexts)
    assert np.array_equal(back.true_key, traces.true_key)
    np.testing.assert_allclose(back.samples, traces.samples, rtol=1e-12)


def test_from_records_checks_widths():
    good = TraceRecord(np.zeros(16, np.uint8), np.zeros(16, np.uint8), np.array([1.0, 2.0]))
    bad = TraceRecord(np.zeros(16, np.uint8), np.zeros(16, np.uint8), np.array([1.0]))
    assert len(TraceSet.from_records("x", [good, good])) == 2
    with pytest.raises(tracestore.SampleCountMismatch):
        TraceSet.from_records("x", [good, bad])


def test_plaintext_class_labels():
    assert [c.label for c in PlaintextClass] == ["all0", "all1", "random"]
    assert PlaintextClass.parse("All 1s") is PlaintextClass.ALL_ONES
    assert PlaintextClass.parse("random") is PlaintextClass.RANDOM
