"""Trace containers and the ``SCT1`` binary / CSV interchange formats.

Binary layout (little-endian throughout)::

    magic            4s   b"SCT1"
    version          u16  1
    flags            u16  bit0 key present, bit1 class label present
    trace_count      u64
    samples_per_trace u32
    name_len         u8   then name_len bytes of UTF-8 channel name
    [class label     u8   0=AllZeros 1=AllOnes 2=Random]   if bit1
    [key             16s]                                  if bit0
    records          trace_count x (16s plaintext, 16s ciphertext,
                                    samples_per_trace x f64)
"""
import csv
import enum
import io
import os
import struct
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

MAGIC = b"SCT1"
VERSION = 1
FLAG_KEY = 0x1
FLAG_CLASS = 0x2

_HEADER = struct.Struct("<4sHHQI")


class PlaintextClass(enum.IntEnum):
    ALL_ZEROS = 0
    ALL_ONES = 1
    RANDOM = 2

    @property
    def label(self):
        return _CLASS_LABELS[self]

    @property
    def title(self):
        return _CLASS_TITLES[self]

    @classmethod
    def parse(cls, text):
        key = "".join(ch for ch in str(text).lower() if ch not in " _-'")
        for member, aliases in _CLASS_ALIASES.items():
            if key in aliases:
                return member
        raise ValueError(f"unknown plaintext class {text!r} (expected all0, all1 or random)")


_CLASS_LABELS = {PlaintextClass.ALL_ZEROS: "all0", PlaintextClass.ALL_ONES: "all1", PlaintextClass.RANDOM: "random"}
_CLASS_TITLES = {PlaintextClass.ALL_ZEROS: "All 0s", PlaintextClass.ALL_ONES: "All 1s", PlaintextClass.RANDOM: "Random"}
_CLASS_ALIASES = {
    PlaintextClass.ALL_ZEROS: {"all0", "all0s", "allzeros", "zeros", "0"},
    PlaintextClass.ALL_ONES: {"all1", "all1s", "allones", "ones", "1"},
    PlaintextClass.RANDOM: {"random", "rand", "2"},
}


class TraceFormatError(ValueError):
    pass


class BadMagic(TraceFormatError):
    pass


class UnsupportedVersion(TraceFormatError):
    pass


class TruncatedStream(TraceFormatError):
    pass


class SampleCountMismatch(TraceFormatError):
    pass


class TraceRecord(NamedTuple):
    plaintext: np.ndarray
    ciphertext: np.ndarray
    samples: np.ndarray


@dataclass
class TraceSet:
    """Column-oriented trace collection: row ``i`` of each array is record ``i``."""

    channel_name: str
    plaintexts: np.ndarray
    ciphertexts: np.ndarray
    samples: np.ndarray
    class_label: Optional[PlaintextClass] = None
    true_key: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.plaintexts = np.ascontiguousarray(self.plaintexts, dtype=np.uint8)
        self.ciphertexts = np.ascontiguousarray(self.ciphertexts, dtype=np.uint8)
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[:, None]
        self.samples = np.ascontiguousarray(samples)
        n = self.plaintexts.shape[0]
        if self.plaintexts.shape != (n, 16) or self.ciphertexts.shape != (n, 16):
            raise ValueError("plaintexts and ciphertexts must both have shape (N, 16)")
        if self.samples.ndim != 2 or self.samples.shape[0] != n:
            raise SampleCountMismatch(f"expected {n} sample rows, got shape {self.samples.shape}")
        if self.true_key is not None:
            self.true_key = np.asarray(self.true_key, dtype=np.uint8).reshape(16).copy()
        if self.class_label is not None:
            self.class_label = PlaintextClass(self.class_label)

    @classmethod
    def from_records(cls, channel_name, records, class_label=None, true_key=None):
        records = list(records)
        counts = {len(np.atleast_1d(r.samples)) for r in records}
        if len(counts) > 1:
            raise SampleCountMismatch(f"records disagree on sample count: {sorted(counts)}")
        width = counts.pop() if counts else 1
        return cls(
            channel_name,
            np.array([r.plaintext for r in records], dtype=np.uint8).reshape(-1, 16),
            np.array([r.ciphertext for r in records], dtype=np.uint8).reshape(-1, 16),
            np.array([np.atleast_1d(r.samples) for r in records], dtype=np.float64).reshape(-1, width),
            class_label,
            true_key,
        )

    def __len__(self):
        return self.plaintexts.shape[0]

    def __iter__(self):
        for i in range(len(self)):
            yield self.record(i)

    def record(self, i):
        return TraceRecord(self.plaintexts[i], self.ciphertexts[i], self.samples[i])

    @property
    def samples_per_trace(self):
        return self.samples.shape[1]

    def select(self, index):
        """Sub-collection for a slice, boolean mask or index array."""
        return TraceSet(
            self.channel_name,
            self.plaintexts[index],
            self.ciphertexts[index],
            self.samples[index],
            self.class_label,
            self.true_key,
            dict(self.meta),
        )

    def with_samples(self, samples):
        return TraceSet(self.channel_name, self.plaintexts, self.ciphertexts, samples,
                        self.class_label, self.true_key, dict(self.meta))

    def equals(self, other):
        """Bitwise equality of every stored field."""
        if not isinstance(other, TraceSet):
            return False
        keys_equal = (self.true_key is None and other.true_key is None) or (
            self.true_key is not None and other.true_key is not None
            and np.array_equal(self.true_key, other.true_key)
        )
        return (
            self.channel_name == other.channel_name
            and self.class_label == other.class_label
            and keys_equal
            and np.array_equal(self.plaintexts, other.plaintexts)
            and np.array_equal(self.ciphertexts, other.ciphertexts)
            and self.samples.shape == other.samples.shape
            and self.samples.tobytes() == other.samples.tobytes()
        )


# ------------------------------------------------------------------ binary

def _open(target, mode):
    if isinstance(target, (str, os.PathLike)):
        return open(target, mode), True
    return target, False


def write_traceset(ts, destination, embed_key=False):
    """Serialise ``ts``; returns the number of bytes written.

    The true key is only stored when ``embed_key`` is set.
    """
    name = ts.channel_name.encode("utf-8")
    if len(name) > 255:
        raise ValueError("channel name longer than 255 bytes")
    flags = 0
    if embed_key and ts.true_key is not None:
        flags |= FLAG_KEY
    if ts.class_label is not None:
        flags |= FLAG_CLASS
    parts = [_HEADER.pack(MAGIC, VERSION, flags, len(ts), ts.samples_per_trace), bytes([len(name)]), name]
    if flags & FLAG_CLASS:
        parts.append(bytes([int(ts.class_label)]))
    if flags & FLAG_KEY:
        parts.append(ts.true_key.tobytes())
    rec = np.empty(len(ts), dtype=_record_dtype(ts.samples_per_trace))
    rec["pt"] = ts.plaintexts
    rec["ct"] = ts.ciphertexts
    rec["samples"] = ts.samples
    parts.append(rec.tobytes())
    payload = b"".join(parts)
    fh, owned = _open(destination, "wb")
    try:
        fh.write(payload)
    finally:
        if owned:
            fh.close()
    return len(payload)


def _record_dtype(n_samples):
    return np.dtype([("pt", "u1", (16,)), ("ct", "u1", (16,)), ("samples", "<f8", (n_samples,))])


def _take(buf, pos, n, what):
    if pos + n > len(buf):
        raise TruncatedStream(f"stream ends inside {what}")
    return buf[pos:pos + n], pos + n


def read_traceset(source):
    fh, owned = _open(source, "rb")
    try:
        buf = fh.read()
    finally:
        if owned:
            fh.close()
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadMagic(f"not a trace file (magic {bytes(buf[:4])!r})")
    head, pos = _take(buf, 0, _HEADER.size, "header")
    _, version, flags, count, width = _HEADER.unpack(head)
    if version != VERSION:
        raise UnsupportedVersion(f"trace format version {version} (this reader handles {VERSION})")
    raw, pos = _take(buf, pos, 1, "channel name length")
    raw_name, pos = _take(buf, pos, raw[0], "channel name")
    class_label = None
    key = None
    if flags & FLAG_CLASS:
        raw, pos = _take(buf, pos, 1, "class label")
        try:
            class_label = PlaintextClass(raw[0])
        except ValueError:
            raise TraceFormatError(f"unknown class label byte {raw[0]}") from None
    if flags & FLAG_KEY:
        raw, pos = _take(buf, pos, 16, "key")
        key = np.frombuffer(raw, dtype=np.uint8).copy()
    dt = _record_dtype(width)
    body = len(buf) - pos
    if body < count * dt.itemsize:
        raise TruncatedStream(f"header declares {count} traces, stream holds {body // dt.itemsize}")
    if body > count * dt.itemsize:
        raise SampleCountMismatch(
            f"{body - count * dt.itemsize} trailing bytes do not match {count} records of {width} samples"
        )
    rec = np.frombuffer(buf, dtype=dt, count=count, offset=pos)
    return TraceSet(
        raw_name.decode("utf-8"),
        rec["pt"].copy(),
        rec["ct"].copy(),
        rec["samples"].astype(np.float64),
        class_label,
        key,
    )


# --------------------------------------------------------------------- CSV

def export_csv(ts, destination):
    """Write one header row plus one row per trace; returns the row count."""
    with_key = ts.true_key is not None
    header = ["plaintext", "ciphertext"] + (["key"] if with_key else [])
    header += [f"s{j}" for j in range(ts.samples_per_trace)]
    key_hex = ts.true_key.tobytes().hex() if with_key else None
    fh, owned = (open(destination, "w", newline=""), True) if isinstance(destination, (str, os.PathLike)) \
        else (destination, False)
    try:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(len(ts)):
            row = [ts.plaintexts[i].tobytes().hex(), ts.ciphertexts[i].tobytes().hex()]
            if with_key:
                row.append(key_hex)
            row.extend(format(float(v), ".17g") for v in ts.samples[i])
            w.writerow(row)
    finally:
        if owned:
            fh.close()
    return len(ts) + 1


def import_csv(source, channel_name="csv", class_label=None):
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="") as fh:
            text = fh.read()
    else:
        text = source.read()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise TruncatedStream("empty CSV")
    header, body = rows[0], rows[1:]
    cols = {name: k for k, name in enumerate(header)}
    sample_cols = [k for k, name in enumerate(header) if name.startswith("s") and name[1:].isdigit()]
    pts = np.array([list(bytes.fromhex(r[cols["plaintext"]])) for r in body], dtype=np.uint8).reshape(-1, 16)
    cts = np.array([list(bytes.fromhex(r[cols["ciphertext"]])) for r in body], dtype=np.uint8).reshape(-1, 16)
    samples = np.array([[float(r[k]) for k in sample_cols] for r in body], dtype=np.float64)
    key = None
    if "key" in cols and body:
        key = np.frombuffer(bytes.fromhex(body[0][cols["key"]]), dtype=np.uint8)
    return TraceSet(channel_name, pts, cts, samples.reshape(len(body), len(sample_cols)), class_label, key)
