"""Correlation power analysis against AES-128.

Every hypothesis here is a function of a single plaintext or ciphertext byte,
so instead of 4,096 separate correlation accumulators the traces are streamed
once into per-(byte position, byte value) moment groups. Pearson's r for any
guess then follows exactly from the group counts, means and M2 values:

    cxy  = sum_v n_v (h(v) - h_mean) (y_v_mean - y_mean)
    m2_h = sum_v n_v (h(v) - h_mean)^2
    m2_y = sum_v m2_v + n_v (y_v_mean - y_mean)^2

Report rows are indexed by position in the *targeted* key: the master key for
Rd0-HW, the last round key for the Rd10 models.
"""
import csv
import enum
import io
import json
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from telescp import aes, kernels
from telescp.leakage import _chunks, _map_chunks
from telescp.stats import MomentArrays, merge_arrays, tree_reduce

DEFAULT_CHUNK = 8192


class LeakModel(enum.Enum):
    RD0_HW = "rd0-hw"
    RD10_HW = "rd10-hw"
    RD10_HD = "rd10-hd"

    @classmethod
    def parse(cls, text):
        t = str(text).strip().lower().replace("_", "-")
        for m in cls:
            if t == m.value or t == m.value.replace("-", ""):
                return m
        raise ValueError(f"unknown leakage model {text!r} (choose rd0-hw, rd10-hw or rd10-hd)")

    @property
    def targets_last_round(self):
        return self is not LeakModel.RD0_HW


class EmptyTraceSet(ValueError):
    pass


def _tables():
    g = np.arange(256, dtype=np.uint8)[:, None]
    v = np.arange(256, dtype=np.uint8)[None, :]
    hw = aes.HW_TABLE
    inv = aes.INV_SBOX
    t = {
        LeakModel.RD0_HW: hw[v ^ g],
        LeakModel.RD10_HW: hw[inv[v ^ g]],
        LeakModel.RD10_HD: hw[inv[v ^ g] ^ v],
    }
    for arr in t.values():
        arr.setflags(write=False)
    return t


#: ``HYPOTHESIS[model][guess, byte_value]`` -> predicted leakage in [0, 8].
HYPOTHESIS = _tables()


def hypothesis(model, pt, ct, byte_index, guess):
    """Predicted leakage of state byte ``byte_index`` under key-byte ``guess``.

    For the Rd10 models the guess targets last-round key byte
    ``INV_SHIFT_ROWS[byte_index]``, the ciphertext position that state byte
    lands on after ShiftRows.
    """
    if not 0 <= byte_index < 16:
        raise IndexError("byte_index must be in 0..15")
    if model is LeakModel.RD0_HW:
        return int(HYPOTHESIS[model][guess, aes.as_block(pt)[byte_index]])
    s = aes.INV_SHIFT_ROWS[byte_index]
    return int(HYPOTHESIS[model][guess, aes.as_block(ct)[s]])


def compute_ge(ranks):
    """Guessing entropy as the sum over key bytes of log2(rank)."""
    ranks = [int(r) for r in ranks]
    for r in ranks:
        if not 1 <= r <= 256:
            raise ValueError(f"rank {r} outside [1, 256]")
    return float(sum(math.log2(r) for r in ranks))


def rank_of(corr_row, true_guess):
    c = corr_row[true_guess]
    return 1 + int(np.sum(corr_row > c)) + int(np.sum(corr_row[:true_guess] == c))


@dataclass
class CpaReport:
    model: LeakModel
    corr: np.ndarray
    recovered_key_bytes: np.ndarray
    n_traces_used: int
    ranks: Optional[List[int]] = None
    guessing_entropy: Optional[float] = None
    absolute: bool = False
    best_sample: Optional[np.ndarray] = None

    @property
    def target(self):
        return "round10" if self.model.targets_last_round else "master"

    @property
    def recovered_master_key(self):
        if self.model.targets_last_round:
            return aes.invert_key_schedule(self.recovered_key_bytes)
        return self.recovered_key_bytes.copy()

    def to_dict(self, include_corr=True):
        d = {
            "model": self.model.value,
            "target": self.target,
            "n_traces_used": int(self.n_traces_used),
            "absolute": bool(self.absolute),
            "recovered_key_bytes": self.recovered_key_bytes.tobytes().hex(),
            "recovered_master_key": self.recovered_master_key.tobytes().hex(),
            "ranks": None if self.ranks is None else [int(r) for r in self.ranks],
            "guessing_entropy": self.guessing_entropy,
        }
        if include_corr:
            d["corr"] = [[float(v) for v in row] for row in self.corr]
        return d

    def to_json(self, include_corr=True):
        return json.dumps(self.to_dict(include_corr), indent=2, sort_keys=True)

    def to_text(self):
        lines = [f"CPA {self.model.value} on {self.n_traces_used} traces (target: {self.target} key)"]
        lines.append(f"{'byte':>4} {'guess':>5} {'corr':>9} {'rank':>5}")
        for b in range(16):
            g = int(self.recovered_key_bytes[b])
            rank = "-" if self.ranks is None else str(self.ranks[b])
            lines.append(f"{b:>4} {g:>5} {self.corr[b, g]:>9.5f} {rank:>5}")
        if self.guessing_entropy is not None:
            lines.append(f"GE {self.guessing_entropy:.1f}")
        lines.append(f"recovered key {self.recovered_master_key.tobytes().hex()}")
        return "\n".join(lines)


@dataclass
class GeCurve:
    points: List[tuple]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n_traces", "ge"])
        for n, ge in self.points:
            w.writerow([n, repr(float(ge))])
        return buf.getvalue()


# --------------------------------------------------------------- streaming

def _inputs(ts, model, delta):
    values = ts.ciphertexts if model.targets_last_round else ts.plaintexts
    samples = ts.samples
    if delta:
        samples = np.diff(samples, axis=0)
        values = values[1:]
    return np.ascontiguousarray(values), np.ascontiguousarray(samples)


def _chunk_groups(values, samples):
    counts, means, m2 = kernels.group_moments(values, samples)
    return MomentArrays(counts[:, :, None], means, m2)


def _group_stats(values, samples, lo, hi, chunk_size, workers):
    spans = [(lo + a, lo + b) for a, b in _chunks(hi - lo, chunk_size)]
    parts = _map_chunks(lambda s: _chunk_groups(values[s[0]:s[1]], samples[s[0]:s[1]]), spans, workers)
    return tree_reduce(parts, merge_arrays)


def correlations(groups, model):
    """``(16, 256, S)`` Pearson r for every (key byte, guess, sample)."""
    n = groups.n[:, :, 0].astype(np.float64)
    total = n.sum(axis=1)
    y_mean = np.einsum("bv,bvs->bs", n, groups.mean) / total[:, None]
    dy = groups.mean - y_mean[:, None, :]
    m2_y = groups.m2.sum(axis=1) + np.einsum("bv,bvs->bs", n, dy * dy)
    # a constant channel leaves only rounding residue in m2_y; call it zero
    floor = total[:, None] * (64 * np.finfo(np.float64).eps * np.abs(y_mean)) ** 2
    m2_y = np.where(m2_y <= floor, 0.0, m2_y)
    h = HYPOTHESIS[model].astype(np.float64)
    h_mean = n @ h.T / total[:, None]
    hc = h[None, :, :] - h_mean[:, :, None]
    weighted = hc * n[:, None, :]
    cxy = np.einsum("bgv,bvs->bgs", weighted, dy)
    m2_h = np.einsum("bgv,bgv->bg", weighted, hc)
    denom = m2_h[:, :, None] * m2_y[:, None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        r = cxy / np.sqrt(denom)
    r = np.where(denom > 0, r, 0.0)
    return np.clip(r, -1.0, 1.0)


def _target_key(model, true_key):
    key = aes.as_block(true_key)
    return aes.expand_key(key)[10] if model.targets_last_round else key


def _report(groups, model, true_key, absolute):
    r = correlations(groups, model)
    score = np.abs(r) if absolute else r
    best = np.argmax(score, axis=2)
    corr = np.take_along_axis(score, best[:, :, None], axis=2)[:, :, 0]
    recovered = np.argmax(corr, axis=1).astype(np.uint8)
    n_used = int(groups.n[0, :, 0].sum())
    ranks = ge = None
    if true_key is not None:
        target = _target_key(model, true_key)
        ranks = [rank_of(corr[b], int(target[b])) for b in range(16)]
        ge = compute_ge(ranks)
    return CpaReport(model, corr, recovered, n_used, ranks, ge, absolute, best)


def run_cpa(ts, model, true_key=None, absolute=False, delta=False, workers=1, chunk_size=DEFAULT_CHUNK):
    """Rank all key-byte guesses by correlation with the recorded channel.

    ``absolute=True`` ranks by ``|r|`` instead of signed r; with Rd0-HW that
    makes each key byte tie with its bitwise complement. ``delta=True``
    correlates against differences between consecutive readings.
    """
    if len(ts) == 0 or (delta and len(ts) < 2):
        raise EmptyTraceSet("CPA needs a non-empty trace set")
    values, samples = _inputs(ts, model, delta)
    groups = _group_stats(values, samples, 0, len(values), chunk_size, workers)
    return _report(groups, model, true_key, absolute)


def ge_curve(ts, model, true_key, step, absolute=False, delta=False, workers=1, chunk_size=DEFAULT_CHUNK):
    """GE after each further ``step`` traces, streaming the set once."""
    if len(ts) == 0:
        raise EmptyTraceSet("CPA needs a non-empty trace set")
    values, samples = _inputs(ts, model, delta)
    step = int(step)
    if not 1 <= step <= len(values):
        raise ValueError(f"step must be in 1..{len(values)}")
    points = []
    running = None
    for lo in range(0, len(values) - step + 1, step):
        block = _group_stats(values, samples, lo, lo + step, chunk_size, workers)
        running = block if running is None else merge_arrays(running, block)
        rep = _report(running, model, true_key, absolute)
        points.append((lo + step, rep.guessing_entropy))
    return GeCurve(points)
