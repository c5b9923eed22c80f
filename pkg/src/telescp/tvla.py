"""Three-class TVLA: Welch t-scores between fixed-plaintext trace groups.

Cell ``(row, col)`` of the report is ``t(row group, col group)``. Diagonal
cells compare the first half of a class's traces with the second half.
"""
import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from telescp import rng
from telescp.leakage import PlaintextSource, _chunks, _map_chunks, simulate_campaign
from telescp.stats import (
    THRESHOLD_TVLA,
    InsufficientData,
    MomentArrays,
    merge_arrays,
    tree_reduce,
    welch_t_arrays,
)
from telescp.tracestore import PlaintextClass

TP, TN, FP, FN, INDETERMINATE = "TP", "TN", "FP", "FN", "IND"
DEFAULT_CHUNK = 4096


def classify_cell(t, same_plaintext, threshold=THRESHOLD_TVLA):
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    hit = abs(t) >= threshold
    if same_plaintext:
        return FP if hit else TN
    return TP if hit else FN


@dataclass
class TvlaReport:
    classes: List[PlaintextClass]
    t_matrix: np.ndarray
    classification: List[List[str]]
    threshold: float = THRESHOLD_TVLA
    sample_index: Optional[np.ndarray] = None
    counts: Dict[str, int] = field(default_factory=dict)
    channel: str = ""
    profile: Optional[dict] = None

    def tally(self):
        out = {TP: 0, TN: 0, FP: 0, FN: 0, INDETERMINATE: 0}
        for row in self.classification:
            for c in row:
                out[c] += 1
        return out

    def cell(self, row_class, col_class):
        return self.t_matrix[self.classes.index(row_class), self.classes.index(col_class)]

    def to_dict(self):
        t = [[None if math.isnan(v) else float(v) for v in row] for row in self.t_matrix]
        d = {
            "channel": self.channel,
            "threshold": self.threshold,
            "classes": [c.label for c in self.classes],
            "t_matrix": t,
            "classification": [list(r) for r in self.classification],
            "sample_index": None if self.sample_index is None else self.sample_index.tolist(),
            "counts": dict(self.counts),
            "tally": self.tally(),
        }
        if self.profile is not None:
            d["profile"] = self.profile
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self):
        """Text table with the primed (split-half) classes as rows."""
        width = 12
        head = f"{'Plaintext':<10}" + "".join(f"{c.title:>{width}}" for c in self.classes)
        lines = [f"channel {self.channel or '?'}: t-scores, |t| >= {self.threshold:g} distinguishable", head]
        for i, rc in enumerate(self.classes):
            cells = []
            for j in range(len(self.classes)):
                v = self.t_matrix[i, j]
                txt = "nan" if math.isnan(v) else f"{v:.2f}"
                cells.append(f"{txt + ' ' + self.classification[i][j]:>{width}}")
            lines.append(f"{rc.title + chr(39):<10}" + "".join(cells))
        tally = self.tally()
        lines.append("  ".join(f"{k}={v}" for k, v in tally.items()))
        return "\n".join(lines)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["row", "col", "t", "label"])
        for i, rc in enumerate(self.classes):
            for j, cc in enumerate(self.classes):
                v = self.t_matrix[i, j]
                w.writerow([rc.label, cc.label, "" if math.isnan(v) else repr(float(v)), self.classification[i][j]])
        return buf.getvalue()


def _moments(samples, lo, hi, chunk_size, workers):
    spans = [(lo + a, lo + b) for a, b in _chunks(hi - lo, chunk_size)]
    parts = _map_chunks(lambda s: MomentArrays.from_chunk(samples[s[0]:s[1]]), spans, workers)
    return tree_reduce(parts, merge_arrays)


def _pick(t, sample_index):
    """Reduce a per-sample t vector to one value and the sample it came from."""
    if sample_index is not None:
        return t[sample_index], sample_index
    if np.all(np.isnan(t)):
        return np.nan, 0
    j = int(np.nanargmax(np.abs(t)))
    return t[j], j


def run_tvla(groups, sample_index=None, threshold=THRESHOLD_TVLA, workers=1, chunk_size=DEFAULT_CHUNK):
    """TVLA between every pair of plaintext classes in ``groups``.

    ``sample_index=None`` reports, per cell, the sample with the largest
    ``|t|`` (sample 0 for single-sample traces). Degenerate cells are NaN and
    classified ``IND``.
    """
    if len(groups) < 2:
        raise ValueError("TVLA needs at least two plaintext classes")
    classes = sorted(groups, key=int)
    widths = {groups[c].samples_per_trace for c in classes}
    if len(widths) != 1:
        raise ValueError("all groups must have the same samples per trace")
    width = widths.pop()
    if sample_index is not None and not 0 <= sample_index < width:
        raise IndexError(f"sample_index {sample_index} out of range for {width} samples")
    full, halves = {}, {}
    for c in classes:
        ts = groups[c]
        if len(ts) == 0:
            raise ValueError(f"class {c.label} has no traces")
        mid = len(ts) // 2
        first = _moments(ts.samples, 0, mid, chunk_size, workers) if mid else None
        second = _moments(ts.samples, mid, len(ts), chunk_size, workers)
        halves[c] = (first, second)
        full[c] = merge_arrays(first, second) if first is not None else second
    k = len(classes)
    t_matrix = np.full((k, k), np.nan)
    where = np.zeros((k, k), dtype=np.int64)
    labels = [[INDETERMINATE] * k for _ in range(k)]
    for i, rc in enumerate(classes):
        for j, cc in enumerate(classes):
            a, b = halves[rc] if i == j else (full[rc], full[cc])
            if a is None:
                continue
            try:
                t = welch_t_arrays(a, b)
            except InsufficientData:
                continue
            v, idx = _pick(t, sample_index)
            where[i, j] = idx
            if not math.isnan(v):
                t_matrix[i, j] = v
                labels[i][j] = classify_cell(v, i == j, threshold)
    first = groups[classes[0]]
    return TvlaReport(
        classes,
        t_matrix,
        labels,
        threshold,
        where,
        {c.label: len(groups[c]) for c in classes},
        first.channel_name,
        first.meta.get("profile"),
    )


DEFAULT_PT_SEED = 2024


def class_source(label, pt_seed=DEFAULT_PT_SEED):
    label = PlaintextClass(label)
    if label is PlaintextClass.ALL_ZEROS:
        return PlaintextSource.all_zeros()
    if label is PlaintextClass.ALL_ONES:
        return PlaintextSource.all_ones()
    return PlaintextSource.chosen_random(pt_seed)


def class_seed(seed, label):
    """Noise seed for one class so the classes get independent noise."""
    return int(rng.stream_key(seed, 16 + int(label)))


def collect_groups(profile, key, n_traces, seed, classes=tuple(PlaintextClass), pt_seed=DEFAULT_PT_SEED, workers=1):
    """Simulate one fixed-plaintext campaign per class."""
    return {
        PlaintextClass(c): simulate_campaign(class_source(c, pt_seed), key, n_traces, profile,
                                             class_seed(seed, c), workers)
        for c in classes
    }
