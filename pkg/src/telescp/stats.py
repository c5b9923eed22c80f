"""Streaming, mergeable moment statistics: Welch's t-test and Pearson's r.

Accumulators hold centred moments (Welford / Chan et al.), so partial results
from independent chunks can be combined without a second pass. Chunk results
are always combined with :func:`tree_reduce`, a fixed binary tree over chunk
indices, which makes multi-worker runs bitwise reproducible for a given chunk
size.
"""
import math
from dataclasses import dataclass

import numpy as np

#: ``|t| >= THRESHOLD_TVLA`` means two trace groups are statistically
#: distinguishable with 99.999% confidence.
THRESHOLD_TVLA = 4.5


class StatsError(ValueError):
    pass


class DegenerateVariance(StatsError):
    """A statistic's denominator vanished (constant data)."""


class InsufficientData(StatsError):
    """Fewer observations than the statistic needs."""


def _check_finite(*values):
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"non-finite value {v!r}")


@dataclass(frozen=True)
class MomentAccumulator:
    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def add(self, value):
        return accumulate(self, value)

    def extend(self, values):
        acc = self
        for v in values:
            acc = accumulate(acc, v)
        return acc

    @property
    def variance(self):
        """Sample variance (n - 1 denominator)."""
        if self.n < 2:
            raise InsufficientData("variance needs at least 2 observations")
        return self.m2 / (self.n - 1)

    @classmethod
    def from_values(cls, values):
        return cls().extend(values)


def accumulate(acc, value):
    value = float(value)
    _check_finite(value)
    n = acc.n + 1
    delta = value - acc.mean
    mean = acc.mean + delta / n
    return MomentAccumulator(n, mean, acc.m2 + delta * (value - mean))


def merge(a, b):
    if a.n == 0:
        return b
    if b.n == 0:
        return a
    n = a.n + b.n
    delta = b.mean - a.mean
    mean = a.mean + delta * b.n / n
    m2 = a.m2 + b.m2 + delta * delta * a.n * b.n / n
    return MomentAccumulator(n, mean, m2)


def welch_t(a, b):
    """Welch's t statistic, positive when ``a``'s mean exceeds ``b``'s."""
    if a.n < 2 or b.n < 2:
        raise InsufficientData(f"welch_t needs n >= 2 per group (got {a.n}, {b.n})")
    se2 = a.m2 / (a.n - 1) / a.n + b.m2 / (b.n - 1) / b.n
    if se2 == 0.0:
        raise DegenerateVariance("both groups have zero sample variance")
    return (a.mean - b.mean) / math.sqrt(se2)


@dataclass(frozen=True)
class CorrAccumulator:
    n: int = 0
    mean_x: float = 0.0
    mean_y: float = 0.0
    m2_x: float = 0.0
    m2_y: float = 0.0
    cxy: float = 0.0

    def add(self, x, y):
        return accumulate_pair(self, x, y)

    @classmethod
    def from_pairs(cls, xs, ys):
        acc = cls()
        for x, y in zip(xs, ys):
            acc = accumulate_pair(acc, x, y)
        return acc


def accumulate_pair(acc, x, y):
    x = float(x)
    y = float(y)
    _check_finite(x, y)
    n = acc.n + 1
    dx = x - acc.mean_x
    dy = y - acc.mean_y
    mean_x = acc.mean_x + dx / n
    mean_y = acc.mean_y + dy / n
    return CorrAccumulator(
        n,
        mean_x,
        mean_y,
        acc.m2_x + dx * (x - mean_x),
        acc.m2_y + dy * (y - mean_y),
        acc.cxy + dx * (y - mean_y),
    )


def merge_corr(a, b):
    if a.n == 0:
        return b
    if b.n == 0:
        return a
    n = a.n + b.n
    f = a.n * b.n / n
    dx = b.mean_x - a.mean_x
    dy = b.mean_y - a.mean_y
    return CorrAccumulator(
        n,
        a.mean_x + dx * b.n / n,
        a.mean_y + dy * b.n / n,
        a.m2_x + b.m2_x + dx * dx * f,
        a.m2_y + b.m2_y + dy * dy * f,
        a.cxy + b.cxy + dx * dy * f,
    )


def pearson(acc):
    if acc.n < 2:
        raise InsufficientData("pearson needs at least 2 pairs")
    if acc.m2_x == 0.0 or acc.m2_y == 0.0:
        raise DegenerateVariance("constant series has no correlation")
    r = acc.cxy / math.sqrt(acc.m2_x * acc.m2_y)
    return min(1.0, max(-1.0, r))


# ------------------------------------------------------------------ arrays
#
# The array forms below carry (n, mean, m2) with arbitrary broadcastable
# shapes; they are what the TVLA and CPA drivers actually stream through.

@dataclass
class MomentArrays:
    n: np.ndarray
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def from_chunk(cls, samples):
        """Two-pass moments over axis 0 of a ``(N, S)`` chunk."""
        samples = np.asarray(samples, dtype=np.float64)
        n = samples.shape[0]
        if n == 0:
            shape = samples.shape[1:]
            return cls(np.zeros(shape, dtype=np.int64), np.zeros(shape), np.zeros(shape))
        mean = samples.mean(axis=0)
        m2 = ((samples - mean) ** 2).sum(axis=0)
        return cls(np.full(mean.shape, n, dtype=np.int64), mean, m2)

    def scalar(self, index=()):
        return MomentAccumulator(int(self.n[index]), float(self.mean[index]), float(self.m2[index]))


def merge_arrays(a, b):
    """Chan's pairwise update, elementwise; empty cells are identities."""
    n = a.n + b.n
    with np.errstate(invalid="ignore", divide="ignore"):
        wb = np.where(n > 0, b.n / np.maximum(n, 1), 0.0)
        delta = b.mean - a.mean
        mean = np.where(a.n == 0, b.mean, np.where(b.n == 0, a.mean, a.mean + delta * wb))
        m2 = a.m2 + b.m2 + np.where((a.n > 0) & (b.n > 0), delta * delta * a.n * wb, 0.0)
    return MomentArrays(n, mean, m2)


def tree_reduce(items, combine):
    """Combine ``items`` pairwise in a fixed binary tree over their indices."""
    items = list(items)
    if not items:
        raise ValueError("nothing to reduce")
    while len(items) > 1:
        nxt = [combine(items[k], items[k + 1]) for k in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]


def welch_t_arrays(a, b):
    """Elementwise Welch t; cells with zero standard error come back NaN."""
    if np.any(a.n < 2) or np.any(b.n < 2):
        raise InsufficientData("welch_t needs n >= 2 per group")
    se2 = a.m2 / (a.n - 1) / a.n + b.m2 / (b.n - 1) / b.n
    with np.errstate(invalid="ignore", divide="ignore"):
        t = (a.mean - b.mean) / np.sqrt(se2)
    return np.where(se2 == 0.0, np.nan, t)
