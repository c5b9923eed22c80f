"""Counter-based random streams.

Every random draw is a pure function of ``(seed, stream, row, column)``, so
trace ``i`` gets the same numbers no matter how a campaign is split across
workers. The generator is the SplitMix64 finaliser::

    mix(x)  = x ^= x >> 30; x *= 0xBF58476D1CE4E5B9
              x ^= x >> 27; x *= 0x94D049BB133111EB; x ^= x >> 31
    key     = mix(seed + stream * 0x9E3779B97F4A7C15)          (mod 2**64)
    h(i, j) = mix(mix(key ^ i) + j)

Uniforms take the top 53 bits of ``h``; Gaussians use Box-Muller on the
pair ``h(i, 2j), h(i, 2j + 1)`` with ``u1 = 1 - U`` so the logarithm never
sees zero.
"""
import numpy as np

from telescp import kernels

STREAM_NOISE = 1
STREAM_PLAINTEXT = 2
STREAM_MITIGATION = 3
STREAM_TIMING = 4
STREAM_SENSOR = 5


def stream_key(seed, stream):
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    x = np.array([(seed + stream * 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    with np.errstate(over="ignore"):
        return np.uint64(kernels._mix_numpy(x)[0])


def normals(seed, stream, n_rows, n_cols, row_offset=0):
    """``(n_rows, n_cols)`` standard normals for rows ``row_offset...``."""
    return kernels.normal_from_counter(stream_key(seed, stream), n_rows, n_cols, row_offset)


def random_blocks(seed, n, row_offset=0, stream=STREAM_PLAINTEXT):
    """``(n, 16)`` uniformly random bytes; row ``i`` depends only on ``(seed, i)``."""
    rows = (np.arange(n, dtype=np.uint64) + np.uint64(row_offset))[:, None]
    h = kernels.hash_u64(stream_key(seed, stream), rows, np.arange(2, dtype=np.uint64)[None, :])
    return np.ascontiguousarray(h.astype("<u8")).view(np.uint8).reshape(n, 16)
