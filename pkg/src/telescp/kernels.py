"""Hot inner loops, each with a numba and a pure-numpy implementation.

The public names (``aes_encrypt_batch``, ``hash_u64``, ``normal_from_counter``,
``group_moments``) dispatch to the numba versions unless numba is missing or
``TELESCP_DISABLE_NUMBA`` is set. Both implementations stay importable as
``*_numpy`` / ``*_numba`` so tests and the benchmark can compare them.
"""
import numpy as np

from telescp._accel import USE_NUMBA, njit
from telescp.aes import MUL2, SBOX, SHIFT_ROWS

_SBOX = np.asarray(SBOX)
_MUL2 = np.asarray(MUL2)
_SR = np.asarray(SHIFT_ROWS, dtype=np.int64)

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV_2_53 = 1.0 / 9007199254740992.0
_TWO_PI = 2.0 * np.pi


# --------------------------------------------------------------------- AES

def aes_encrypt_batch_numpy(pts, round_keys):
    state = pts ^ round_keys[0]
    rd10 = state
    for rnd in range(1, 11):
        if rnd == 10:
            rd10 = state
        state = _SBOX[state][:, _SR]
        if rnd != 10:
            cols = state.reshape(-1, 4, 4)
            t = cols[:, :, 0] ^ cols[:, :, 1] ^ cols[:, :, 2] ^ cols[:, :, 3]
            rolled = np.roll(cols, -1, axis=2)
            state = (cols ^ t[:, :, None] ^ _MUL2[cols ^ rolled]).reshape(-1, 16)
        state = state ^ round_keys[rnd]
    return np.ascontiguousarray(state), np.ascontiguousarray(rd10)


@njit(cache=True, nogil=True)
def aes_encrypt_batch_numba(pts, round_keys):
    n = pts.shape[0]
    cts = np.empty((n, 16), dtype=np.uint8)
    rd10 = np.empty((n, 16), dtype=np.uint8)
    s = np.empty(16, dtype=np.uint8)
    t = np.empty(16, dtype=np.uint8)
    for i in range(n):
        for b in range(16):
            s[b] = pts[i, b] ^ round_keys[0, b]
        for rnd in range(1, 11):
            if rnd == 10:
                for b in range(16):
                    rd10[i, b] = s[b]
            for b in range(16):
                t[b] = _SBOX[s[_SR[b]]]
            if rnd != 10:
                for c in range(4):
                    a0 = t[4 * c]
                    a1 = t[4 * c + 1]
                    a2 = t[4 * c + 2]
                    a3 = t[4 * c + 3]
                    x = a0 ^ a1 ^ a2 ^ a3
                    s[4 * c] = a0 ^ x ^ _MUL2[a0 ^ a1]
                    s[4 * c + 1] = a1 ^ x ^ _MUL2[a1 ^ a2]
                    s[4 * c + 2] = a2 ^ x ^ _MUL2[a2 ^ a3]
                    s[4 * c + 3] = a3 ^ x ^ _MUL2[a3 ^ a0]
            else:
                for b in range(16):
                    s[b] = t[b]
            for b in range(16):
                s[b] = s[b] ^ round_keys[rnd, b]
        for b in range(16):
            cts[i, b] = s[b]
    return cts, rd10


# ------------------------------------------------------- counter-based RNG

def _mix_numpy(x):
    x = x ^ (x >> np.uint64(30))
    x = x * _M1
    x = x ^ (x >> np.uint64(27))
    x = x * _M2
    return x ^ (x >> np.uint64(31))


def hash_u64_numpy(key, i, j):
    """``mix(mix(key ^ i) + j)`` elementwise over uint64 arrays."""
    key = np.uint64(key)
    i = np.asarray(i, dtype=np.uint64)
    j = np.asarray(j, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix_numpy(_mix_numpy(key ^ i) + j)


def normal_from_counter_numpy(key, n_rows, n_cols, row_offset=0):
    """Standard normals for the ``(row, col)`` grid starting at ``row_offset``."""
    rows = (np.arange(n_rows, dtype=np.uint64) + np.uint64(row_offset))[:, None]
    cols = np.arange(n_cols, dtype=np.uint64)[None, :] * np.uint64(2)
    h0 = hash_u64_numpy(key, rows, cols)
    h1 = hash_u64_numpy(key, rows, cols + np.uint64(1))
    u1 = 1.0 - (h0 >> np.uint64(11)).astype(np.float64) * _INV_2_53
    u2 = (h1 >> np.uint64(11)).astype(np.float64) * _INV_2_53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)


@njit(cache=True, nogil=True)
def _mix_numba(x):
    x = x ^ (x >> np.uint64(30))
    x = x * np.uint64(0xBF58476D1CE4E5B9)
    x = x ^ (x >> np.uint64(27))
    x = x * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


@njit(cache=True, nogil=True)
def _normal_grid_numba(key, n_rows, n_cols, row_offset):
    out = np.empty((n_rows, n_cols), dtype=np.float64)
    for r in range(n_rows):
        row_key = _mix_numba(key ^ np.uint64(r + row_offset))
        for c in range(n_cols):
            h0 = _mix_numba(row_key + np.uint64(2 * c))
            h1 = _mix_numba(row_key + np.uint64(2 * c + 1))
            u1 = 1.0 - np.float64(h0 >> np.uint64(11)) * _INV_2_53
            u2 = np.float64(h1 >> np.uint64(11)) * _INV_2_53
            out[r, c] = np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)
    return out


def normal_from_counter_numba(key, n_rows, n_cols, row_offset=0):
    return _normal_grid_numba(np.uint64(key), int(n_rows), int(n_cols), int(row_offset))


# ------------------------------------------------ grouped moment accumulation

def group_moments_numpy(values, samples):
    """Per (byte position, byte value, sample) count, mean and centred M2.

    ``values`` is ``(N, 16)`` uint8 and ``samples`` ``(N, S)`` float64.
    Returns ``counts (16, 256)``, ``means (16, 256, S)``, ``m2 (16, 256, S)``
    computed two-pass over the chunk.
    """
    n_bytes = values.shape[1]
    n_samples = samples.shape[1]
    counts = np.empty((n_bytes, 256), dtype=np.int64)
    means = np.zeros((n_bytes, 256, n_samples))
    m2 = np.zeros((n_bytes, 256, n_samples))
    for b in range(n_bytes):
        idx = values[:, b]
        cnt = np.bincount(idx, minlength=256)
        counts[b] = cnt
        nz = cnt > 0
        for s in range(n_samples):
            y = samples[:, s]
            sums = np.bincount(idx, weights=y, minlength=256)
            mu = np.zeros(256)
            mu[nz] = sums[nz] / cnt[nz]
            means[b, :, s] = mu
            m2[b, :, s] = np.bincount(idx, weights=(y - mu[idx]) ** 2, minlength=256)
    return counts, means, m2


@njit(cache=True, nogil=True)
def group_moments_numba(values, samples):
    n, n_bytes = values.shape
    n_samples = samples.shape[1]
    counts = np.zeros((n_bytes, 256), dtype=np.int64)
    sums = np.zeros((n_bytes, 256, n_samples))
    for i in range(n):
        for b in range(n_bytes):
            v = values[i, b]
            counts[b, v] += 1
            for s in range(n_samples):
                sums[b, v, s] += samples[i, s]
    means = np.zeros((n_bytes, 256, n_samples))
    for b in range(n_bytes):
        for v in range(256):
            c = counts[b, v]
            if c > 0:
                for s in range(n_samples):
                    means[b, v, s] = sums[b, v, s] / c
    m2 = np.zeros((n_bytes, 256, n_samples))
    for i in range(n):
        for b in range(n_bytes):
            v = values[i, b]
            for s in range(n_samples):
                d = samples[i, s] - means[b, v, s]
                m2[b, v, s] += d * d
    return counts, means, m2


if USE_NUMBA:
    aes_encrypt_batch = aes_encrypt_batch_numba
    normal_from_counter = normal_from_counter_numba
    group_moments = group_moments_numba
else:
    aes_encrypt_batch = aes_encrypt_batch_numpy
    normal_from_counter = normal_from_counter_numpy
    group_moments = group_moments_numpy

hash_u64 = hash_u64_numpy
