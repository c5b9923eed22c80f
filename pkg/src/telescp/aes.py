"""Bit-exact AES-128 model exposing the round states the power models target.

Byte order is the FIPS-197 column-major state layout everywhere: byte ``i``
of a block is row ``i % 4``, column ``i // 4``.
"""
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SBOX",
    "INV_SBOX",
    "HW_TABLE",
    "SHIFT_ROWS",
    "INV_SHIFT_ROWS",
    "IntermediateTrace",
    "as_block",
    "expand_key",
    "encrypt_block",
    "encrypt_batch",
    "invert_key_schedule",
    "hamming_weight",
    "hamming_distance",
]


def _gf_mul(a, b):
    p = 0
    for _ in range(8):
        if b & 1:
            p ^= a
        hi = a & 0x80
        a = (a << 1) & 0xFF
        if hi:
            a ^= 0x1B
        b >>= 1
    return p


def _build_sbox():
    inv = [0] * 256
    for a in range(1, 256):
        for b in range(1, 256):
            if _gf_mul(a, b) == 1:
                inv[a] = b
                break
    sbox = []
    for x in range(256):
        b = inv[x]
        s = b
        for shift in range(1, 5):
            s ^= ((b << shift) | (b >> (8 - shift))) & 0xFF
        sbox.append(s ^ 0x63)
    return sbox


_SBOX_LIST = _build_sbox()
SBOX = np.array(_SBOX_LIST, dtype=np.uint8)
INV_SBOX = np.zeros(256, dtype=np.uint8)
INV_SBOX[SBOX] = np.arange(256, dtype=np.uint8)
SBOX.setflags(write=False)
INV_SBOX.setflags(write=False)

MUL2 = np.array([_gf_mul(x, 2) for x in range(256)], dtype=np.uint8)
MUL2.setflags(write=False)

HW_TABLE = np.array([bin(x).count("1") for x in range(256)], dtype=np.uint8)
HW_TABLE.setflags(write=False)

# out[i] = in[SHIFT_ROWS[i]]: row r is rotated left by r columns.
SHIFT_ROWS = np.array([(i % 4) + 4 * (((i // 4) + (i % 4)) % 4) for i in range(16)], dtype=np.intp)
INV_SHIFT_ROWS = np.argsort(SHIFT_ROWS)
SHIFT_ROWS.setflags(write=False)
INV_SHIFT_ROWS.setflags(write=False)

_RCON = (0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1B, 0x36)


def as_block(value):
    """Coerce bytes, a hex string or an int sequence to a 16-byte uint8 array."""
    if isinstance(value, str):
        value = bytes.fromhex(value.replace(" ", ""))
    arr = np.frombuffer(bytes(value), dtype=np.uint8) if isinstance(value, (bytes, bytearray)) else np.asarray(value)
    if arr.shape != (16,):
        raise ValueError(f"AES block must be exactly 16 bytes, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if np.any((arr < 0) | (arr > 255)):
            raise ValueError("block bytes must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    return arr.copy()


def expand_key(master_key):
    """Return the 11 round keys of AES-128 as an ``(11, 16)`` uint8 array."""
    key = as_block(master_key)
    words = [list(key[4 * i:4 * i + 4]) for i in range(4)]
    for i in range(4, 44):
        w = list(words[i - 1])
        if i % 4 == 0:
            w = w[1:] + w[:1]
            w = [_SBOX_LIST[b] for b in w]
            w[0] ^= _RCON[i // 4 - 1]
        words.append([a ^ b for a, b in zip(words[i - 4], w)])
    return np.array(words, dtype=np.uint8).reshape(11, 16)


def invert_key_schedule(round10_key):
    """Walk the key schedule backwards from the last round key to the master key."""
    k = as_block(round10_key)
    words = [None] * 44
    for j in range(4):
        words[40 + j] = [int(b) for b in k[4 * j:4 * j + 4]]
    for i in range(43, 3, -1):
        if i % 4 == 0:
            t = words[i - 1]
            t = t[1:] + t[:1]
            t = [_SBOX_LIST[b] for b in t]
            t[0] ^= _RCON[i // 4 - 1]
        else:
            t = words[i - 1]
        words[i - 4] = [a ^ b for a, b in zip(words[i], t)]
    return np.array(words[:4], dtype=np.uint8).reshape(16)


def _mix_columns(state):
    out = np.empty_like(state)
    for c in range(4):
        a = state[4 * c:4 * c + 4]
        t = a[0] ^ a[1] ^ a[2] ^ a[3]
        for r in range(4):
            out[4 * c + r] = a[r] ^ t ^ MUL2[a[r] ^ a[(r + 1) % 4]]
    return out


@dataclass(frozen=True)
class IntermediateTrace:
    """Round states of one encryption.

    ``state_after_addroundkey[r]`` is the state right after round ``r``'s
    AddRoundKey (row 10 is the ciphertext). ``state_before_subbytes[r]`` is
    the input of round ``r`` for ``r`` in 1..10; row 0 holds the plaintext.
    """

    state_after_addroundkey: np.ndarray
    state_before_subbytes: np.ndarray
    ciphertext: np.ndarray


def encrypt_block(plaintext, key):
    """Encrypt one block, returning ``(ciphertext, IntermediateTrace)``."""
    pt = as_block(plaintext)
    rk = expand_key(key)
    after_ark = np.empty((11, 16), dtype=np.uint8)
    before_sb = np.empty((11, 16), dtype=np.uint8)
    before_sb[0] = pt
    state = pt ^ rk[0]
    after_ark[0] = state
    for rnd in range(1, 11):
        before_sb[rnd] = state
        state = SBOX[state][SHIFT_ROWS]
        if rnd != 10:
            state = _mix_columns(state)
        state = state ^ rk[rnd]
        after_ark[rnd] = state
    ct = state.copy()
    return ct, IntermediateTrace(after_ark, before_sb, ct)


def encrypt_batch(plaintexts, key):
    """Vectorised encryption of an ``(N, 16)`` plaintext array.

    Returns ``(ciphertexts, round0_state, round10_input)``, each ``(N, 16)``
    uint8: the state after the first AddRoundKey and the input to the last
    round's SubBytes.
    """
    from telescp import kernels

    pts = np.ascontiguousarray(plaintexts, dtype=np.uint8)
    if pts.ndim != 2 or pts.shape[1] != 16:
        raise ValueError("plaintexts must have shape (N, 16)")
    rk = expand_key(key)
    cts, rd10 = kernels.aes_encrypt_batch(pts, rk)
    return cts, pts ^ rk[0], rd10


def hamming_weight(v):
    return int(HW_TABLE[int(v) & 0xFF]) if np.ndim(v) == 0 else HW_TABLE[np.asarray(v, dtype=np.uint8)]


def hamming_distance(a, b):
    if np.ndim(a) == 0 and np.ndim(b) == 0:
        return int(HW_TABLE[(int(a) ^ int(b)) & 0xFF])
    return HW_TABLE[np.bitwise_xor(np.asarray(a, dtype=np.uint8), np.asarray(b, dtype=np.uint8))]
