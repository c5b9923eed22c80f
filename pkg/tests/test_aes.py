import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from telescp import aes
from conftest import FIPS_CT, FIPS_KEY, FIPS_PT, reference_encrypt

blocks = st.binary(min_size=16, max_size=16)


def test_fips_example_vector():
    ct, _ = aes.encrypt_block(FIPS_PT, FIPS_KEY)
    assert ct.tobytes().hex() == FIPS_CT


def test_round10_key_of_fips_key():
    assert aes.expand_key(FIPS_KEY)[10].tobytes().hex() == "d014f9a8c9ee2589e13f0cc8b6630ca6"


def test_zero_key_first_schedule_word():
    # RotWord(0) = 0, SubWord -> 63 63 63 63, Rcon[1] flips the first byte to 62.
    assert aes.expand_key(bytes(16))[1][:4].tolist() == [0x62, 0x63, 0x63, 0x63]


def test_invert_fips_round10_key():
    assert aes.invert_key_schedule("d014f9a8c9ee2589e13f0cc8b6630ca6").tobytes().hex() == FIPS_KEY


def test_invert_zero_key_roundtrip():
    assert not aes.invert_key_schedule(aes.expand_key(bytes(16))[10]).any()


@given(blocks)
def test_round0_key_is_master(k):
    assert aes.expand_key(k)[0].tobytes() == k


@given(blocks)
def test_key_schedule_roundtrip(k):
    assert aes.invert_key_schedule(aes.expand_key(k)[10]).tobytes() == k


def test_random_vectors_match_reference(rng):
    pts = rng.integers(0, 256, (1000, 16), dtype=np.uint8)
    keys = rng.integers(0, 256, (1000, 16), dtype=np.uint8)
    for pt, k in zip(pts, keys):
        ct, _ = aes.encrypt_block(pt, k)
        assert np.array_equal(ct, reference_encrypt(pt[None], k)[0])


def test_batch_matches_reference(rng, key):
    pts = rng.integers(0, 256, (5000, 16), dtype=np.uint8)
    cts, rd0, rd10 = aes.encrypt_batch(pts, key)
    assert np.array_equal(cts, reference_encrypt(pts, key))
    assert np.array_equal(rd0, pts ^ key)
    # the last round is SubBytes, ShiftRows, AddRoundKey
    k10 = aes.expand_key(key)[10]
    assert np.array_equal(aes.SBOX[rd10][:, aes.SHIFT_ROWS] ^ k10, cts)


@settings(max_examples=50)
@given(blocks, blocks)
def test_intermediates_are_consistent(pt, k):
    ct, it = aes.encrypt_block(pt, k)
    rk = aes.expand_key(k)
    assert np.array_equal(it.state_after_addroundkey[0], np.frombuffer(pt, np.uint8) ^ rk[0])
    assert np.array_equal(it.state_after_addroundkey[10], ct)
    assert np.array_equal(it.ciphertext, ct)
    for r in range(1, 11):
        assert np.array_equal(it.state_before_subbytes[r], it.state_after_addroundkey[r - 1])
    _, rd0, rd10 = aes.encrypt_batch(np.frombuffer(pt, np.uint8)[None], k)
    assert np.array_equal(rd10[0], it.state_before_subbytes[10])


def test_plaintext_equal_to_key_zeroes_round0_state(key):
    _, it = aes.encrypt_block(key, key)
    assert not it.state_after_addroundkey[0].any()


def test_deterministic(key):
    a = aes.encrypt_block(FIPS_PT, key)
    b = aes.encrypt_block(FIPS_PT, key)
    assert np.array_equal(a[0], b[0])
    assert np.array_equal(a[1].state_before_subbytes, b[1].state_before_subbytes)


def test_shift_rows_table():
    # row r rotates left by r: out (r, c) comes from in (r, c + r)
    for i in range(16):
        r, c = i % 4, i // 4
        assert aes.SHIFT_ROWS[i] == r + 4 * ((c + r) % 4)
    assert np.array_equal(aes.SHIFT_ROWS[aes.INV_SHIFT_ROWS], np.arange(16))


def test_sbox_known_entries():
    assert aes.SBOX[0x00] == 0x63
    assert aes.SBOX[0x53] == 0xED
    assert aes.INV_SBOX[0x63] == 0x00


@pytest.mark.parametrize("v, hw", [(0x00, 0), (0xFF, 8), (0xA5, 4), (0x01, 1), (0x80, 1)])
def test_hamming_weight(v, hw):
    assert aes.hamming_weight(v) == hw


def test_hamming_distance():
    assert aes.hamming_distance(0x3C, 0x3C) == 0
    assert aes.hamming_distance(0x0F, 0xF0) == 8


def test_hw_complement_identity():
    x = np.arange(256, dtype=np.uint8)
    assert np.all(aes.hamming_weight(x).astype(int) + aes.hamming_weight(x ^ 0xFF) == 8)


@pytest.mark.parametrize("bad", [b"\x00" * 15, "00" * 17, [0] * 16 + [1]])
def test_block_length_enforced(bad):
    with pytest.raises(ValueError):
        aes.as_block(bad)
