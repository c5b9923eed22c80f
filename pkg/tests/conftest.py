import numpy as np
import pytest
from hypothesis import settings
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

settings.register_profile("telescp", deadline=None)
settings.load_profile("telescp")

FIPS_KEY = "2b7e151628aed2a6abf7158809cf4f3c"
FIPS_PT = "3243f6a8885a308d313198a2e0370734"
FIPS_CT = "3925841d02dc09fbdc118597196a0b32"


def reference_encrypt(plaintexts, key):
    """Independent AES-128 oracle (OpenSSL through ``cryptography``)."""
    enc = Cipher(algorithms.AES(bytes(key)), modes.ECB()).encryptor()
    data = np.ascontiguousarray(plaintexts, dtype=np.uint8).tobytes()
    return np.frombuffer(enc.update(data) + enc.finalize(), dtype=np.uint8).reshape(-1, 16)


@pytest.fixture
def key():
    return np.frombuffer(bytes.fromhex(FIPS_KEY), dtype=np.uint8).copy()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
