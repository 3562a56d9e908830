"""Key-expansion pipeline checks against the OpenSSL backend.

The expansion re-derives the ML-DSA-65 public key from the seed through an
independent code path (sampling, NTT, Power2Round, packing), so byte
equality with OpenSSL's public key for the same seed validates the whole
pipeline. The private-key encoding is additionally checked for structural
consistency by unpacking it and replaying the t = A*s1 + s2 relation.
"""

import hashlib

import numpy as np
import pytest
from cryptography.hazmat.primitives.asymmetric import mldsa

from pqsbfl import _mldsa_keyexpand as kx


def _openssl_public_key(seed: bytes) -> bytes:
    return mldsa.MLDSA65PrivateKey.from_seed_bytes(seed).public_key().public_bytes_raw()


@pytest.mark.parametrize("trial", range(8))
def test_public_key_matches_openssl(trial):
    seed = hashlib.sha256(f"expansion-trial-{trial}".encode()).digest()
    pk, sk = kx.expand_seed(seed)
    assert len(pk) == kx.PUBLIC_KEY_BYTES == 1952
    assert len(sk) == kx.PRIVATE_KEY_BYTES == 4032
    assert pk == _openssl_public_key(seed)


def test_deterministic_in_seed():
    seed = bytes(range(32))
    assert kx.expand_seed(seed) == kx.expand_seed(seed)
    other = kx.expand_seed(bytes(31) + b"\x01")
    assert kx.expand_seed(seed) != other


def test_rejects_wrong_seed_length():
    with pytest.raises(ValueError):
        kx.expand_seed(b"short")
    with pytest.raises(ValueError):
        kx.expand_seed(bytes(33))


def test_private_key_header_structure():
    seed = hashlib.sha256(b"header-structure").digest()
    pk, sk = kx.expand_seed(seed)
    # layout: rho(32) || K(32) || tr(64) || packed secrets
    assert sk[:32] == pk[:32]
    assert sk[64:128] == hashlib.shake_256(pk).digest(64)


def test_private_key_secrets_consistent_with_public_key():
    # Unpack s1/s2/t0 from the private key, recompute t = A*s1 + s2, and
    # check it splits into the t1 packed in the (OpenSSL-validated) public
    # key plus the t0 packed in the private key.
    seed = hashlib.sha256(b"secret-consistency").digest()
    pk, sk = kx.expand_seed(seed)
    rho = pk[:32]

    q, n, d, eta = 8380417, 256, 13, 4
    k_dim, l_dim = 6, 5

    t1 = [kx._bit_unpack(pk[32 + 320 * i: 32 + 320 * (i + 1)], n, 10) for i in range(k_dim)]

    offset = 128
    s1 = []
    for _ in range(l_dim):
        raw = kx._bit_unpack(sk[offset:offset + 128], n, 4)
        s1.append(eta - raw)
        offset += 128
    s2 = []
    for _ in range(k_dim):
        raw = kx._bit_unpack(sk[offset:offset + 128], n, 4)
        s2.append(eta - raw)
        offset += 128
    t0 = []
    for _ in range(k_dim):
        raw = kx._bit_unpack(sk[offset:offset + 416], n, 13)
        t0.append((1 << (d - 1)) - raw)
        offset += 416
    assert offset == len(sk)

    a_hat = [[kx._rej_ntt_poly(rho + bytes([s, r])) for s in range(l_dim)]
             for r in range(k_dim)]
    s1_hat = [kx._ntt(p % q) for p in s1]
    for r in range(k_dim):
        acc = np.zeros(n, dtype=np.int64)
        for s in range(l_dim):
            acc = (acc + a_hat[r][s] * s1_hat[s]) % q
        t = (kx._inv_ntt(acc) + s2[r]) % q
        reassembled = (t1[r] * (1 << d) + t0[r]) % q
        assert np.array_equal(t, reassembled)


def test_ntt_roundtrip():
    rng = np.random.default_rng(1234)
    poly = rng.integers(0, 8380417, size=256, dtype=np.int64)
    assert np.array_equal(kx._inv_ntt(kx._ntt(poly)), poly)


def test_bit_pack_roundtrip():
    rng = np.random.default_rng(99)
    for width in (4, 10, 13):
        vals = rng.integers(0, 1 << width, size=256, dtype=np.int64)
        packed = kx._bit_pack(vals, width)
        assert len(packed) == 256 * width // 8
        assert np.array_equal(kx._bit_unpack(packed, 256, width), vals)
