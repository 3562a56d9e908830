"""FIPS 204 key expansion for ML-DSA-65 seed keys.

The OpenSSL backend used for signing stores ML-DSA-65 private keys in their
32-byte seed form and never exposes the expanded encoding. Wire formats and
size accounting in this package need the standard encodings instead: the
1952-byte public key and the 4032-byte expanded private key. This module
derives both from a seed by running the FIPS 204 key-generation pipeline
(seed expansion, matrix/secret sampling, NTT arithmetic, Power2Round,
bit packing).

Only key expansion lives here. Signing and verification stay on the vetted
OpenSSL backend, and callers are expected to cross-check the public key
produced here against the backend's own encoding for the same seed, which
exercises every step of this pipeline.

No constant-time discipline is attempted: this code handles simulator key
material only and runs once per key pair.
"""

import hashlib
import struct

import numpy as np

_Q = 8380417          # prime modulus, 2^23 - 2^13 + 1
_N = 256              # polynomial degree
_D = 13               # low-order bits dropped from t
_K = 6                # module rows (ML-DSA-65)
_L = 5                # module columns
_ETA = 4              # secret coefficient bound

PUBLIC_KEY_BYTES = 32 + _K * 320                        # 1952
PRIVATE_KEY_BYTES = 128 + (_L + _K) * 128 + _K * 416    # 4032
SIGNATURE_BYTES = 48 + _L * 640 + 55 + _K               # 3309
SEED_BYTES = 32


def _bitrev8(n: int) -> int:
    r = 0
    for _ in range(8):
        r = (r << 1) | (n & 1)
        n >>= 1
    return r


# 512th root of unity is 1753; zetas stored in bit-reversed order.
_ZETAS = [pow(1753, _bitrev8(i), _Q) for i in range(_N)]


def _ntt(f: np.ndarray) -> np.ndarray:
    """Forward NTT, Cooley-Tukey over slices. Input and output mod q."""
    f = f.astype(np.int64).copy()
    k = 1
    length = 128
    while length >= 1:
        for start in range(0, _N, 2 * length):
            zeta = _ZETAS[k]
            k += 1
            lo = f[start:start + length]
            hi = f[start + length:start + 2 * length]
            t = (zeta * hi) % _Q
            f[start + length:start + 2 * length] = (lo - t) % _Q
            f[start:start + length] = (lo + t) % _Q
        length >>= 1
    return f


def _inv_ntt(f: np.ndarray) -> np.ndarray:
    """Inverse NTT, Gentleman-Sande, with the final 256^-1 scaling."""
    a = f.astype(np.int64).copy()
    k = 255
    length = 1
    while length < _N:
        for start in range(0, _N, 2 * length):
            zeta = _ZETAS[k]
            k -= 1
            lo = a[start:start + length].copy()
            hi = a[start + length:start + 2 * length]
            a[start:start + length] = (lo + hi) % _Q
            a[start + length:start + 2 * length] = (zeta * ((hi - lo) % _Q)) % _Q
        length <<= 1
    n_inv = pow(_N, _Q - 2, _Q)
    return (a * n_inv) % _Q


def _rej_ntt_poly(seed34: bytes) -> np.ndarray:
    """Uniform polynomial in the NTT domain via 3-byte rejection sampling."""
    xof = hashlib.shake_128(seed34)
    need = 3 * 300  # ~300 candidates; acceptance rate is q / 2^23 ~ 0.999
    while True:
        buf = np.frombuffer(xof.digest(need), dtype=np.uint8).astype(np.int64)
        triples = buf[: 3 * (len(buf) // 3)].reshape(-1, 3)
        z = triples[:, 0] | (triples[:, 1] << 8) | ((triples[:, 2] & 0x7F) << 16)
        z = z[z < _Q]
        if len(z) >= _N:
            return z[:_N]
        need += 3 * 64


def _rej_bounded_poly(seed66: bytes) -> np.ndarray:
    """Secret polynomial with centered coefficients in [-eta, eta]."""
    xof = hashlib.shake_256(seed66)
    need = 192  # 384 nibbles at 9/16 acceptance comfortably covers 256
    while True:
        buf = np.frombuffer(xof.digest(need), dtype=np.uint8).astype(np.int64)
        nibbles = np.empty(2 * len(buf), dtype=np.int64)
        nibbles[0::2] = buf & 0x0F
        nibbles[1::2] = buf >> 4
        accepted = nibbles[nibbles < 9]
        if len(accepted) >= _N:
            return _ETA - accepted[:_N]
        need += 64


def _bit_pack(values: np.ndarray, width: int) -> bytes:
    """Little-endian-bit packing of nonnegative values, `width` bits each."""
    vals = np.asarray(values, dtype=np.uint32)
    bits = ((vals[:, None] >> np.arange(width, dtype=np.uint32)) & 1).astype(np.uint8)
    return np.packbits(bits.reshape(-1), bitorder="little").tobytes()


def _bit_unpack(data: bytes, count: int, width: int) -> np.ndarray:
    """Inverse of :func:`_bit_pack`; used by consistency checks and tests."""
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    bits = bits[: count * width].reshape(count, width).astype(np.int64)
    return bits @ (1 << np.arange(width, dtype=np.int64))


def expand_seed(seed: bytes) -> tuple[bytes, bytes]:
    """Expand a 32-byte ML-DSA-65 seed into (public_key, private_key) bytes.

    Returns the standard encodings: 1952-byte public key and 4032-byte
    expanded private key. Deterministic in the seed.
    """
    if len(seed) != SEED_BYTES:
        raise ValueError(f"seed must be {SEED_BYTES} bytes, got {len(seed)}")

    expanded = hashlib.shake_256(seed + bytes([_K, _L])).digest(128)
    rho, rho_prime, cap_k = expanded[:32], expanded[32:96], expanded[96:128]

    # A is sampled directly in the NTT domain; indices are (column, row).
    a_hat = [[_rej_ntt_poly(rho + bytes([s, r])) for s in range(_L)]
             for r in range(_K)]
    s1 = [_rej_bounded_poly(rho_prime + struct.pack("<H", r)) for r in range(_L)]
    s2 = [_rej_bounded_poly(rho_prime + struct.pack("<H", _L + r)) for r in range(_K)]

    s1_hat = [_ntt(p % _Q) for p in s1]
    t1_polys = []
    t0_polys = []
    half = 1 << (_D - 1)
    for r in range(_K):
        acc = np.zeros(_N, dtype=np.int64)
        for s in range(_L):
            acc = (acc + a_hat[r][s] * s1_hat[s]) % _Q
        t = (_inv_ntt(acc) + s2[r]) % _Q
        # Power2Round: t0 centered in (-2^(d-1), 2^(d-1)], t = t1*2^d + t0.
        t0 = t & ((1 << _D) - 1)
        t0 = np.where(t0 > half, t0 - (1 << _D), t0)
        t1_polys.append((t - t0) >> _D)
        t0_polys.append(t0)

    public_key = rho + b"".join(_bit_pack(t1, 10) for t1 in t1_polys)
    tr = hashlib.shake_256(public_key).digest(64)

    private_key = bytearray(rho + cap_k + tr)
    for p in s1:
        private_key += _bit_pack(_ETA - p, 4)
    for p in s2:
        private_key += _bit_pack(_ETA - p, 4)
    for t0 in t0_polys:
        private_key += _bit_pack(half - t0, 13)

    assert len(public_key) == PUBLIC_KEY_BYTES
    assert len(private_key) == PRIVATE_KEY_BYTES
    return public_key, bytes(private_key)
