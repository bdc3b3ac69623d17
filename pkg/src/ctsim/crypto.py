"""Keys, signatures, hashing, addresses and user-data encryption.

Every provider owns a secp256k1 keypair; child keys for user pseudonyms are
derived additively from the parent key. Signing is ECDSA with RFC 6979
deterministic nonces so identical runs produce identical bytes. User
profile data travels encrypted under an ECIES-style hybrid scheme
(ephemeral ECDH + AES-256-GCM).

All randomness used here is caller-supplied via :class:`DetRng`, a SHA-256
counter DRBG, which keeps whole-simulation determinism in one seed.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass
from functools import lru_cache

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from ._ecbackend import BACKEND, add_points, is_on_curve, scalar_base_mult, shamir_mult, scalar_mult
from ._ecpure import GX, GY, N, P

__all__ = [
    "BACKEND",
    "KeyPair",
    "Ciphertext",
    "DetRng",
    "CryptoError",
    "DecryptError",
    "sha256",
    "address_of",
    "resource_address",
    "generate_keypair",
    "derive_child_key",
    "sign",
    "verify",
    "encrypt_for",
    "decrypt",
]

DIGEST_LEN = 32
ADDRESS_LEN = 20
PUBKEY_LEN = 33
SIG_LEN = 64

ZERO_DIGEST = b"\x00" * DIGEST_LEN

_HALF_N = N // 2


class CryptoError(Exception):
    pass


class DecryptError(CryptoError):
    """Authentication failure when decrypting an Enc(U) blob."""


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def address_of(pub_bytes: bytes) -> bytes:
    """20-byte address: truncated digest of the compressed public key."""
    return sha256(pub_bytes)[:ADDRESS_LEN]


def resource_address(label: str) -> bytes:
    """20-byte address for an abstract resource identifier."""
    return sha256(label.encode())[:ADDRESS_LEN]


# ---------------------------------------------------------------------------
# Deterministic randomness
# ---------------------------------------------------------------------------

class DetRng:
    """SHA-256 counter DRBG; every stream is a pure function of the seed.

    Streams fork with :meth:`child`, so nodes and subsystems draw from
    independent sequences that are all rooted in the single scenario seed.
    """

    def __init__(self, seed: bytes | int, label: bytes = b""):
        if isinstance(seed, int):
            seed = seed.to_bytes(16, "big", signed=True)
        self._key = sha256(len(seed).to_bytes(4, "big") + seed + label)
        self._counter = 0

    def child(self, label: str | bytes) -> "DetRng":
        if isinstance(label, str):
            label = label.encode()
        return DetRng(self._key, b"/" + label)

    def take(self, n: int) -> bytes:
        out = bytearray()
        while len(out) < n:
            out += sha256(self._key + self._counter.to_bytes(8, "big"))
            self._counter += 1
        return bytes(out[:n])

    def u64(self) -> int:
        return int.from_bytes(self.take(8), "big")

    def randbelow(self, bound: int) -> int:
        """Uniform draw in [0, bound) by rejection sampling."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        nbits = bound.bit_length()
        nbytes = (nbits + 7) // 8
        mask = (1 << nbits) - 1
        while True:
            v = int.from_bytes(self.take(nbytes), "big") & mask
            if v < bound:
                return v


# ---------------------------------------------------------------------------
# Keys
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KeyPair:
    private_key: int
    public_key: tuple[int, int]  # affine coordinates

    @property
    def pub_bytes(self) -> bytes:
        return compress_point(self.public_key)

    @property
    def address(self) -> bytes:
        return address_of(self.pub_bytes)


def compress_point(point: tuple[int, int]) -> bytes:
    x, y = point
    return bytes([0x02 | (y & 1)]) + x.to_bytes(32, "big")


@lru_cache(maxsize=4096)
def decompress_point(pub_bytes: bytes) -> tuple[int, int] | None:
    """SEC1 compressed key -> affine point, or None if malformed."""
    if len(pub_bytes) != PUBKEY_LEN or pub_bytes[0] not in (0x02, 0x03):
        return None
    x = int.from_bytes(pub_bytes[1:], "big")
    if x >= P:
        return None
    y2 = (pow(x, 3, P) + 7) % P
    y = pow(y2, (P + 1) // 4, P)  # p % 4 == 3
    if (y * y) % P != y2:
        return None
    if (y & 1) != (pub_bytes[0] & 1):
        y = P - y
    return (x, y)


def generate_keypair(seed: bytes) -> KeyPair:
    """Derive a keypair from 32 bytes of entropy.

    The seed itself is the first candidate scalar; out-of-range candidates
    (zero or >= group order) are replaced by hashing the seed with an
    incrementing counter until a valid scalar appears.
    """
    if len(seed) != 32:
        raise CryptoError("seed must be 32 bytes")
    k = int.from_bytes(seed, "big")
    counter = 0
    while not 1 <= k < N:
        counter += 1
        k = int.from_bytes(sha256(seed + counter.to_bytes(4, "big")), "big")
    return KeyPair(k, scalar_base_mult(k))


def derive_child_key(parent: KeyPair, index: int) -> KeyPair:
    """Additive (non-hardened) child derivation from the parent key.

    child = parent + int(SHA-256(parent_pub || index_be32)) mod n; a zero
    result is re-derived with a counter suffix, mirroring generate_keypair.
    """
    base = parent.pub_bytes + index.to_bytes(4, "big")
    k = (parent.private_key + int.from_bytes(sha256(base), "big")) % N
    counter = 0
    while k == 0:
        counter += 1
        tweak = int.from_bytes(sha256(base + counter.to_bytes(4, "big")), "big")
        k = (parent.private_key + tweak) % N
    return KeyPair(k, scalar_base_mult(k))


# ---------------------------------------------------------------------------
# ECDSA (RFC 6979 nonces, low-s form)
# ---------------------------------------------------------------------------

def _rfc6979_nonce(priv: int, msg: bytes) -> int:
    x = priv.to_bytes(32, "big")
    h = (int.from_bytes(msg, "big") % N).to_bytes(32, "big")
    v = b"\x01" * 32
    k = b"\x00" * 32
    k = hmac.new(k, v + b"\x00" + x + h, "sha256").digest()
    v = hmac.new(k, v, "sha256").digest()
    k = hmac.new(k, v + b"\x01" + x + h, "sha256").digest()
    v = hmac.new(k, v, "sha256").digest()
    while True:
        v = hmac.new(k, v, "sha256").digest()
        cand = int.from_bytes(v, "big")
        if 1 <= cand < N:
            return cand
        k = hmac.new(k, v + b"\x00", "sha256").digest()
        v = hmac.new(k, v, "sha256").digest()


def sign(key: KeyPair, msg: bytes) -> bytes:
    """Sign a 32-byte digest; returns the 64-byte r||s encoding."""
    if len(msg) != DIGEST_LEN:
        raise CryptoError("sign expects a 32-byte digest")
    z = int.from_bytes(msg, "big") % N
    k = _rfc6979_nonce(key.private_key, msg)
    while True:
        pt = scalar_base_mult(k)
        r = pt[0] % N
        if r != 0:
            s = (pow(k, -1, N) * (z + r * key.private_key)) % N
            if s != 0:
                break
        # astronomically unlikely; retry with the next counter-hashed nonce
        k = _rfc6979_nonce(key.private_key, sha256(msg))
    if s > _HALF_N:
        s = N - s
    return r.to_bytes(32, "big") + s.to_bytes(32, "big")


def _verify_uncached(pub_bytes: bytes, msg: bytes, sig: bytes) -> bool:
    if len(msg) != DIGEST_LEN or len(sig) != SIG_LEN:
        return False
    point = decompress_point(pub_bytes)
    if point is None:
        return False
    r = int.from_bytes(sig[:32], "big")
    s = int.from_bytes(sig[32:], "big")
    if not (1 <= r < N and 1 <= s <= _HALF_N):  # low-s only, blocks malleation
        return False
    z = int.from_bytes(msg, "big") % N
    w = pow(s, -1, N)
    res = shamir_mult((z * w) % N, (r * w) % N, point[0], point[1])
    return res is not None and res[0] % N == r


@lru_cache(maxsize=1 << 16)
def _verify_cached(pub_bytes: bytes, msg: bytes, sig: bytes) -> bool:
    return _verify_uncached(pub_bytes, msg, sig)


def verify(pub_bytes: bytes, msg: bytes, sig: bytes) -> bool:
    """True iff sig is a valid low-s signature on msg under the given key.

    Malformed keys or signatures return False rather than raising. Results
    are memoized: the same triple is re-checked constantly as transactions
    and blocks are validated by every replica.
    """
    try:
        return _verify_cached(pub_bytes, msg, sig)
    except TypeError:
        return False


# ---------------------------------------------------------------------------
# Hybrid encryption for user information
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Ciphertext:
    ephemeral_pub: bytes  # compressed point, 33 bytes
    nonce: bytes          # 12 bytes
    body: bytes
    tag: bytes            # 16 bytes


def _shared_key(scalar: int, point: tuple[int, int]) -> bytes:
    shared = scalar_mult(scalar, point[0], point[1])
    if shared is None:
        raise CryptoError("degenerate ECDH result")
    return sha256(b"ctsim-ecies" + compress_point(shared))


def encrypt_for(recipient_pub: bytes, plaintext: bytes, rng: DetRng) -> Ciphertext:
    """Encrypt so that only the holder of the matching private key can read."""
    point = decompress_point(recipient_pub)
    if point is None:
        raise CryptoError("invalid recipient public key")
    eph = generate_keypair(rng.take(32))
    key = _shared_key(eph.private_key, point)
    nonce = rng.take(12)
    sealed = AESGCM(key).encrypt(nonce, plaintext, eph.pub_bytes)
    return Ciphertext(eph.pub_bytes, nonce, sealed[:-16], sealed[-16:])


def decrypt(private_key: int, ct: Ciphertext) -> bytes:
    point = decompress_point(ct.ephemeral_pub)
    if point is None:
        raise DecryptError("invalid ephemeral key")
    key = _shared_key(private_key, point)
    try:
        return AESGCM(key).decrypt(ct.nonce, ct.body + ct.tag, ct.ephemeral_pub)
    except InvalidTag as exc:
        raise DecryptError("ciphertext authentication failed") from exc
