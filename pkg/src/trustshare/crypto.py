"""Asymmetric envelopes, MD5 digests and the CA stub.

The asymmetric primitive is textbook RSA, so either key part can encrypt and
the other decrypts. A raw RSA block cannot carry a whole protocol message, so
every call builds a hybrid envelope::

    u32 len(wrapped) | wrapped session secret (k bytes) | ChaCha20 body

The 32-byte session secret is the ChaCha20 key. The wrapped block is
``00 | kind | FF .. FF | 00 | secret`` raised to the exponent of whichever
key part encrypts; ``kind`` is 0x01 for private-part wrapping and 0x02 for
public-part wrapping. Wrapping is deterministic given (key, secret), so an
envelope is reproducible from a seeded randomness source.

MD5 is kept for fidelity with the protocol's integrity step. It is not a
collision-resistant digest and nothing here relies on it being one.
"""

from __future__ import annotations

import hashlib
import math
import random
import secrets
import struct
from dataclasses import dataclass, field
from pathlib import Path

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms

from .errors import DecryptError, MalformedMessage

MIN_KEY_BITS = 1024
SECRET_SIZE = 32
PUBLIC_EXPONENT = 65537

_KIND_PRIVATE = 0x01
_KIND_PUBLIC = 0x02
_ZERO_NONCE = bytes(16)

_SMALL_PRIMES = [p for p in range(3, 2000) if all(p % q for q in range(2, int(p**0.5) + 1))]


def default_rng() -> random.Random:
    return secrets.SystemRandom()


# -- key material -----------------------------------------------------------


def _int_bytes(value: int) -> bytes:
    return value.to_bytes(max(1, (value.bit_length() + 7) // 8), "big")


def _lp(data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + data


def _read_lp(data: bytes, pos: int) -> tuple[bytes, int]:
    if pos + 4 > len(data):
        raise MalformedMessage("truncated length prefix")
    (size,) = struct.unpack_from(">I", data, pos)
    pos += 4
    if pos + size > len(data):
        raise MalformedMessage("length prefix overruns buffer")
    return data[pos : pos + size], pos + size


@dataclass(frozen=True)
class PublicKey:
    n: int
    e: int

    @property
    def bits(self) -> int:
        return self.n.bit_length()

    @property
    def size(self) -> int:
        """Modulus length in bytes."""
        return (self.bits + 7) // 8

    def to_bytes(self) -> bytes:
        return b"TSPK" + struct.pack(">I", self.bits) + _lp(_int_bytes(self.n)) + _lp(_int_bytes(self.e))

    @classmethod
    def from_bytes(cls, data: bytes) -> PublicKey:
        if data[:4] != b"TSPK" or len(data) < 8:
            raise MalformedMessage("not a public key file")
        (bits,) = struct.unpack_from(">I", data, 4)
        n, pos = _read_lp(data, 8)
        e, pos = _read_lp(data, pos)
        if pos != len(data):
            raise MalformedMessage("trailing bytes after public key")
        key = cls(int.from_bytes(n, "big"), int.from_bytes(e, "big"))
        if key.bits != bits:
            raise MalformedMessage("modulus size does not match header")
        return key

    def fingerprint(self) -> str:
        return md5_digest(self.to_bytes()).hex()


@dataclass(frozen=True)
class PrivateKey:
    n: int
    e: int
    d: int
    p: int
    q: int
    _dp: int = field(init=False, repr=False, compare=False)
    _dq: int = field(init=False, repr=False, compare=False)
    _qinv: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_dp", self.d % (self.p - 1))
        object.__setattr__(self, "_dq", self.d % (self.q - 1))
        object.__setattr__(self, "_qinv", pow(self.q, -1, self.p))

    @property
    def bits(self) -> int:
        return self.n.bit_length()

    @property
    def size(self) -> int:
        return (self.bits + 7) // 8

    @property
    def public(self) -> PublicKey:
        return PublicKey(self.n, self.e)

    def power(self, value: int) -> int:
        """value ** d mod n via the CRT."""
        m1 = pow(value, self._dp, self.p)
        m2 = pow(value, self._dq, self.q)
        h = (self._qinv * (m1 - m2)) % self.p
        return m2 + h * self.q

    def to_bytes(self) -> bytes:
        body = b"".join(_lp(_int_bytes(v)) for v in (self.n, self.e, self.d, self.p, self.q))
        return b"TSSK" + struct.pack(">I", self.bits) + body

    @classmethod
    def from_bytes(cls, data: bytes) -> PrivateKey:
        if data[:4] != b"TSSK" or len(data) < 8:
            raise MalformedMessage("not a private key file")
        (bits,) = struct.unpack_from(">I", data, 4)
        pos = 8
        values = []
        for _ in range(5):
            raw, pos = _read_lp(data, pos)
            values.append(int.from_bytes(raw, "big"))
        if pos != len(data):
            raise MalformedMessage("trailing bytes after private key")
        key = cls(*values)
        if key.bits != bits or key.p * key.q != key.n:
            raise MalformedMessage("inconsistent private key")
        return key


@dataclass(frozen=True)
class KeyPair:
    public_part: PublicKey
    private_part: PrivateKey

    @property
    def bits(self) -> int:
        return self.public_part.bits


def _is_probable_prime(n: int, rng: random.Random, rounds: int = 40) -> bool:
    if n < 2:
        return False
    for p in _SMALL_PRIMES:
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for _ in range(rounds):
        a = 2 + rng.randrange(n - 3)
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = pow(x, 2, n)
            if x == n - 1:
                break
        else:
            return False
    return True


def _random_prime(bits: int, rng: random.Random) -> int:
    while True:
        # top two bits set so p * q has exactly 2 * bits bits
        candidate = rng.getrandbits(bits) | (3 << (bits - 2)) | 1
        if math.gcd(candidate - 1, PUBLIC_EXPONENT) != 1:
            continue
        if _is_probable_prime(candidate, rng):
            return candidate


def generate_keypair(bits: int = MIN_KEY_BITS, rng: random.Random | None = None) -> KeyPair:
    """Generate an RSA keypair with a modulus of exactly ``bits`` bits.

    Passing a seeded ``random.Random`` makes generation reproducible, which the
    simulator relies on; the default draws from the OS.
    """
    if bits < MIN_KEY_BITS:
        raise ValueError(f"key size must be at least {MIN_KEY_BITS} bits, got {bits}")
    if bits % 2:
        raise ValueError("key size must be even")
    rng = rng or default_rng()
    while True:
        p = _random_prime(bits // 2, rng)
        q = _random_prime(bits // 2, rng)
        if p == q:
            continue
        n = p * q
        if n.bit_length() != bits:
            continue
        phi = (p - 1) * (q - 1)
        d = pow(PUBLIC_EXPONENT, -1, phi)
        private = PrivateKey(n, PUBLIC_EXPONENT, d, p, q)
        return KeyPair(private.public, private)


# -- hybrid envelope --------------------------------------------------------


def _stream(secret: bytes, data: bytes) -> bytes:
    cipher = Cipher(algorithms.ChaCha20(secret, _ZERO_NONCE), mode=None)
    return cipher.encryptor().update(data)


def _pad_secret(secret: bytes, kind: int, size: int) -> int:
    filler = size - 3 - len(secret)
    block = bytes([0x00, kind]) + b"\xff" * filler + b"\x00" + secret
    return int.from_bytes(block, "big")


def _unpad_secret(value: int, kind: int, size: int) -> bytes:
    if value >= 1 << (8 * size):
        raise DecryptError("wrapped secret out of range")
    block = value.to_bytes(size, "big")
    expected = bytes([0x00, kind]) + b"\xff" * (size - 3 - SECRET_SIZE) + b"\x00"
    if block[: len(expected)] != expected:
        raise DecryptError("session secret padding check failed")
    return block[len(expected) :]


def _seal(payload: bytes, exponentiate, size: int, kind: int, rng: random.Random | None) -> bytes:
    rng = rng or default_rng()
    secret = rng.randbytes(SECRET_SIZE)
    wrapped = exponentiate(_pad_secret(secret, kind, size)).to_bytes(size, "big")
    return _lp(wrapped) + _stream(secret, payload)


def _open(envelope: bytes, exponentiate, n: int, size: int, kind: int) -> bytes:
    try:
        wrapped, pos = _read_lp(envelope, 0)
    except MalformedMessage as exc:
        raise DecryptError(str(exc)) from None
    if len(wrapped) != size:
        raise DecryptError("wrapped secret has wrong size for this key")
    value = int.from_bytes(wrapped, "big")
    if value >= n:
        raise DecryptError("wrapped secret exceeds modulus")
    secret = _unpad_secret(exponentiate(value), kind, size)
    return _stream(secret, envelope[pos:])


def public_encrypt(payload: bytes, key: PublicKey, rng: random.Random | None = None) -> bytes:
    """Seal ``payload`` so that only the holder of the matching private part can read it."""
    return _seal(payload, lambda m: pow(m, key.e, key.n), key.size, _KIND_PUBLIC, rng)


def private_decrypt(envelope: bytes, key: PrivateKey) -> bytes:
    return _open(envelope, key.power, key.n, key.size, _KIND_PUBLIC)


def private_encrypt(payload: bytes, key: PrivateKey, rng: random.Random | None = None) -> bytes:
    """Seal ``payload`` under the private part; anyone with the public part recovers it.

    Successful recovery with a given public part is what authenticates the
    sender, so the padding check in :func:`public_decrypt` doubles as
    signature verification.
    """
    return _seal(payload, key.power, key.size, _KIND_PRIVATE, rng)


def public_decrypt(envelope: bytes, key: PublicKey) -> bytes:
    return _open(envelope, lambda c: pow(c, key.e, key.n), key.n, key.size, _KIND_PRIVATE)


def envelope_overhead(key: PublicKey | PrivateKey) -> int:
    return 4 + key.size


# -- digests ----------------------------------------------------------------

DIGEST_SIZE = 16


def md5_digest(data: bytes) -> bytes:
    """RFC 1321 MD5 of ``data`` (always 16 bytes)."""
    return hashlib.md5(data, usedforsecurity=False).digest()


# -- CA stub ----------------------------------------------------------------


class CertificateAuthority:
    """Issues agency keypairs and refuses to hand out a modulus twice."""

    def __init__(self, bits: int = MIN_KEY_BITS, rng: random.Random | None = None):
        if bits < MIN_KEY_BITS:
            raise ValueError(f"key size must be at least {MIN_KEY_BITS} bits")
        self.bits = bits
        self.rng = rng or default_rng()
        self._issued: dict[str, KeyPair] = {}
        self._moduli: set[int] = set()

    def provision(self, agency_id: str) -> KeyPair:
        while True:
            pair = generate_keypair(self.bits, self.rng)
            if pair.public_part.n not in self._moduli:
                break
        self._moduli.add(pair.public_part.n)
        self._issued[agency_id] = pair
        return pair

    def issued(self) -> dict[str, KeyPair]:
        return dict(self._issued)


def key_paths(directory: str | Path, agency_id: str) -> tuple[Path, Path]:
    directory = Path(directory)
    return directory / f"{agency_id}.pub", directory / f"{agency_id}.key"


def write_key_files(directory: str | Path, agency_id: str, pair: KeyPair) -> tuple[Path, Path]:
    pub_path, key_path = key_paths(directory, agency_id)
    pub_path.parent.mkdir(parents=True, exist_ok=True)
    pub_path.write_bytes(pair.public_part.to_bytes())
    key_path.write_bytes(pair.private_part.to_bytes())
    key_path.chmod(0o600)
    return pub_path, key_path


def read_key_files(directory: str | Path, agency_id: str) -> KeyPair:
    pub_path, key_path = key_paths(directory, agency_id)
    private = PrivateKey.from_bytes(key_path.read_bytes())
    public = PublicKey.from_bytes(pub_path.read_bytes())
    if public != private.public:
        raise MalformedMessage(f"key files for {agency_id} do not match")
    return KeyPair(public, private)
