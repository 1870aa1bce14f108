"""Protocol message types and their canonical byte framing.

Every variable-length field is a 4-byte big-endian length followed by the
bytes. Digest preimages are produced here and nowhere else, so the sender's
and receiver's MD5 inputs are the same bytes by construction. The exact
layouts are written out in docs/wire-format.md.
"""

from __future__ import annotations

import math
import re
import struct
from dataclasses import dataclass

from .crypto import DIGEST_SIZE
from .errors import MalformedMessage

MAX_FIELD = 0xFFFFFFFF
MAX_RANDOM_SET = 64
MAX_RANDOM_VALUE = 10**6
NONCE_SIZE = 8

_AGENCY_RE = re.compile(r"^[\x21-\x7e]{1,32}$")


def check_agency_id(agency_id: str) -> str:
    if not isinstance(agency_id, str) or not _AGENCY_RE.match(agency_id):
        raise ValueError(f"invalid agency id {agency_id!r}: need 1-32 visible ASCII characters")
    return agency_id


@dataclass(frozen=True)
class RandomSet:
    """The source's random values S_R; the mapping function is evaluated over them."""

    values: tuple[int, ...]

    def __post_init__(self):
        values = tuple(self.values)
        object.__setattr__(self, "values", values)
        if not 1 <= len(values) <= MAX_RANDOM_SET:
            raise ValueError(f"random set size must be 1..{MAX_RANDOM_SET}, got {len(values)}")
        for v in values:
            if not isinstance(v, int) or not 1 <= v <= MAX_RANDOM_VALUE:
                raise ValueError(f"random value {v!r} outside 1..{MAX_RANDOM_VALUE}")

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    @classmethod
    def draw(cls, n: int, rng) -> RandomSet:
        return cls(tuple(rng.randint(1, MAX_RANDOM_VALUE) for _ in range(n)))


@dataclass(frozen=True)
class SourceRequestPlain:
    """Plaintext of S_Req: R_V, the source id and the signed blob SA_Data."""

    nonce_cipher: bytes
    src: str
    signed_blob: bytes


@dataclass(frozen=True)
class SignedData:
    """Plaintext of SA_Data: S_R, the request text and the request digest."""

    random_set: RandomSet
    request_text: bytes
    digest: bytes


@dataclass(frozen=True)
class TargetResponsePlain:
    nonce_cipher: bytes
    mapping_value: float
    response_items: tuple[bytes, ...]
    digest: bytes

    def preimage(self) -> bytes:
        return encode_preimage_response(self.nonce_cipher, self.mapping_value, self.response_items)


@dataclass(frozen=True)
class SessionState:
    """What the source remembers between sending S_Req and receiving T_Res."""

    nonce: int
    nonce_cipher: bytes
    random_set: RandomSet
    target: str
    request_text: bytes


# -- framing helpers --------------------------------------------------------


def lp(data: bytes) -> bytes:
    if len(data) > MAX_FIELD:
        raise ValueError("field exceeds 4-byte length prefix capacity")
    return struct.pack(">I", len(data)) + data


class Reader:
    """Cursor over a plaintext buffer; every failure is MalformedMessage."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.data):
            raise MalformedMessage(f"truncated: need {size} bytes at offset {self.pos}")
        chunk = self.data[self.pos : self.pos + size]
        self.pos += size
        return chunk

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def field(self) -> bytes:
        return self.take(self.u32())

    def finish(self) -> None:
        if self.pos != len(self.data):
            raise MalformedMessage(f"{len(self.data) - self.pos} trailing bytes")


def encode_random_set(random_set: RandomSet) -> bytes:
    return struct.pack(">H", len(random_set)) + b"".join(struct.pack(">Q", v) for v in random_set)


def decode_random_set(data: bytes) -> RandomSet:
    r = Reader(data)
    count = r.u16()
    values = tuple(struct.unpack(">Q", r.take(8))[0] for _ in range(count))
    r.finish()
    try:
        return RandomSet(values)
    except ValueError as exc:
        raise MalformedMessage(str(exc)) from None


def _decode_agency(raw: bytes) -> str:
    try:
        return check_agency_id(raw.decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as exc:
        raise MalformedMessage(f"bad agency id: {exc}") from None


def encode_nonce(nonce: int) -> bytes:
    return nonce.to_bytes(NONCE_SIZE, "big")


def decode_nonce(data: bytes) -> int:
    if len(data) != NONCE_SIZE:
        raise MalformedMessage("nonce must be 8 bytes")
    return int.from_bytes(data, "big")


# -- digest preimages -------------------------------------------------------


def encode_preimage_request(
    nonce_cipher: bytes, src: str, random_set: RandomSet, request_text: bytes
) -> bytes:
    """SE_Data: lp(R_V) | lp(src) | lp(S_R block) | lp(request)."""
    return (
        lp(nonce_cipher)
        + lp(check_agency_id(src).encode("utf-8"))
        + lp(encode_random_set(random_set))
        + lp(request_text)
    )


def encode_preimage_response(
    nonce_cipher: bytes, mapping_value: float, response_items
) -> bytes:
    """TE_Data: lp(R_V) | binary64 M'_val | u32 count | lp(item)..."""
    if not math.isfinite(mapping_value):
        raise ValueError("mapping value must be finite")
    items = list(response_items)
    return (
        lp(nonce_cipher)
        + struct.pack(">d", mapping_value)
        + struct.pack(">I", len(items))
        + b"".join(lp(item) for item in items)
    )


# -- messages ---------------------------------------------------------------


def encode_request(plain: SourceRequestPlain) -> bytes:
    return lp(plain.nonce_cipher) + lp(check_agency_id(plain.src).encode("utf-8")) + lp(plain.signed_blob)


def decode_request(data: bytes) -> SourceRequestPlain:
    r = Reader(data)
    nonce_cipher = r.field()
    src = _decode_agency(r.field())
    blob = r.field()
    r.finish()
    return SourceRequestPlain(nonce_cipher, src, blob)


def encode_signed_data(signed: SignedData) -> bytes:
    if len(signed.digest) != DIGEST_SIZE:
        raise ValueError("digest must be 16 bytes")
    return lp(encode_random_set(signed.random_set)) + lp(signed.request_text) + lp(signed.digest)


def decode_signed_data(data: bytes) -> SignedData:
    r = Reader(data)
    random_set = decode_random_set(r.field())
    request_text = r.field()
    digest = r.field()
    r.finish()
    if len(digest) != DIGEST_SIZE:
        raise MalformedMessage("digest must be 16 bytes")
    return SignedData(random_set, request_text, digest)


def encode_response(plain: TargetResponsePlain) -> bytes:
    if len(plain.digest) != DIGEST_SIZE:
        raise ValueError("digest must be 16 bytes")
    return plain.preimage() + plain.digest


def decode_response(data: bytes) -> TargetResponsePlain:
    if len(data) < DIGEST_SIZE:
        raise MalformedMessage("response shorter than its digest")
    r = Reader(data[:-DIGEST_SIZE])
    nonce_cipher = r.field()
    (mapping_value,) = struct.unpack(">d", r.take(8))
    count = r.u32()
    items = []
    for _ in range(count):
        items.append(r.field())
    r.finish()
    if not -1.0 <= mapping_value <= 1.0:
        raise MalformedMessage("mapping value outside [-1, 1]")
    return TargetResponsePlain(nonce_cipher, mapping_value, tuple(items), data[-DIGEST_SIZE:])
