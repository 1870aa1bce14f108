"""Target agency: validate an incoming request, answer it according to trust."""

from __future__ import annotations

import random
import re
from dataclasses import dataclass
from fractions import Fraction

from mpmath.libmp import from_rational, mpf_sin, round_nearest, to_float

from . import crypto, wire
from .disclosure import category_of, is_valid_code, select_shared
from .errors import AuthError, DecryptError, IntegrityError, MalformedMessage, UnknownCategory
from .store import AgencyIdentity, MappingFunctionSpec, TrustStore

_QUERY_RE = re.compile(rb"^QUERY (\S+)$")


def query_text(code: str) -> bytes:
    return f"QUERY {code}".encode("utf-8")


def parse_query(request_text: bytes) -> str:
    m = _QUERY_RE.match(request_text)
    code = m.group(1).decode("ascii", "replace") if m else None
    if code is None or not is_valid_code(code):
        raise UnknownCategory(f"request is not 'QUERY <terrorist code>': {request_text[:64]!r}")
    return code


def mapping_fold(operators: str, values) -> Fraction:
    """Left fold ((r1 op r2) op r3) ... with operators cycled; exact rational result."""
    values = list(values)
    acc = Fraction(values[0])
    for i, v in enumerate(values[1:]):
        op = operators[i % len(operators)]
        if op == "+":
            acc += v
        elif op == "-":
            acc -= v
        elif op == "*":
            acc *= v
        else:
            acc /= v
    return acc


def sine_of(x: Fraction) -> float:
    """sin(x) rounded to binary64, with enough working precision for any fold result."""
    magnitude = max(x.numerator.bit_length() - x.denominator.bit_length(), 0)
    prec = magnitude + 128
    value = from_rational(x.numerator, x.denominator, prec, round_nearest)
    return to_float(mpf_sin(value, 53, round_nearest))


def compute_mapping(spec: MappingFunctionSpec | str, random_set) -> float:
    """sin of the pair's mapping function applied to the random set.

    The fold is exact, so a 64-term product of values up to 10**6 neither
    overflows nor loses the bits that decide its sine.
    """
    operators = spec.operators if isinstance(spec, MappingFunctionSpec) else spec
    values = list(random_set)
    if not values or any(v < 1 for v in values):
        raise ValueError("random set must be nonempty with every value >= 1")
    return sine_of(mapping_fold(operators, values))


@dataclass(frozen=True)
class DecodedRequest:
    src: str
    nonce_cipher: bytes
    random_set: wire.RandomSet
    request_text: bytes
    integrity_ok: bool
    auth_ok: bool


def validate_request(me: AgencyIdentity, store: TrustStore, s_req: bytes) -> DecodedRequest:
    """Open S_Req, authenticate its source and check the request digest."""
    outer = wire.decode_request(crypto.private_decrypt(s_req, me.private_key))
    source_key = store.public_key(outer.src)
    try:
        signed = wire.decode_signed_data(crypto.public_decrypt(outer.signed_blob, source_key))
    except (DecryptError, MalformedMessage) as exc:
        raise AuthError(f"signed data does not open under {outer.src}'s public key: {exc}") from None
    preimage = wire.encode_preimage_request(outer.nonce_cipher, outer.src, signed.random_set, signed.request_text)
    if crypto.md5_digest(preimage) != signed.digest:
        raise IntegrityError("request digest mismatch")
    return DecodedRequest(
        src=outer.src,
        nonce_cipher=outer.nonce_cipher,
        random_set=signed.random_set,
        request_text=signed.request_text,
        integrity_ok=True,
        auth_ok=True,
    )


def select_items(me: AgencyIdentity, store: TrustStore, req: DecodedRequest) -> list[bytes]:
    """The items this target is willing to disclose for ``req``."""
    code = parse_query(req.request_text)
    category = category_of(code)
    items = store.get_items(me.id, code)
    if items is None:
        raise UnknownCategory(f"{me.id} holds nothing under {code}")
    level = store.get_trust(req.src, me.id, category)
    shared = select_shared(items, level, store.get_order(category))
    return [item.encode("utf-8") for item in shared]


def build_response(
    me: AgencyIdentity,
    store: TrustStore,
    req: DecodedRequest,
    rng: random.Random | None = None,
) -> bytes:
    if not (req.integrity_ok and req.auth_ok):
        raise AuthError("refusing to answer an unvalidated request")
    items = select_items(me, store, req)
    mapping_value = compute_mapping(store.get_mapping(req.src, me.id), req.random_set)
    preimage = wire.encode_preimage_response(req.nonce_cipher, mapping_value, items)
    plain = wire.TargetResponsePlain(req.nonce_cipher, mapping_value, tuple(items), crypto.md5_digest(preimage))
    return crypto.public_encrypt(wire.encode_response(plain), store.public_key(req.src), rng)


def respond(me: AgencyIdentity, store: TrustStore, s_req: bytes, rng: random.Random | None = None) -> bytes:
    """validate_request followed by build_response."""
    return build_response(me, store, validate_request(me, store, s_req), rng)
