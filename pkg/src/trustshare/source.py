"""Source agency: build a request and validate the target's answer."""

from __future__ import annotations

import random
from dataclasses import dataclass

from . import crypto, wire
from .crypto import default_rng
from .errors import DecryptError, IntegrityError, MalformedMessage, SessionMismatch, TargetAuthError
from .store import AgencyIdentity, MappingFunctionSpec, TrustStore
from .target import compute_mapping

MAPPING_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Verdicts:
    integrity: bool
    target_authentic: bool
    session_match: bool

    def all_ok(self) -> bool:
        return self.integrity and self.target_authentic and self.session_match


@dataclass(frozen=True)
class ValidatedResponse:
    items: tuple[bytes, ...]
    session: wire.SessionState
    verdicts: Verdicts

    def __post_init__(self):
        if not self.verdicts.all_ok():
            raise ValueError("ValidatedResponse requires every verdict to hold")


def build_request(
    me: AgencyIdentity,
    store: TrustStore,
    target: str,
    request_text: bytes,
    n: int,
    rng: random.Random | None = None,
) -> tuple[bytes, wire.SessionState]:
    """Return the encrypted request S_Req and the state needed to check the reply."""
    if not 1 <= n <= wire.MAX_RANDOM_SET:
        raise ValueError(f"random set size must be 1..{wire.MAX_RANDOM_SET}, got {n}")
    target_key = store.public_key(target)
    rng = rng or default_rng()

    nonce = rng.getrandbits(64)
    nonce_cipher = crypto.public_encrypt(wire.encode_nonce(nonce), me.public_key, rng)
    random_set = wire.RandomSet.draw(n, rng)
    digest = crypto.md5_digest(wire.encode_preimage_request(nonce_cipher, me.id, random_set, request_text))
    signed_blob = crypto.private_encrypt(
        wire.encode_signed_data(wire.SignedData(random_set, request_text, digest)), me.private_key, rng
    )
    plain = wire.SourceRequestPlain(nonce_cipher, me.id, signed_blob)
    s_req = crypto.public_encrypt(wire.encode_request(plain), target_key, rng)
    session = wire.SessionState(nonce, nonce_cipher, random_set, target, request_text)
    return s_req, session


def _echoed_nonce_matches(session: wire.SessionState, echoed: bytes, me: AgencyIdentity) -> bool:
    try:
        return wire.decode_nonce(crypto.private_decrypt(echoed, me.private_key)) == session.nonce
    except (DecryptError, MalformedMessage):
        return False


def check_response(
    session: wire.SessionState, me: AgencyIdentity, peer_mapping: MappingFunctionSpec, t_res: bytes
) -> tuple[wire.TargetResponsePlain, Verdicts]:
    """Decrypt and decode T_Res and evaluate all three checks without raising on them."""
    plain = wire.decode_response(crypto.private_decrypt(t_res, me.private_key))
    integrity = crypto.md5_digest(plain.preimage()) == plain.digest
    expected = compute_mapping(peer_mapping, session.random_set)
    authentic = abs(plain.mapping_value - expected) <= MAPPING_TOLERANCE
    matched = _echoed_nonce_matches(session, plain.nonce_cipher, me)
    return plain, Verdicts(integrity, authentic, matched)


def validate_response(
    session: wire.SessionState, me: AgencyIdentity, peer_mapping: MappingFunctionSpec, t_res: bytes
) -> ValidatedResponse:
    """Accept T_Res only if it is intact, from the intended target and for this session.

    When several checks fail the most basic one is reported: a tampered
    message is an IntegrityError, and a reply meant for another session is a
    SessionMismatch even though its mapping value cannot match either.
    """
    plain, verdicts = check_response(session, me, peer_mapping, t_res)
    if not verdicts.integrity:
        raise IntegrityError("response digest mismatch: information was tampered")
    if not verdicts.session_match:
        raise SessionMismatch("echoed nonce does not belong to this session")
    if not verdicts.target_authentic:
        raise TargetAuthError("mapping value does not match the pair's mapping function")
    return ValidatedResponse(plain.response_items, session, verdicts)


def peer_mapping_for(store: TrustStore, me: AgencyIdentity, session: wire.SessionState) -> MappingFunctionSpec:
    return store.get_mapping(me.id, session.target)
