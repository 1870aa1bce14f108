import random

import mpmath
import pytest
from hypothesis import given, strategies as st

from trustshare import crypto, source, target, wire
from trustshare.errors import (
    TAMPER_ERRORS,
    AuthError,
    DecryptError,
    IntegrityError,
    SessionMismatch,
    TargetAuthError,
    UnknownAgency,
    UnknownCategory,
)
from trustshare.store import MappingFunctionSpec, TrustRecord

from oracles import mapping_float


def run(net, src, tgt, code, seed=0, n=3):
    rng = random.Random(seed)
    me = net.identity(src)
    s_req, session = source.build_request(me, net.snapshot, tgt, target.query_text(code), n, rng)
    t_res = target.respond(net.identity(tgt), net.snapshot, s_req, rng)
    return me, session, s_req, t_res


def mapping_oracle(ops, values):
    with mpmath.workprec(4000):
        acc = mpmath.mpf(values[0])
        for i, v in enumerate(values[1:]):
            op = ops[i % len(ops)]
            acc = {"+": acc + v, "-": acc - v, "*": acc * v, "/": acc / v}[op]
        return float(mpmath.sin(acc))


# -- mapping -------------------------------------------------------------------


def test_mapping_examples():
    assert target.compute_mapping("++", [2, 3, 4]) == pytest.approx(0.4121184852, abs=1e-10)
    assert target.compute_mapping("+*", [2, 3, 4]) == pytest.approx(0.9129452507, abs=1e-10)
    assert target.compute_mapping("-", [5, 5]) == 0.0


def test_single_value_is_sine_of_value():
    assert target.compute_mapping("+", [7]) == pytest.approx(mapping_float("+", [7]), abs=1e-15)


def test_operators_cycle():
    assert target.mapping_fold("+*", [1, 2, 3, 4, 5]) == ((1 + 2) * 3 + 4) * 5


def test_division_is_exact():
    assert target.mapping_fold("/*", [1, 3, 3]) == 1


def test_mapping_rejects_bad_sets():
    with pytest.raises(ValueError):
        target.compute_mapping("+", [])
    with pytest.raises(ValueError):
        target.compute_mapping("+", [0, 1])


def test_huge_products_do_not_overflow():
    v = target.compute_mapping("*", [10**6] * 64)
    assert -1 <= v <= 1
    assert v == pytest.approx(mapping_oracle("*", [10**6] * 64), abs=1e-12)


def test_mapping_matches_high_precision_oracle():
    rng = random.Random(12)
    for _ in range(1000):
        ops = "".join(rng.choice("+-*/") for _ in range(rng.randint(1, 6)))
        values = [rng.randint(1, 10**6) for _ in range(rng.randint(1, 64))]
        assert abs(target.compute_mapping(ops, values) - mapping_oracle(ops, values)) <= 1e-12


def test_mapping_deterministic_and_bounded_10000():
    rng = random.Random(13)
    for _ in range(10_000):
        ops = "".join(rng.choice("+-*/") for _ in range(rng.randint(1, 6)))
        values = [rng.randint(1, 10**6) for _ in range(rng.randint(1, 64))]
        a = target.compute_mapping(ops, values)
        b = target.compute_mapping(MappingFunctionSpec.between("X", "Y", ops), wire.RandomSet(tuple(values)))
        assert a == b and -1 <= a <= 1


@given(st.text("+-", min_size=1, max_size=4), st.lists(st.integers(1, 1000), min_size=1, max_size=20))
def test_additive_mapping_matches_float_evaluation(ops, values):
    # + and - over small integers are exact in binary64, so plain math.sin agrees
    assert abs(target.compute_mapping(ops, values) - mapping_float(ops, values)) <= 1e-12


# -- request ---------------------------------------------------------------------


def test_request_round_trip(net):
    rng = random.Random(1)
    s_req, session = source.build_request(net.identity("CIA"), net.snapshot, "FBI", b"QUERY 98LetT1", 3, rng)
    req = target.validate_request(net.identity("FBI"), net.snapshot, s_req)
    assert req.integrity_ok and req.auth_ok
    assert req.request_text == b"QUERY 98LetT1"
    assert req.src == "CIA"
    assert req.random_set == session.random_set
    assert req.nonce_cipher == session.nonce_cipher
    assert len(session.random_set) == 3


def test_session_state_invariant(net):
    me = net.identity("CIA")
    _, session = source.build_request(me, net.snapshot, "FBI", b"x", 1, random.Random(2))
    opened = crypto.private_decrypt(session.nonce_cipher, me.private_key)
    assert wire.decode_nonce(opened) == session.nonce


@pytest.mark.parametrize("n", [0, 65])
def test_random_set_size_precondition(net, n):
    with pytest.raises(ValueError):
        source.build_request(net.identity("CIA"), net.snapshot, "FBI", b"x", n)


def test_unknown_target(net):
    with pytest.raises(UnknownAgency):
        source.build_request(net.identity("CIA"), net.snapshot, "KGB", b"x", 3)


def test_request_single_byte_mutations_all_rejected(net):
    rng = random.Random(3)
    s_req, _ = source.build_request(net.identity("CIA"), net.snapshot, "FBI", b"QUERY 98LetT1", 3, rng)
    fbi = net.identity("FBI")
    for _ in range(1000):
        bad = bytearray(s_req)
        bad[rng.randrange(len(bad))] ^= rng.randrange(1, 256)
        with pytest.raises(TAMPER_ERRORS):
            target.validate_request(fbi, net.snapshot, bytes(bad))


def test_request_for_wrong_target_cannot_be_opened(net):
    s_req, _ = source.build_request(net.identity("CIA"), net.snapshot, "FBI", b"QUERY 98LetT1", 3)
    with pytest.raises(DecryptError):
        target.validate_request(net.identity("RAW"), net.snapshot, s_req)


def test_impostor_signature(net, outsider):
    """Outer frame claims CIA but SA_Data was sealed with another agency's private key."""
    rng = random.Random(4)
    cia = net.identity("CIA")
    nonce_cipher = crypto.public_encrypt(wire.encode_nonce(5), cia.public_key, rng)
    rs = wire.RandomSet((1, 2, 3))
    text = b"QUERY 98LetT1"
    digest = crypto.md5_digest(wire.encode_preimage_request(nonce_cipher, "CIA", rs, text))
    blob = crypto.private_encrypt(wire.encode_signed_data(wire.SignedData(rs, text, digest)), outsider.private_key, rng)
    s_req = crypto.public_encrypt(wire.encode_request(wire.SourceRequestPlain(nonce_cipher, "CIA", blob)),
                                  net.snapshot.public_key("FBI"), rng)
    with pytest.raises(AuthError):
        target.validate_request(net.identity("FBI"), net.snapshot, s_req)


def test_unregistered_source_is_auth_failure(net, outsider):
    s_req = crypto.public_encrypt(
        wire.encode_request(wire.SourceRequestPlain(b"rv", "MOSSAD", b"blob")), net.snapshot.public_key("FBI"))
    with pytest.raises(UnknownAgency):
        target.validate_request(net.identity("FBI"), net.snapshot, s_req)
    assert issubclass(UnknownAgency, AuthError)


def test_inconsistent_signed_text_is_integrity_error(net):
    """Digest covers the original request text but the signed blob carries another."""
    rng = random.Random(5)
    cia = net.identity("CIA")
    nonce_cipher = crypto.public_encrypt(wire.encode_nonce(5), cia.public_key, rng)
    rs = wire.RandomSet((1, 2, 3))
    digest = crypto.md5_digest(wire.encode_preimage_request(nonce_cipher, "CIA", rs, b"QUERY 98LetT1"))
    signed = wire.SignedData(rs, b"QUERY 98LetT2", digest)
    blob = crypto.private_encrypt(wire.encode_signed_data(signed), cia.private_key, rng)
    s_req = crypto.public_encrypt(wire.encode_request(wire.SourceRequestPlain(nonce_cipher, "CIA", blob)),
                                  net.snapshot.public_key("FBI"), rng)
    with pytest.raises(IntegrityError):
        target.validate_request(net.identity("FBI"), net.snapshot, s_req)


# -- response --------------------------------------------------------------------


def test_honest_exchange(net):
    me, session, _, t_res = run(net, "CIA", "FBI", "98LetT1")
    result = source.validate_response(session, me, net.snapshot.get_mapping("CIA", "FBI"), t_res)
    assert result.verdicts == source.Verdicts(True, True, True)
    assert [i.decode() for i in result.items] == ["16", "13", "15", "18", "12", "11", "19", "20", "14"]


def test_raw_to_cia_06tal(net):
    me, session, _, t_res = run(net, "RAW", "CIA", "06TalT6")
    result = source.validate_response(session, me, net.snapshot.get_mapping("RAW", "CIA"), t_res)
    assert [i.decode() for i in result.items] == ["69", "62", "66"]


def test_trust_zero_gives_empty_valid_response(net):
    store = net.snapshot.copy()
    store.set_trust(TrustRecord("CIA", "FBI", "98Let", 0))
    store = store.snapshot_duplicate()
    rng = random.Random(6)
    me = net.identity("CIA")
    s_req, session = source.build_request(me, store, "FBI", b"QUERY 98LetT1", 3, rng)
    t_res = target.respond(net.identity("FBI"), store, s_req, rng)
    assert source.validate_response(session, me, store.get_mapping("CIA", "FBI"), t_res).items == ()


def test_unknown_code_and_bad_syntax(net):
    fbi = net.identity("FBI")
    for text in (b"QUERY 98LetT99", b"GIVE 98LetT1", b"QUERY nonsense"):
        s_req, _ = source.build_request(net.identity("CIA"), net.snapshot, "FBI", text, 2)
        with pytest.raises(UnknownCategory):
            target.respond(fbi, net.snapshot, s_req)


def test_unvalidated_request_refused(net):
    req = target.DecodedRequest("CIA", b"", wire.RandomSet((1,)), b"QUERY 98LetT1", False, True)
    with pytest.raises(AuthError):
        target.build_response(net.identity("FBI"), net.snapshot, req)


def test_wrong_mapping_is_target_auth_error(net):
    me, session, _, t_res = run(net, "CIA", "FBI", "98LetT1", n=5)
    with pytest.raises(TargetAuthError):
        source.validate_response(session, me, MappingFunctionSpec.between("CIA", "FBI", "/-"), t_res)


def test_cross_session_delivery_is_session_mismatch(net):
    me, session_a, _, t_res_a = run(net, "CIA", "FBI", "98LetT1", seed=1)
    _, session_b, _, _ = run(net, "CIA", "FBI", "98LetT1", seed=2)
    with pytest.raises(SessionMismatch):
        source.validate_response(session_b, me, net.snapshot.get_mapping("CIA", "FBI"), t_res_a)


def test_echoed_foreign_nonce_rejected_even_if_everything_else_valid(net):
    """Target echoes a different R_V but computes the right mapping over the session's S_R."""
    rng = random.Random(8)
    me, session, s_req, _ = run(net, "CIA", "FBI", "98LetT1")
    req = target.validate_request(net.identity("FBI"), net.snapshot, s_req)
    forged_rv = crypto.public_encrypt(wire.encode_nonce(session.nonce ^ 1), me.public_key, rng)
    forged = target.DecodedRequest(req.src, forged_rv, req.random_set, req.request_text, True, True)
    t_res = target.build_response(net.identity("FBI"), net.snapshot, forged, rng)
    plain, verdicts = source.check_response(session, me, net.snapshot.get_mapping("CIA", "FBI"), t_res)
    assert verdicts.integrity and verdicts.target_authentic and not verdicts.session_match
    with pytest.raises(SessionMismatch):
        source.validate_response(session, me, net.snapshot.get_mapping("CIA", "FBI"), t_res)


def test_response_single_byte_mutations_all_rejected(net):
    rng = random.Random(9)
    me, session, _, t_res = run(net, "ISI", "FBI", "98LetT8")
    mapping = net.snapshot.get_mapping("ISI", "FBI")
    for _ in range(1000):
        bad = bytearray(t_res)
        bad[rng.randrange(len(bad))] ^= rng.randrange(1, 256)
        with pytest.raises(TAMPER_ERRORS):
            source.validate_response(session, me, mapping, bytes(bad))


def test_validated_response_requires_all_verdicts():
    with pytest.raises(ValueError):
        source.ValidatedResponse((), None, source.Verdicts(True, False, True))


def test_response_for_other_agency_cannot_be_opened(net):
    _, session, _, t_res = run(net, "CIA", "FBI", "98LetT1")
    with pytest.raises(DecryptError):
        source.validate_response(session, net.identity("RAW"), net.snapshot.get_mapping("CIA", "FBI"), t_res)
