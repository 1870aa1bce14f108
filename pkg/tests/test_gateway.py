import random
import tempfile
from pathlib import Path

import pytest

from trustshare import gateway, table1
from trustshare.crypto import md5_digest
from trustshare.errors import DuplicateUser, NotAuthenticated, NotAuthorized, StoreError, UnknownCode


@pytest.fixture
def store_file(tmp_path):
    path = tmp_path / "fbi.store"
    table1.load_store().save(path)
    return path


@pytest.fixture
def gw(store_file):
    from trustshare.store import TrustStore

    g = gateway.Gateway(TrustStore.load(store_file), "FBI", store_file, rng=random.Random(1))
    g.admin_password = g.create_admin("root")
    return g


@pytest.fixture
def user(gw):
    gw.register_user("alice")
    return "alice", gw.approve_user("root", gw.admin_password, "alice")


@pytest.fixture
def sock(gw):
    # AF_UNIX paths are limited to ~108 bytes, so keep the socket path short
    with tempfile.TemporaryDirectory(prefix="ts") as d:
        path = Path(d) / "gw.sock"
        server = gateway.serve_in_thread(path, gw)
        yield path
        server.shutdown()
        server.server_close()


def test_register_approve_authenticate(gw, user):
    name, password = user
    assert len(password) == gateway.PASSWORD_LENGTH and password.isalnum()
    account = gw.authenticate(name, password)
    assert account.status == "active" and account.role == "general"


def test_pending_user_cannot_log_in(gw):
    gw.register_user("bob")
    with pytest.raises(NotAuthenticated):
        gw.query_terrorist("bob", "", "98LetT1")


def test_wrong_password(gw, user):
    with pytest.raises(NotAuthenticated):
        gw.authenticate(user[0], user[1] + "x")


def test_duplicate_user(gw, user):
    with pytest.raises(DuplicateUser):
        gw.register_user("alice")


def test_general_user_cannot_approve(gw, user):
    gw.register_user("bob")
    with pytest.raises(NotAuthorized):
        gw.approve_user(*user, "bob")


def test_password_stored_only_as_digest(gw, user, store_file):
    name, password = user
    account = gw.users[name]
    assert account.password_digest != password.encode()
    assert account.password_digest == md5_digest(account.salt + password.encode())
    text = store_file.read_text()
    assert password not in text and account.password_digest.hex() not in text


def test_query_returns_owner_items(gw, user):
    view = gw.query_terrorist(*user, "98LetT1")
    assert view.owner == "FBI" and view.category == "98Let"
    assert view.items == tuple(str(i) for i in table1.ROWS[0].available)


@pytest.mark.parametrize("code", ["98LetT2", "garbage", "99ZzzT1"])
def test_unknown_code(gw, user, code):
    with pytest.raises(UnknownCode):
        gw.query_terrorist(*user, code)


def test_queries_never_touch_store_file(gw, user, store_file):
    before = md5_digest(store_file.read_bytes())
    rng = random.Random(17)
    codes = ["98LetT1", "06TalT4", "03AlqT8", "98LetT8", "06TalT9", "98LetT2", "bogus"]
    for _ in range(100):
        try:
            gw.query_terrorist(*user, rng.choice(codes))
        except UnknownCode:
            pass
    assert md5_digest(store_file.read_bytes()) == before


MUTATIONS = {
    "approve_user": ("carol",),
    "upsert_agency": ("NSA", "agency"),
    "upsert_terrorist": ("98LetT42", ["1", "2"]),
    "upsert_activity": ("98LetT1", "21"),
    "set_trust": ("CIA", "FBI", "98Let", 10),
    "set_mapfn": ("CIA", "FBI", "*"),
}


def test_mutation_table_covers_every_mutating_operation():
    assert set(MUTATIONS) == set(gateway.Gateway.MUTATING)


@pytest.mark.parametrize("op", sorted(MUTATIONS))
def test_general_user_cannot_mutate(gw, user, store_file, op):
    gw.register_user("carol")
    before = store_file.read_bytes()
    with pytest.raises(NotAuthorized):
        getattr(gw, op)(*user, *MUTATIONS[op])
    assert store_file.read_bytes() == before


@pytest.mark.parametrize("op", sorted(MUTATIONS))
def test_admin_can_mutate(gw, op):
    gw.register_user("carol")
    getattr(gw, op)("root", gw.admin_password, *MUTATIONS[op])


def test_add_terrorist_then_query(gw, user, store_file):
    gw.upsert_terrorist("root", gw.admin_password, "11HezT1", ["a", "b"])
    gw.upsert_activity("root", gw.admin_password, "11HezT1", "c")
    assert gw.query_terrorist(*user, "11HezT1").items == ("a", "b", "c")
    from trustshare.store import TrustStore

    assert TrustStore.load(store_file).get_items("FBI", "11HezT1") == ["a", "b", "c"]


def test_invalid_code_pattern_rejected(gw):
    with pytest.raises(StoreError):
        gw.upsert_terrorist("root", gw.admin_password, "Hez11", ["a"])


def test_upserts_persist_across_reload(gw, store_file):
    from trustshare.store import TrustStore

    rng = random.Random(21)
    for i in range(20):
        code = f"{rng.randint(10, 99)}Abc{i}"
        items = [str(rng.randint(0, 500)) for _ in range(rng.randint(1, 10))]
        gw.upsert_terrorist("root", gw.admin_password, code, items)
        assert TrustStore.load(store_file) == gw.store


# -- line protocol ---------------------------------------------------------------


def test_dispatch_reply_shapes(gw):
    assert gw.dispatch("REGISTER\tdave\n") == "OK\nuser\tdave\nstatus\tpending\n"
    err = gw.dispatch("REGISTER\tdave\n")
    assert err.startswith("ERR\tDuplicateUser\t") and err.count("\n") == 1
    assert gw.dispatch("NOPE\n").startswith("ERR\tGatewayError\t")
    assert gw.dispatch("QUERY\tx\n").startswith("ERR\tGatewayError\t")
    assert gw.dispatch(f"TRUST\troot\t{gw.admin_password}\tCIA\tFBI\t98Let\tten\n").startswith("ERR\tValidationError")


def test_socket_user_flow(gw, sock):
    assert gateway.request(sock, "REGISTER", "erin").raise_for_error().fields["status"] == "pending"
    password = gateway.request(sock, "APPROVE", "root", gw.admin_password, "erin").raise_for_error().fields["password"]
    reply = gateway.request(sock, "QUERY", "erin", password, "06TalT4").raise_for_error()
    assert reply.fields["items"] == ",".join(map(str, range(41, 51)))
    denied = gateway.request(sock, "TERRORIST", "erin", password, "98LetT77", "1")
    assert not denied.ok and denied.error == "NotAuthorized"
    with pytest.raises(NotAuthorized):
        denied.raise_for_error()


def test_socket_every_mutating_verb_refused_for_general_user(gw, user, sock, store_file):
    before = store_file.read_bytes()
    args = {
        "APPROVE": ["alice"],
        "AGENCY": ["NSA", "agency"],
        "TERRORIST": ["98LetT42", "1,2"],
        "ACTIVITY": ["98LetT1", "21"],
        "TRUST": ["CIA", "FBI", "98Let", "10"],
        "MAPFN": ["CIA", "FBI", "*"],
    }
    assert set(args) == set(gateway.MUTATING_VERBS)
    for verb, rest in args.items():
        reply = gateway.request(sock, verb, *user, *rest)
        assert (reply.ok, reply.error) == (False, "NotAuthorized"), verb
    assert store_file.read_bytes() == before
