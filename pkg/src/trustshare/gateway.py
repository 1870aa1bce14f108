"""Operator and general-user access to one agency's store.

Two access levels: administrators (the agency itself) may change anything in
the store; general users register, receive a password once an administrator
approves them, and may only query. Passwords are kept as salted MD5 digests
in memory and are never written to disk.

The service speaks a line protocol over a Unix socket. A request is one line
of tab-separated fields::

    REGISTER  <username>
    APPROVE   <admin> <password> <username>
    QUERY     <user> <password> <terrorist code>
    AGENCY    <admin> <password> <agency id> <role> [<public key hex>]
    TERRORIST <admin> <password> <terrorist code> <comma-separated items>
    ACTIVITY  <admin> <password> <terrorist code> <item>
    TRUST     <admin> <password> <source> <target> <category> <level>
    MAPFN     <admin> <password> <agency a> <agency b> <operators>

The reply is ``OK`` followed by zero or more ``key<TAB>value`` lines, or a
single line ``ERR<TAB><ErrorName><TAB><message>``.
"""

from __future__ import annotations

import hmac
import os
import socket
import socketserver
import string
import threading
from dataclasses import dataclass
from pathlib import Path

from . import errors
from .crypto import PublicKey, default_rng, md5_digest
from .disclosure import category_of, is_valid_code
from .errors import (
    DuplicateUser,
    GatewayError,
    NotAuthenticated,
    NotAuthorized,
    ProtocolError,
    StoreError,
    UnknownCode,
)
from .store import MappingFunctionSpec, TrustRecord, TrustStore

PASSWORD_ALPHABET = string.ascii_letters + string.digits
PASSWORD_LENGTH = 16


@dataclass
class UserAccount:
    username: str
    role: str  # "admin" | "general"
    status: str = "pending"  # "pending" | "active"
    password_digest: bytes | None = None
    salt: bytes = b""


@dataclass(frozen=True)
class QueryView:
    code: str
    category: str
    owner: str
    items: tuple[str, ...]


def _digest(salt: bytes, password: str) -> bytes:
    return md5_digest(salt + password.encode("utf-8"))


class Gateway:
    """Account registry plus authorised access to a trust store.

    When ``store_path`` is given every successful mutation is saved there;
    queries never write.
    """

    MUTATING = ("approve_user", "upsert_agency", "upsert_terrorist", "upsert_activity", "set_trust", "set_mapfn")

    def __init__(self, store: TrustStore, agency: str, store_path: str | Path | None = None, rng=None):
        store.lookup(agency)
        self.store = store
        self.agency = agency
        self.store_path = Path(store_path) if store_path else None
        self.rng = rng or default_rng()
        self.users: dict[str, UserAccount] = {}
        self._lock = threading.RLock()

    # -- accounts -----------------------------------------------------------

    def _new_password(self) -> str:
        return "".join(self.rng.choice(PASSWORD_ALPHABET) for _ in range(PASSWORD_LENGTH))

    def _activate(self, account: UserAccount) -> str:
        password = self._new_password()
        account.salt = self.rng.randbytes(16)
        account.password_digest = _digest(account.salt, password)
        account.status = "active"
        return password

    def create_admin(self, username: str, password: str | None = None) -> str:
        """Add an active administrator; returns its password."""
        with self._lock:
            if username in self.users:
                raise DuplicateUser(f"user {username!r} already exists")
            account = UserAccount(username, "admin")
            issued = self._activate(account)
            if password is not None:
                account.password_digest = _digest(account.salt, password)
                issued = password
            self.users[username] = account
            return issued

    def register_user(self, username: str) -> UserAccount:
        _check_username(username)
        with self._lock:
            if username in self.users:
                raise DuplicateUser(f"user {username!r} already exists")
            account = UserAccount(username, "general")
            self.users[username] = account
            return account

    def authenticate(self, username: str, password: str) -> UserAccount:
        account = self.users.get(username)
        if account is None or account.status != "active" or account.password_digest is None:
            raise NotAuthenticated(f"no active account {username!r}")
        if not hmac.compare_digest(_digest(account.salt, password), account.password_digest):
            raise NotAuthenticated("password verification failed")
        return account

    def _admin(self, username: str, password: str) -> UserAccount:
        account = self.authenticate(username, password)
        if account.role != "admin":
            raise NotAuthorized(f"{username!r} is a general user and cannot change the database")
        return account

    def approve_user(self, admin: str, password: str, username: str) -> str:
        """Activate a pending account and return its password; it is not retrievable later."""
        self._admin(admin, password)
        with self._lock:
            account = self.users.get(username)
            if account is None:
                raise GatewayError(f"no registration for {username!r}")
            if account.status == "active":
                raise DuplicateUser(f"user {username!r} is already active")
            return self._activate(account)

    # -- read-only ----------------------------------------------------------

    def query_terrorist(self, username: str, password: str, code: str) -> QueryView:
        self.authenticate(username, password)
        if not is_valid_code(code):
            raise UnknownCode(f"{code!r} is not a terrorist code")
        items = self.store.get_items(self.agency, code)
        if items is None:
            raise UnknownCode(f"{self.agency} holds nothing under {code}")
        return QueryView(code, category_of(code), self.agency, tuple(items))

    # -- administration -----------------------------------------------------

    def _persist(self) -> None:
        if self.store_path is not None:
            self.store.save(self.store_path)

    def upsert_agency(self, admin: str, password: str, agency_id: str, role: str = "agency",
                      public_key: PublicKey | None = None) -> None:
        self._admin(admin, password)
        with self._lock:
            self.store.upsert_agency(agency_id, public_key, role)
            self._persist()

    def upsert_terrorist(self, admin: str, password: str, code: str, items) -> None:
        self._admin(admin, password)
        with self._lock:
            self.store.set_items(self.agency, code, list(items))
            self._persist()

    def upsert_activity(self, admin: str, password: str, code: str, item: str) -> None:
        self._admin(admin, password)
        with self._lock:
            self.store.append_item(self.agency, code, item)
            self._persist()

    def set_trust(self, admin: str, password: str, source: str, target: str, category: str, level: int) -> None:
        self._admin(admin, password)
        with self._lock:
            self.store.set_trust(TrustRecord(source, target, category, level))
            self._persist()

    def set_mapfn(self, admin: str, password: str, a: str, b: str, operators: str) -> None:
        self._admin(admin, password)
        with self._lock:
            self.store.set_mapping(MappingFunctionSpec.between(a, b, operators))
            self._persist()

    # -- line protocol ------------------------------------------------------

    def dispatch(self, line: str) -> str:
        """Handle one request line and return the reply block."""
        try:
            return "\n".join(["OK"] + self._dispatch(line.rstrip("\r\n").split("\t"))) + "\n"
        except (ProtocolError, ValueError) as exc:
            name = type(exc).__name__ if isinstance(exc, ProtocolError) else "ValidationError"
            message = str(exc).replace("\n", " ").replace("\t", " ")
            return f"ERR\t{name}\t{message}\n"

    def _dispatch(self, fields: list[str]) -> list[str]:
        verb, args = fields[0], fields[1:]
        handler = _VERBS.get(verb)
        if handler is None:
            raise GatewayError(f"unknown verb {verb!r}")
        arity, fn = handler
        if len(args) not in arity:
            raise GatewayError(f"{verb} takes {'/'.join(map(str, arity))} fields, got {len(args)}")
        return fn(self, *args)


def _check_username(username: str) -> None:
    if not username or any(c in username for c in "\t\r\n ") or len(username) > 64:
        raise GatewayError(f"invalid username {username!r}")


def _v_register(gw, username):
    account = gw.register_user(username)
    return [f"user\t{account.username}", f"status\t{account.status}"]


def _v_approve(gw, admin, password, username):
    return [f"user\t{username}", f"password\t{gw.approve_user(admin, password, username)}"]


def _v_query(gw, user, password, code):
    view = gw.query_terrorist(user, password, code)
    return [f"code\t{view.code}", f"category\t{view.category}", f"owner\t{view.owner}",
            f"items\t{','.join(view.items)}"]


def _v_agency(gw, admin, password, agency_id, role, key_hex=None):
    key = PublicKey.from_bytes(bytes.fromhex(key_hex)) if key_hex else None
    gw.upsert_agency(admin, password, agency_id, role, key)
    return [f"agency\t{agency_id}"]


def _v_terrorist(gw, admin, password, code, items):
    gw.upsert_terrorist(admin, password, code, items.split(",") if items else [])
    return [f"code\t{code}"]


def _v_activity(gw, admin, password, code, item):
    gw.upsert_activity(admin, password, code, item)
    return [f"code\t{code}"]


def _v_trust(gw, admin, password, source, target, category, level):
    gw.set_trust(admin, password, source, target, category, int(level))
    return []


def _v_mapfn(gw, admin, password, a, b, operators):
    gw.set_mapfn(admin, password, a, b, operators)
    return []


_VERBS = {
    "REGISTER": ((1,), _v_register),
    "APPROVE": ((3,), _v_approve),
    "QUERY": ((3,), _v_query),
    "AGENCY": ((4, 5), _v_agency),
    "TERRORIST": ((4,), _v_terrorist),
    "ACTIVITY": ((4,), _v_activity),
    "TRUST": ((6,), _v_trust),
    "MAPFN": ((5,), _v_mapfn),
}

#: Verbs that change the store or the account registry.
MUTATING_VERBS = ("APPROVE", "AGENCY", "TERRORIST", "ACTIVITY", "TRUST", "MAPFN")


# -- socket service -----------------------------------------------------------


class GatewayServer(socketserver.UnixStreamServer):
    """One request line per connection; requests are served one at a time."""

    def __init__(self, path: str | Path, gateway: Gateway):
        self.gateway = gateway
        path = str(path)
        if os.path.exists(path):
            os.unlink(path)
        super().__init__(path, _LineHandler)

    def server_close(self):
        super().server_close()
        try:
            os.unlink(self.server_address)
        except OSError:
            pass


class _LineHandler(socketserver.StreamRequestHandler):
    def handle(self):
        line = self.rfile.readline(65536).decode("utf-8", "replace")
        self.wfile.write(self.server.gateway.dispatch(line).encode("utf-8"))


def serve_in_thread(path: str | Path, gateway: Gateway) -> GatewayServer:
    server = GatewayServer(path, gateway)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    return server


@dataclass(frozen=True)
class Reply:
    ok: bool
    fields: dict[str, str]
    error: str | None = None
    message: str = ""

    def raise_for_error(self) -> Reply:
        if not self.ok:
            cls = getattr(errors, self.error or "", None)
            if not (isinstance(cls, type) and issubclass(cls, ProtocolError)):
                cls = StoreError if self.error == "ValidationError" else GatewayError
            raise cls(self.message)
        return self


def parse_reply(block: str) -> Reply:
    lines = block.rstrip("\n").split("\n")
    head = lines[0].split("\t")
    if head[0] == "OK":
        return Reply(True, dict(line.split("\t", 1) for line in lines[1:] if "\t" in line))
    if head[0] == "ERR" and len(head) >= 2:
        return Reply(False, {}, head[1], head[2] if len(head) > 2 else "")
    raise GatewayError(f"unparseable reply {block!r}")


def request(path: str | Path, *fields: str, timeout: float = 10.0) -> Reply:
    """Send one request to a running gateway and parse its reply."""
    line = "\t".join(fields) + "\n"
    with socket.socket(socket.AF_UNIX, socket.SOCK_STREAM) as sock:
        sock.settimeout(timeout)
        sock.connect(str(path))
        sock.sendall(line.encode("utf-8"))
        sock.shutdown(socket.SHUT_WR)
        chunks = []
        while chunk := sock.recv(65536):
            chunks.append(chunk)
    return parse_reply(b"".join(chunks).decode("utf-8"))
