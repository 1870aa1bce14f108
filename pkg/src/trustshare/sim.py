"""Multi-agency network simulator.

Each exchange runs the full round trip (build request, validate it at the
target, build the response, validate it at the source) over either an
in-process bus or real loopback TCP sockets. Randomness for exchange ``i`` is
derived from ``(seed, i)`` alone, so one exchange failing, or exchanges running
in parallel, never changes what another exchange sees.

Scenario files use the same tagged, tab-separated line format as the store::

    AGENCY     <id>
    EXCHANGE   <source> <target> <terrorist code>
    ADVERSARY  <message index> <byte offset> <xor mask>

Message ``2*i`` is exchange ``i``'s request and ``2*i + 1`` its response.
"""

from __future__ import annotations

import random
import socket
import socketserver
import struct
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import errors, source, target, wire
from .crypto import CertificateAuthority, KeyPair, MIN_KEY_BITS, md5_digest
from .errors import ParseError, ProtocolError
from .source import Verdicts
from .store import AgencyIdentity, TrustStore
from .table1 import ROWS, load_store

TRANSPORTS = ("in-process", "loopback-socket")
DEFAULT_SET_SIZE = 8


class TransportError(ProtocolError):
    pass


def mutate(message: bytes, offset: int, mask: int) -> bytes:
    """XOR one byte of ``message`` with ``mask``."""
    if not 0 <= offset < len(message):
        raise ValueError(f"offset {offset} outside message of {len(message)} bytes")
    if not 0 <= mask <= 0xFF:
        raise ValueError(f"mask {mask} is not a byte")
    out = bytearray(message)
    out[offset] ^= mask
    return bytes(out)


@dataclass(frozen=True)
class Exchange:
    source: str
    target: str
    code: str


@dataclass(frozen=True)
class Mutation:
    message_index: int
    offset: int
    mask: int


@dataclass
class Scenario:
    agencies: list[str] = field(default_factory=list)
    exchanges: list[Exchange] = field(default_factory=list)
    adversary: Mutation | None = None

    def participants(self) -> list[str]:
        ids = set(self.agencies)
        for ex in self.exchanges:
            ids.update((ex.source, ex.target))
        return sorted(ids)

    @classmethod
    def table1(cls) -> Scenario:
        return cls(
            agencies=sorted({r.source for r in ROWS} | {r.target for r in ROWS}),
            exchanges=[Exchange(r.source, r.target, r.code) for r in ROWS],
        )

    def dumps(self) -> str:
        lines = [f"AGENCY\t{a}" for a in self.agencies]
        lines += [f"EXCHANGE\t{e.source}\t{e.target}\t{e.code}" for e in self.exchanges]
        if self.adversary:
            m = self.adversary
            lines.append(f"ADVERSARY\t{m.message_index}\t{m.offset}\t{m.mask:#04x}")
        return "".join(line + "\n" for line in lines)

    @classmethod
    def loads(cls, text: str) -> Scenario:
        scenario = cls()
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.rstrip("\r").split("\t")
            kind, args = fields[0], fields[1:]
            try:
                if kind == "AGENCY" and len(args) == 1:
                    scenario.agencies.append(wire.check_agency_id(args[0]))
                elif kind == "EXCHANGE" and len(args) == 3:
                    scenario.exchanges.append(Exchange(*args))
                elif kind == "ADVERSARY" and len(args) == 3:
                    if scenario.adversary is not None:
                        raise ValueError("only one ADVERSARY rule is allowed")
                    scenario.adversary = Mutation(int(args[0]), int(args[1]), int(args[2], 0))
                else:
                    raise ValueError(f"bad {kind!r} record with {len(args)} fields")
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
        return scenario

    @classmethod
    def load(cls, path: str | Path) -> Scenario:
        return cls.loads(Path(path).read_text(encoding="utf-8"))


@dataclass
class ExchangeRecord:
    index: int
    source: str
    target: str
    code: str
    request_md5: str = ""
    response_md5: str = ""
    verdicts: Verdicts | None = None
    items: tuple[str, ...] = ()
    error: str | None = None
    wall_time: float = 0.0

    @property
    def ok(self) -> bool:
        return self.error is None

    def outcome(self):
        """Everything but wall time; equal across runs with the same seed and keys."""
        return (self.index, self.source, self.target, self.code, self.request_md5,
                self.response_md5, self.verdicts, self.items, self.error)

    def row(self, with_time: bool = True) -> str:
        if self.verdicts is None:
            verdicts = "-"
        else:
            v = self.verdicts
            verdicts = f"integrity={int(v.integrity)},target={int(v.target_authentic)},session={int(v.session_match)}"
        cols = [str(self.index), self.source, self.target, self.code, self.request_md5 or "-",
                self.response_md5 or "-", verdicts, "{" + ",".join(self.items) + "}", self.error or "-"]
        if with_time:
            cols.append(f"{self.wall_time * 1000:.3f}")
        return "\t".join(cols)


TSV_HEADER = "#index\tsource\ttarget\tcode\trequest_md5\tresponse_md5\tverdicts\titems\terror\twall_ms"


@dataclass
class Transcript:
    entries: list[ExchangeRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def outcomes(self):
        return [e.outcome() for e in self.entries]

    def to_tsv(self, with_time: bool = True) -> str:
        header = TSV_HEADER if with_time else TSV_HEADER.rsplit("\t", 1)[0]
        return "\n".join([header] + [e.row(with_time) for e in self.entries]) + "\n"


# -- transports ---------------------------------------------------------------

class InProcessTransport:
    def __init__(self, handler):
        self.handler = handler

    def send(self, target_id: str, index: int, payload: bytes) -> bytes:
        return self.handler(target_id, index, payload)

    def close(self) -> None:
        pass


def _recv_exact(stream, size: int) -> bytes:
    data = stream.read(size)
    if data is None or len(data) != size:
        raise TransportError("connection closed mid-frame")
    return data


def _read_frame(stream) -> bytes:
    (size,) = struct.unpack(">I", _recv_exact(stream, 4))
    return _recv_exact(stream, size)


def _frame(data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + data


class LoopbackTransport:
    """Targets listen on 127.0.0.1; each request is one TCP connection.

    Request frame: ``lp(target id) | u32 exchange index | lp(S_Req)``.
    Reply frame: ``0x00 | T_Res`` or ``0x01 | ErrorName TAB message``.
    """

    def __init__(self, handler):
        outer = self

        class _Handler(socketserver.StreamRequestHandler):
            def handle(self):
                try:
                    r = wire.Reader(_read_frame(self.rfile))
                    target_id = r.field().decode("utf-8")
                    index = r.u32()
                    payload = r.field()
                    r.finish()
                    reply = b"\x00" + outer.handler(target_id, index, payload)
                except ProtocolError as exc:
                    reply = b"\x01" + f"{type(exc).__name__}\t{exc}".encode("utf-8", "replace")
                self.wfile.write(_frame(reply))

        self.handler = handler
        self.server = socketserver.ThreadingTCPServer(("127.0.0.1", 0), _Handler)
        self.server.daemon_threads = True
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def address(self):
        return self.server.server_address

    def send(self, target_id: str, index: int, payload: bytes) -> bytes:
        body = wire.lp(target_id.encode("utf-8")) + struct.pack(">I", index) + wire.lp(payload)
        try:
            with socket.create_connection(self.address, timeout=30) as sock:
                sock.sendall(_frame(body))
                with sock.makefile("rb") as stream:
                    reply = _read_frame(stream)
        except OSError as exc:
            raise TransportError(f"loopback transport failed: {exc}") from None
        if reply[:1] == b"\x00":
            return reply[1:]
        name, _, message = reply[1:].decode("utf-8", "replace").partition("\t")
        cls = getattr(errors, name, None)
        if not (isinstance(cls, type) and issubclass(cls, ProtocolError)):
            cls = TransportError
        raise cls(message)

    def close(self) -> None:
        self.server.shutdown()
        self.server.server_close()


def make_transport(kind: str, handler):
    if kind == "in-process":
        return InProcessTransport(handler)
    if kind == "loopback-socket":
        return LoopbackTransport(handler)
    raise ValueError(f"transport must be one of {TRANSPORTS}, got {kind!r}")


# -- scenario runner ----------------------------------------------------------


def exchange_rng(seed: int, index: int, role: str) -> random.Random:
    return random.Random(f"{seed}:{index}:{role}")


def provision_keys(agency_ids, seed: int, bits: int = MIN_KEY_BITS) -> dict[str, KeyPair]:
    """Deterministic keys for ``agency_ids`` from the seeded CA stub."""
    ca = CertificateAuthority(bits, random.Random(f"{seed}:ca"))
    return {agency_id: ca.provision(agency_id) for agency_id in sorted(agency_ids)}


class Network:
    """A read-only store snapshot plus the identities acting on it."""

    def __init__(self, store: TrustStore, keys: dict[str, KeyPair], seed: int = 0):
        working = store.copy()
        for agency_id, pair in keys.items():
            if agency_id not in working.agencies:
                working.register_agency(agency_id, pair.public_part)
            else:
                working.set_public_key(agency_id, pair.public_part)
        self.snapshot = working.snapshot_duplicate()
        self.identities = {
            agency_id: AgencyIdentity(agency_id, pair, working.lookup(agency_id).role)
            for agency_id, pair in keys.items()
        }
        self.seed = seed

    def identity(self, agency_id: str) -> AgencyIdentity:
        try:
            return self.identities[agency_id]
        except KeyError:
            raise errors.UnknownAgency(f"no keypair provisioned for {agency_id!r}") from None

    def handle(self, target_id: str, index: int, s_req: bytes) -> bytes:
        me = self.identity(target_id)
        return target.respond(me, self.snapshot, s_req, exchange_rng(self.seed, index, "target"))


def _run_exchange(net: Network, transport, index: int, ex: Exchange, adversary: Mutation | None,
                  set_size: int) -> ExchangeRecord:
    record = ExchangeRecord(index, ex.source, ex.target, ex.code)
    rng = exchange_rng(net.seed, index, "source")
    started = time.perf_counter()
    session = t_res = None
    try:
        me = net.identity(ex.source)
        s_req, session = source.build_request(me, net.snapshot, ex.target, target.query_text(ex.code), set_size, rng)
        record.request_md5 = md5_digest(s_req).hex()
        if adversary and adversary.message_index == 2 * index:
            s_req = mutate(s_req, adversary.offset, adversary.mask)
        t_res = transport.send(ex.target, index, s_req)
        record.response_md5 = md5_digest(t_res).hex()
        if adversary and adversary.message_index == 2 * index + 1:
            t_res = mutate(t_res, adversary.offset, adversary.mask)
        mapping = net.snapshot.get_mapping(ex.source, ex.target)
        validated = source.validate_response(session, me, mapping, t_res)
        record.verdicts = validated.verdicts
        record.items = tuple(item.decode("utf-8", "replace") for item in validated.items)
    except (ProtocolError, ValueError) as exc:
        record.error = type(exc).__name__
        if session is not None and t_res is not None:
            try:
                _, record.verdicts = source.check_response(
                    session, net.identity(ex.source), net.snapshot.get_mapping(ex.source, ex.target), t_res
                )
            except ProtocolError:
                pass
    record.wall_time = time.perf_counter() - started
    return record


def run_scenario(
    store: TrustStore,
    scenario: Scenario,
    transport: str = "in-process",
    seed: int = 0,
    keys: dict[str, KeyPair] | None = None,
    set_size: int = DEFAULT_SET_SIZE,
    parallel: int = 1,
    bits: int = MIN_KEY_BITS,
) -> Transcript:
    """Run every exchange of ``scenario`` and record its outcome.

    Agencies without a supplied keypair get one from a CA stub seeded by
    ``seed``, so the same (scenario, seed) reproduces the same transcript.
    """
    keys = dict(keys or {})
    missing = [a for a in scenario.participants() if a not in keys]
    if missing:
        keys.update(provision_keys(missing, seed, bits))
    net = Network(store, keys, seed)
    link = make_transport(transport, net.handle)
    try:
        jobs = [(i, ex) for i, ex in enumerate(scenario.exchanges)]
        if parallel > 1:
            with ThreadPoolExecutor(parallel) as pool:
                entries = list(pool.map(
                    lambda job: _run_exchange(net, link, job[0], job[1], scenario.adversary, set_size), jobs))
        else:
            entries = [_run_exchange(net, link, i, ex, scenario.adversary, set_size) for i, ex in jobs]
    finally:
        link.close()
    return Transcript(entries)


@dataclass(frozen=True)
class RowCheck:
    row: int
    source: str
    target: str
    code: str
    expected: tuple[str, ...]
    shared: tuple[str, ...]
    error: str | None

    @property
    def match(self) -> bool:
        return self.error is None and self.expected == self.shared


def run_table1(store: TrustStore | None = None, seed: int = 0, transport: str = "in-process",
               keys: dict[str, KeyPair] | None = None) -> tuple[Transcript, list[RowCheck]]:
    """Run the ten table exchanges and compare the shared items row by row."""
    store = store if store is not None else load_store()
    transcript = run_scenario(store, Scenario.table1(), transport=transport, seed=seed, keys=keys)
    checks = [
        RowCheck(i + 1, row.source, row.target, row.code, tuple(map(str, row.shared)), entry.items, entry.error)
        for i, (row, entry) in enumerate(zip(ROWS, transcript))
    ]
    return transcript, checks
