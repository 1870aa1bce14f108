"""Registry of agencies, trust levels, mapping functions and information items.

The on-disk form is line-oriented UTF-8 text, one tab-separated record per
line, each starting with a kind tag::

    AGENCY    <id> <role> <public key hex | ->
    TRUST     <source> <target> <category> <level 0..10>
    MAPFN     <agency a> <agency b> <operators, e.g. +*->
    MAPORDER  <category> <comma-separated positions>
    INFO      <owner> <terrorist code> <comma-separated items>

Blank lines and lines starting with ``#`` are ignored. Private keys never go
in this file; they live in per-agency key files (see ``crypto``).
"""

from __future__ import annotations

import copy
import threading
from dataclasses import dataclass
from pathlib import Path

from .crypto import KeyPair, PublicKey
from .disclosure import MAX_TRUST, SelectionOrder, is_valid_category, is_valid_code
from .errors import DuplicateAgency, ParseError, StoreError, UnknownAgency
from .wire import check_agency_id

ROLES = ("agency", "general")
OPERATORS = "+-*/"
_OPERATOR_ALIASES = {"−": "-", "×": "*", "÷": "/", "x": "*"}
_FORBIDDEN_ITEM_CHARS = set("\t\n\r,")


@dataclass(frozen=True)
class AgencyRecord:
    id: str
    role: str = "agency"
    public_key: PublicKey | None = None


@dataclass(frozen=True)
class AgencyIdentity:
    """An agency as it acts in the protocol: its id, its keypair and its role."""

    id: str
    keypair: KeyPair
    role: str = "agency"

    @property
    def public_key(self) -> PublicKey:
        return self.keypair.public_part

    @property
    def private_key(self):
        return self.keypair.private_part


@dataclass(frozen=True)
class TrustRecord:
    source: str
    target: str
    category: str
    level: int

    def __post_init__(self):
        if not isinstance(self.level, int) or not 0 <= self.level <= MAX_TRUST:
            raise StoreError(f"trust level {self.level!r} outside 0..{MAX_TRUST}")


def pair_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class MappingFunctionSpec:
    """Operator list shared by one unordered pair of agencies."""

    pair: tuple[str, str]
    operators: str

    def __post_init__(self):
        object.__setattr__(self, "pair", pair_key(*self.pair))
        object.__setattr__(self, "operators", parse_operators(self.operators))

    @classmethod
    def between(cls, a: str, b: str, operators: str) -> MappingFunctionSpec:
        return cls((a, b), operators)


def parse_operators(text) -> str:
    ops = "".join(_OPERATOR_ALIASES.get(c, c) for c in text)
    if not ops or any(c not in OPERATORS for c in ops):
        raise StoreError(f"operators must be a nonempty string over {OPERATORS!r}, got {text!r}")
    return ops


def _check_item(item: str) -> str:
    if not isinstance(item, str) or not item or _FORBIDDEN_ITEM_CHARS & set(item):
        raise StoreError(f"information item {item!r} must be nonempty text without tabs, commas or newlines")
    return item


def _check_code(code: str) -> str:
    if not is_valid_code(code):
        raise StoreError(f"terrorist code {code!r} does not match NNAaaSUFFIX (e.g. 98LetT1)")
    return code


class TrustStore:
    """Mutable store plus read-only snapshots ("duplicate databases").

    Writers take an internal lock; snapshots are deep copies flagged read-only,
    which is what engines and the simulator operate on.
    """

    def __init__(self):
        self.agencies: dict[str, AgencyRecord] = {}
        self.trust: dict[tuple[str, str, str], int] = {}
        self.mapping: dict[tuple[str, str], MappingFunctionSpec] = {}
        self.orders: dict[str, SelectionOrder] = {}
        self.repos: dict[str, dict[str, list[str]]] = {}
        self.read_only = False
        self._lock = threading.RLock()

    # -- internals ----------------------------------------------------------

    def _writable(self):
        if self.read_only:
            raise StoreError("store snapshot is read-only")
        return self._lock

    def _require(self, agency_id: str) -> AgencyRecord:
        try:
            return self.agencies[agency_id]
        except KeyError:
            raise UnknownAgency(f"unknown agency {agency_id!r}") from None

    def _state(self):
        return (
            self.agencies,
            self.trust,
            self.mapping,
            self.orders,
            {o: {c: list(v) for c, v in r.items()} for o, r in self.repos.items()},
        )

    def __eq__(self, other):
        if not isinstance(other, TrustStore):
            return NotImplemented
        return self._state() == other._state()

    # -- agencies -----------------------------------------------------------

    def register_agency(self, agency_id: str, public_key: PublicKey | None = None, role: str = "agency") -> AgencyRecord:
        check_agency_id(agency_id)
        if role not in ROLES:
            raise StoreError(f"role must be one of {ROLES}, got {role!r}")
        with self._writable():
            if agency_id in self.agencies:
                raise DuplicateAgency(f"agency {agency_id!r} already registered")
            record = AgencyRecord(agency_id, role, public_key)
            self.agencies[agency_id] = record
            return record

    def upsert_agency(self, agency_id: str, public_key: PublicKey | None = None, role: str | None = None) -> AgencyRecord:
        with self._writable():
            current = self.agencies.get(agency_id)
            if current is None:
                return self.register_agency(agency_id, public_key, role or "agency")
            if role is not None and role not in ROLES:
                raise StoreError(f"role must be one of {ROLES}, got {role!r}")
            record = AgencyRecord(agency_id, role or current.role, public_key or current.public_key)
            self.agencies[agency_id] = record
            return record

    def set_public_key(self, agency_id: str, public_key: PublicKey) -> None:
        with self._writable():
            record = self._require(agency_id)
            self.agencies[agency_id] = AgencyRecord(record.id, record.role, public_key)

    def lookup(self, agency_id: str) -> AgencyRecord:
        return self._require(agency_id)

    def public_key(self, agency_id: str) -> PublicKey:
        key = self._require(agency_id).public_key
        if key is None:
            raise UnknownAgency(f"no public key provisioned for {agency_id!r}")
        return key

    # -- trust --------------------------------------------------------------

    def set_trust(self, record: TrustRecord) -> None:
        self._require(record.source)
        self._require(record.target)
        if not is_valid_category(record.category):
            raise StoreError(f"category {record.category!r} does not match NNAaa (e.g. 98Let)")
        with self._writable():
            self.trust[(record.source, record.target, record.category)] = record.level

    def get_trust(self, source: str, target: str, category: str) -> int:
        """Trust the target extends to the source for ``category``; 0 when unset."""
        self._require(source)
        self._require(target)
        return self.trust.get((source, target, category), 0)

    def trust_records(self) -> list[TrustRecord]:
        return [TrustRecord(s, t, c, lvl) for (s, t, c), lvl in sorted(self.trust.items())]

    # -- mapping functions --------------------------------------------------

    def set_mapping(self, spec: MappingFunctionSpec) -> None:
        for agency_id in spec.pair:
            self._require(agency_id)
        with self._writable():
            self.mapping[spec.pair] = spec

    def get_mapping(self, a: str, b: str) -> MappingFunctionSpec:
        try:
            return self.mapping[pair_key(a, b)]
        except KeyError:
            raise UnknownAgency(f"no mapping function shared by {a!r} and {b!r}") from None

    # -- selection orders ---------------------------------------------------

    def set_order(self, order: SelectionOrder) -> None:
        with self._writable():
            self.orders[order.category] = order

    def get_order(self, category: str) -> SelectionOrder:
        return self.orders.get(category) or SelectionOrder.identity(category)

    # -- repositories -------------------------------------------------------

    def set_items(self, owner: str, code: str, items) -> None:
        self._require(owner)
        _check_code(code)
        items = [_check_item(i) for i in items]
        with self._writable():
            self.repos.setdefault(owner, {})[code] = items

    def append_item(self, owner: str, code: str, item: str) -> None:
        self._require(owner)
        _check_code(code)
        _check_item(item)
        with self._writable():
            self.repos.setdefault(owner, {}).setdefault(code, []).append(item)

    def get_items(self, owner: str, code: str) -> list[str] | None:
        entry = self.repos.get(owner, {}).get(code)
        return None if entry is None else list(entry)

    def find_code(self, code: str) -> list[tuple[str, list[str]]]:
        """Every (owner, items) holding ``code``."""
        return [(owner, list(repo[code])) for owner, repo in sorted(self.repos.items()) if code in repo]

    # -- snapshots and persistence ------------------------------------------

    def copy(self) -> TrustStore:
        """Writable deep copy."""
        with self._lock:
            dup = TrustStore()
            dup.agencies = dict(self.agencies)
            dup.trust = dict(self.trust)
            dup.mapping = dict(self.mapping)
            dup.orders = dict(self.orders)
            dup.repos = copy.deepcopy(self.repos)
        return dup

    def snapshot_duplicate(self) -> TrustStore:
        dup = self.copy()
        dup.read_only = True
        return dup

    def dumps(self) -> str:
        lines = []
        for agency_id in sorted(self.agencies):
            rec = self.agencies[agency_id]
            key = rec.public_key.to_bytes().hex() if rec.public_key else "-"
            lines.append(f"AGENCY\t{rec.id}\t{rec.role}\t{key}")
        for (s, t, c), level in sorted(self.trust.items()):
            lines.append(f"TRUST\t{s}\t{t}\t{c}\t{level}")
        for (a, b), spec in sorted(self.mapping.items()):
            lines.append(f"MAPFN\t{a}\t{b}\t{spec.operators}")
        for category in sorted(self.orders):
            perm = ",".join(map(str, self.orders[category].permutation))
            lines.append(f"MAPORDER\t{category}\t{perm}")
        for owner in sorted(self.repos):
            for code in sorted(self.repos[owner]):
                lines.append(f"INFO\t{owner}\t{code}\t{','.join(self.repos[owner][code])}")
        return "".join(line + "\n" for line in lines)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(self.dumps(), encoding="utf-8")
        tmp.replace(path)

    @classmethod
    def loads(cls, text: str) -> TrustStore:
        store = cls()
        deferred = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.split("\t")
            kind = fields[0]
            try:
                if kind == "AGENCY":
                    _arity(fields, 4)
                    key = None if fields[3] == "-" else PublicKey.from_bytes(bytes.fromhex(fields[3]))
                    store.register_agency(fields[1], key, fields[2])
                elif kind in ("TRUST", "MAPFN", "INFO"):
                    deferred.append((lineno, fields))
                elif kind == "MAPORDER":
                    _arity(fields, 3)
                    perm = tuple(int(x) for x in fields[2].split(","))
                    if fields[1] in store.orders:
                        raise StoreError(f"duplicate order for {fields[1]}")
                    store.set_order(SelectionOrder(fields[1], perm))
                else:
                    raise StoreError(f"unknown record kind {kind!r}")
            except ParseError:
                raise
            except Exception as exc:
                raise ParseError(str(exc), lineno) from None
        # agencies may be declared after the records that reference them
        for lineno, fields in deferred:
            kind = fields[0]
            try:
                if kind == "TRUST":
                    _arity(fields, 5)
                    key = tuple(fields[1:4])
                    if key in store.trust:
                        raise StoreError(f"duplicate trust record {key}")
                    store.set_trust(TrustRecord(fields[1], fields[2], fields[3], int(fields[4])))
                elif kind == "MAPFN":
                    _arity(fields, 4)
                    spec = MappingFunctionSpec.between(fields[1], fields[2], fields[3])
                    if spec.pair in store.mapping:
                        raise StoreError(f"duplicate mapping function for {spec.pair}")
                    store.set_mapping(spec)
                else:
                    _arity(fields, 4)
                    if store.get_items(fields[1], fields[2]) is not None:
                        raise StoreError(f"duplicate INFO for {fields[1]} {fields[2]}")
                    items = fields[3].split(",") if fields[3] else []
                    store.set_items(fields[1], fields[2], items)
            except Exception as exc:
                raise ParseError(str(exc), lineno) from None
        return store

    @classmethod
    def load(cls, path: str | Path) -> TrustStore:
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def _arity(fields: list[str], n: int) -> None:
    if len(fields) != n:
        raise StoreError(f"{fields[0]} record needs {n - 1} fields, got {len(fields) - 1}")


def snapshot_duplicate(store: TrustStore) -> TrustStore:
    return store.snapshot_duplicate()


def load(path: str | Path) -> TrustStore:
    return TrustStore.load(path)


def save(store: TrustStore, path: str | Path) -> None:
    store.save(path)


def load_repo(store: TrustStore, path: str | Path) -> int:
    """Merge a file of INFO records into ``store``; unknown owners are registered."""
    count = 0
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.rstrip("\r").split("\t")
        try:
            if fields[0] != "INFO":
                raise StoreError(f"repository files hold only INFO records, found {fields[0]!r}")
            _arity(fields, 4)
            if fields[1] not in store.agencies:
                store.register_agency(fields[1])
            store.set_items(fields[1], fields[2], fields[3].split(",") if fields[3] else [])
        except Exception as exc:
            raise ParseError(str(exc), lineno) from None
        count += 1
    return count
