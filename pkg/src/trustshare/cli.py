"""Command-line entry point: ``trustshare <verb> ...``.

Store-editing verbs work on the file named by ``--store`` (default
``$TRUSTSHARE_STORE`` or ``trustshare.store``). ``user`` and ``admin`` verbs
talk to a running ``serve`` process over its socket.

Errors go to stderr as one line, ``error<TAB><ErrorName><TAB><message>``, and
the exit status is 1.
"""

from __future__ import annotations

import argparse
import os
import random
import signal
import sys
from pathlib import Path

from . import crypto, gateway, sim
from .errors import ProtocolError, StoreError
from .store import MappingFunctionSpec, TrustRecord, TrustStore, load_repo

DEFAULT_SOCKET = "trustshare.sock"


def _store_path(args) -> Path:
    return Path(args.store or os.environ.get("TRUSTSHARE_STORE", "trustshare.store"))


def _load(args, create: bool = False) -> TrustStore:
    path = _store_path(args)
    if create and not path.exists():
        return TrustStore()
    return TrustStore.load(path)


def _password(args) -> str:
    password = args.password or os.environ.get("TRUSTSHARE_PASSWORD")
    if not password:
        raise StoreError("password required: pass --password or set TRUSTSHARE_PASSWORD")
    return password


def _print_reply(reply: gateway.Reply) -> None:
    reply.raise_for_error()
    for key, value in reply.fields.items():
        print(f"{key}\t{value}")


# -- verbs --------------------------------------------------------------------


def cmd_keygen(args):
    rng = random.Random(args.seed) if args.seed is not None else None
    pair = crypto.generate_keypair(args.bits, rng)
    pub, key = crypto.write_key_files(args.keys, args.agency, pair)
    if args.store:
        store = _load(args, create=True)
        store.upsert_agency(args.agency, pair.public_part)
        store.save(_store_path(args))
    print(f"{args.agency}\t{pub}\t{key}\t{pair.public_part.fingerprint()}")


def cmd_agency(args):
    store = _load(args, create=args.action == "add")
    if args.action == "list":
        for agency_id in sorted(store.agencies):
            rec = store.agencies[agency_id]
            fp = rec.public_key.fingerprint() if rec.public_key else "-"
            print(f"{rec.id}\t{rec.role}\t{fp}")
        return
    if not args.id:
        raise StoreError("agency add needs an id")
    key = crypto.PublicKey.from_bytes(Path(args.pubkey).read_bytes()) if args.pubkey else None
    store.register_agency(args.id, key, args.role)
    store.save(_store_path(args))


def cmd_trust(args):
    store = _load(args)
    store.set_trust(TrustRecord(args.source, args.target, args.category, args.level))
    store.save(_store_path(args))


def cmd_mapfn(args):
    store = _load(args)
    store.set_mapping(MappingFunctionSpec.between(args.a, args.b, args.operators))
    store.save(_store_path(args))


def cmd_repo(args):
    """Merge INFO records from another file into the store."""
    store = _load(args, create=True)
    count = load_repo(store, args.file)
    store.save(_store_path(args))
    print(f"loaded\t{count}")


def _keys_from_dir(directory, agency_ids):
    if not directory:
        return {}
    keys = {}
    for agency_id in agency_ids:
        pub, _ = crypto.key_paths(directory, agency_id)
        if pub.exists():
            keys[agency_id] = crypto.read_key_files(directory, agency_id)
    return keys


def cmd_scenario(args):
    store = _load(args)
    scenario = sim.Scenario.load(args.file)
    keys = _keys_from_dir(args.keys, scenario.participants())
    transcript = sim.run_scenario(store, scenario, transport=args.transport, seed=args.seed, keys=keys,
                                  set_size=args.set_size, parallel=args.parallel)
    text = transcript.to_tsv()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0 if all(e.ok for e in transcript) else 3


def cmd_table1(args):
    store = TrustStore.load(args.store) if args.store else None
    transcript, checks = sim.run_table1(store, seed=args.seed, transport=args.transport)
    print("#row\tsource\ttarget\tcode\texpected\tshared\tresult")
    for c in checks:
        status = "match" if c.match else f"MISMATCH{'(' + c.error + ')' if c.error else ''}"
        print(f"{c.row}\t{c.source}\t{c.target}\t{c.code}\t{{{','.join(c.expected)}}}\t{{{','.join(c.shared)}}}\t{status}")
    matched = sum(c.match for c in checks)
    print(f"# {matched}/{len(checks)} rows reproduced (row 2 uses the corrected item 30)")
    return 0 if matched == len(checks) else 3


def cmd_serve(args):
    store = _load(args)
    gw = gateway.Gateway(store, args.agency, _store_path(args))
    password = gw.create_admin(args.admin, os.environ.get("TRUSTSHARE_ADMIN_PASSWORD"))
    server = gateway.GatewayServer(args.socket, gw)
    print(f"serving\t{args.socket}\tagency={args.agency}", flush=True)
    if not os.environ.get("TRUSTSHARE_ADMIN_PASSWORD"):
        print(f"admin\t{args.admin}\t{password}", flush=True)
    signal.signal(signal.SIGTERM, _interrupt)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


def _interrupt(signum, frame):
    raise KeyboardInterrupt


def cmd_user(args):
    if args.action == "register":
        reply = gateway.request(args.socket, "REGISTER", args.name)
    elif args.action == "approve":
        reply = gateway.request(args.socket, "APPROVE", args.admin, _password(args), args.name)
    else:
        reply = gateway.request(args.socket, "QUERY", args.name, _password(args), args.code)
    _print_reply(reply)


def cmd_admin(args):
    password = _password(args)
    if args.action == "agency":
        fields = ["AGENCY", args.admin, password, args.id, args.role]
        if args.pubkey:
            fields.append(Path(args.pubkey).read_bytes().hex())
    elif args.action == "terrorist":
        fields = ["TERRORIST", args.admin, password, args.code, args.items]
    else:
        fields = ["ACTIVITY", args.admin, password, args.code, args.item]
    _print_reply(gateway.request(args.socket, *fields))


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trustshare", description=__doc__.splitlines()[0])
    p.add_argument("--store", help="trust store file")
    sub = p.add_subparsers(dest="verb", required=True)

    s = sub.add_parser("keygen", help="provision a keypair for an agency")
    s.add_argument("agency")
    s.add_argument("--keys", default="keys", help="directory for <agency>.pub / <agency>.key")
    s.add_argument("--bits", type=int, default=crypto.MIN_KEY_BITS)
    s.add_argument("--seed", type=int)
    s.set_defaults(fn=cmd_keygen)

    s = sub.add_parser("agency")
    s.add_argument("action", choices=["add", "list"])
    s.add_argument("id", nargs="?")
    s.add_argument("--role", default="agency", choices=["agency", "general"])
    s.add_argument("--pubkey", help="public key file written by keygen")
    s.set_defaults(fn=cmd_agency)

    s = sub.add_parser("trust")
    s.add_argument("action", choices=["set"])
    s.add_argument("source")
    s.add_argument("target")
    s.add_argument("category")
    s.add_argument("level", type=int)
    s.set_defaults(fn=cmd_trust)

    s = sub.add_parser("mapfn")
    s.add_argument("action", choices=["set"])
    s.add_argument("a")
    s.add_argument("b")
    s.add_argument("operators", help="e.g. '+*-/'")
    s.set_defaults(fn=cmd_mapfn)

    s = sub.add_parser("repo")
    s.add_argument("action", choices=["load"])
    s.add_argument("file", help="file of INFO records")
    s.set_defaults(fn=cmd_repo)

    s = sub.add_parser("scenario")
    s.add_argument("action", choices=["run"])
    s.add_argument("file")
    s.add_argument("--transport", default="in-process", choices=sim.TRANSPORTS)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--keys", help="key directory; missing keys are provisioned from the seed")
    s.add_argument("--set-size", type=int, default=sim.DEFAULT_SET_SIZE)
    s.add_argument("--parallel", type=int, default=1)
    s.add_argument("--out", help="write the transcript here instead of stdout")
    s.set_defaults(fn=cmd_scenario)

    s = sub.add_parser("table1", help="run the built-in ten-exchange experiment")
    s.add_argument("--transport", default="in-process", choices=sim.TRANSPORTS)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_table1)

    s = sub.add_parser("serve", help="run the gateway on a Unix socket")
    s.add_argument("--socket", default=DEFAULT_SOCKET)
    s.add_argument("--agency", required=True, help="agency whose repository the gateway exposes")
    s.add_argument("--admin", default="admin")
    s.set_defaults(fn=cmd_serve)

    s = sub.add_parser("user")
    s.add_argument("action", choices=["register", "approve", "query"])
    s.add_argument("name")
    s.add_argument("code", nargs="?", help="terrorist code (query)")
    s.add_argument("--admin", help="approving administrator (approve)")
    s.add_argument("--password")
    s.add_argument("--socket", default=DEFAULT_SOCKET)
    s.set_defaults(fn=cmd_user)

    s = sub.add_parser("admin")
    sub_admin = s.add_subparsers(dest="action", required=True)
    a = sub_admin.add_parser("agency")
    a.add_argument("id")
    a.add_argument("--role", default="agency", choices=["agency", "general"])
    a.add_argument("--pubkey")
    a = sub_admin.add_parser("terrorist")
    a.add_argument("code")
    a.add_argument("items", help="comma-separated items")
    a = sub_admin.add_parser("activity")
    a.add_argument("code")
    a.add_argument("item")
    for a in sub_admin.choices.values():
        a.add_argument("--admin", default="admin")
        a.add_argument("--password")
        a.add_argument("--socket", default=DEFAULT_SOCKET)
    s.set_defaults(fn=cmd_admin)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verb == "user":
        if args.action == "approve" and not args.admin:
            parser.error("user approve needs --admin")
        if args.action == "query" and not args.code:
            parser.error("user query needs a terrorist code")
    try:
        return args.fn(args) or 0
    except (ProtocolError, ValueError, OSError) as exc:
        message = str(exc).replace("\n", " ").replace("\t", " ")
        print(f"error\t{type(exc).__name__}\t{message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
