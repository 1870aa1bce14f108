#!/usr/bin/env python3
"""Flip single bytes of every table message and tabulate which check fires.

Each trial reruns the table scenario with one ADVERSARY rule, so the counts
show how tampering at each position is caught (envelope, framing, signature,
digest, mapping value or nonce).
"""

import argparse
import collections
import random

from trustshare import sim, source, table1, target


def message_lengths(store, scenario, keys, seed):
    """Byte length of every message of the clean run, in scenario message order."""
    net = sim.Network(store, keys, seed)
    lengths = []
    for i, ex in enumerate(scenario.exchanges):
        rng = sim.exchange_rng(seed, i, "source")
        s_req, _ = source.build_request(net.identity(ex.source), net.snapshot, ex.target,
                                        target.query_text(ex.code), sim.DEFAULT_SET_SIZE, rng)
        lengths += [len(s_req), len(net.handle(ex.target, i, s_req))]
    return lengths


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    store = table1.load_store()
    base = sim.Scenario.table1()
    keys = sim.provision_keys(base.participants(), args.seed)
    clean = sim.run_scenario(store, base, seed=args.seed, keys=keys)
    assert all(e.ok for e in clean)
    lengths = message_lengths(store, base, keys, args.seed)

    rng = random.Random(args.seed)
    counts = {"request": collections.Counter(), "response": collections.Counter()}
    for _ in range(args.trials):
        message = rng.randrange(2 * len(base.exchanges))
        scenario = sim.Scenario(base.agencies, base.exchanges,
                                sim.Mutation(message, rng.randrange(lengths[message]), rng.randrange(1, 256)))
        record = sim.run_scenario(store, scenario, seed=args.seed, keys=keys).entries[message // 2]
        kind = "request" if message % 2 == 0 else "response"
        counts[kind][record.error or "ACCEPTED"] += 1

    for kind, counter in counts.items():
        total = sum(counter.values())
        print(f"{kind} mutations: {total}")
        for name, n in counter.most_common():
            print(f"  {name:<18}{n:>6}")
    silent = counts["request"]["ACCEPTED"] + counts["response"]["ACCEPTED"]
    print(f"silent acceptances: {silent}")
    raise SystemExit(1 if silent else 0)


if __name__ == "__main__":
    main()
