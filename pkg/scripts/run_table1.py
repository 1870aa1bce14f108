#!/usr/bin/env python3
"""Reproduce the ten-exchange table over both transports and several seeds."""

import argparse
import time

from trustshare import sim


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--transcript", help="write the seed-0 in-process transcript here")
    args = p.parse_args()

    failures = 0
    for transport in sim.TRANSPORTS:
        for seed in range(args.seeds):
            started = time.perf_counter()
            transcript, checks = sim.run_table1(seed=seed, transport=transport)
            matched = sum(c.match for c in checks)
            failures += len(checks) - matched
            print(f"{transport}\tseed={seed}\t{matched}/{len(checks)}\t{time.perf_counter() - started:.2f}s")
            if args.transcript and seed == 0 and transport == "in-process":
                with open(args.transcript, "w") as fh:
                    fh.write(transcript.to_tsv())
    raise SystemExit(1 if failures else 0)


if __name__ == "__main__":
    main()
