"""Noisy K4 race (jitter, seat dropout, occlusions) scored against the simulator truth."""

import argparse
import logging

from common import RunConfig, reconstruct, summarize


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default="noisy_k4")
    ap.add_argument("--seeds", type=int, nargs="+", default=[None])
    ap.add_argument("--mode", default="flow_noncausal")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)
    for seed in args.seeds:
        reports, res, elapsed = reconstruct(RunConfig(args.scenario, seed, args.mode))
        flagged = int(res.homographies.flagged.sum())
        print(f"seed {seed}: {elapsed:.1f} s, {flagged} flagged homographies")
        for line in summarize(reports):
            print("  " + line)


if __name__ == "__main__":
    main()
