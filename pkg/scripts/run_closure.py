"""Noise-free K1 and K4 races: reconstruction should reproduce the scripted profiles."""

import argparse
import logging

import numpy as np

from common import RunConfig, reconstruct, summarize


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenarios", nargs="+", default=["closure_k1", "closure_k4"])
    ap.add_argument("--mode", default="flow_noncausal")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)
    for name in args.scenarios:
        reports, _, elapsed = reconstruct(RunConfig(name, mode=args.mode))
        print(f"{name} ({elapsed:.1f} s)")
        for line in summarize(reports):
            print("  " + line)
        for lane, rep in reports.items():
            err = np.abs(rep["stroke_rate"].segment_errors)
            print(f"  lane {lane}: max stroke-rate segment error {np.nanmax(err):.2f} spm")


if __name__ == "__main__":
    main()
