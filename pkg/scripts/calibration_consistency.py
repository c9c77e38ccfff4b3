"""Seat-offset calibration of the same K4 from two independently simulated recordings."""

import argparse
import logging

import numpy as np

from common import RunConfig, reconstruct
from racerecon.metrics import offset_consistency


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default="calibration_k4")
    ap.add_argument("--seeds", type=int, nargs=2, default=[0, 1])
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)
    cals = []
    for seed in args.seeds:
        _, res, _ = reconstruct(RunConfig(args.scenario, seed, "linear", rasters=False))
        (cal,) = res.calibrations.values()
        cals.append(cal)
        print(f"seed {seed}: offsets {np.round(cal.offsets, 3).tolist()}")
    print(f"offset consistency {offset_consistency(*cals):.4f}")


if __name__ == "__main__":
    main()
