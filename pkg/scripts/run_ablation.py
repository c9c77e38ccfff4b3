"""Gap-filling ablation: RMSE of each fill mode over several seeds of the K2/K4 scenario."""

import argparse
import logging

import numpy as np

from common import load_scenario
from racerecon.pipeline import run_ablation

ORDER = ("flow_noncausal", "flow_causal", "ordering", "linear")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default="ablation_k2k4")
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args()
    logging.basicConfig(level=logging.ERROR)
    sc = load_scenario(args.scenario)
    print("seed  " + "  ".join(f"{m:>14s}" for m in ORDER) + "  ordered")
    held = 0
    for seed in range(args.seeds):
        rows = run_ablation(sc, seed)
        mean = [np.mean([r.rmse for r in rows if r.mode == m]) for m in ORDER]
        ok = all(a <= b for a, b in zip(mean, mean[1:]))
        held += ok
        print(f"{seed:4d}  " + "  ".join(f"{x:14.4f}" for x in mean) + f"  {ok}")
    print(f"ordering held in {held}/{args.seeds} seeds")


if __name__ == "__main__":
    main()
