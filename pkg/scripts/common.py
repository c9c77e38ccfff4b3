"""Helpers shared by the scripts: scenario loading and a single reconstruction run."""

import json
import time
from dataclasses import dataclass
from pathlib import Path

from racerecon.io import records_from_objects
from racerecon.pipeline import ReconOptions, compare, run_pipeline
from racerecon.simulator import Scenario, generate, truth_profiles

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def load_scenario(name_or_path) -> Scenario:
    p = Path(name_or_path)
    if not p.is_file():
        p = SCENARIOS / f"{name_or_path}.json"
    return Scenario.from_json(json.loads(p.read_text()))


@dataclass
class RunConfig:
    scenario: str
    seed: int | None = None
    mode: str = "flow_noncausal"
    rasters: bool = True


def reconstruct(cfg: RunConfig):
    """Simulate, reconstruct and score; returns (per-lane reports, result, seconds)."""
    sc = load_scenario(cfg.scenario)
    t0 = time.perf_counter()
    stream, ras, gt = generate(sc, cfg.seed)
    res = run_pipeline(sc.course, records_from_objects(stream), gt.anchor_correspondences, gt.anchor_frame,
                       ras if cfg.rasters else None, ReconOptions(mode=cfg.mode))
    elapsed = time.perf_counter() - t0
    return compare(res, truth_profiles(gt, sc.course)), res, elapsed


def summarize(reports: dict) -> list[str]:
    out = []
    for lane, rep in sorted(reports.items()):
        v = rep["velocity"]
        line = f"lane {lane}: velocity RMSE {v.rmse:.4f} m/s, RRMSE {v.rrmse:.4f}, rho {v.spearman_rho:.3f}"
        if "stroke_rate" in rep:
            s = rep["stroke_rate"]
            line += f"; stroke rate RMSE {s.rmse:.2f} spm, rho {s.spearman_rho:.3f}"
        out.append(line)
    return out
