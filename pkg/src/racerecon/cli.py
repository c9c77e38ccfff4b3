"""Command-line entry point: recon, simulate, evaluate, ablate."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as rio
from .course import load_course
from .errors import ConfigError, DataError, NumericError, ReconError
from .kinematics import Profile
from .localization import MODES
from .metrics import agreement
from .pipeline import ReconOptions, compare, run_ablation, run_pipeline
from .simulator import RasterSequence, Scenario, generate, truth_profiles
from .svg import bland_altman_plot, line_plot
from .tracking import PGMDirectory, write_pgm

log = logging.getLogger("racerecon")

EXIT_CODES = ((ConfigError, 2), (DataError, 3), (NumericError, 4))


def _mode(s: str) -> str:
    m = s.replace("-", "_")
    if m not in MODES:
        raise argparse.ArgumentTypeError(f"unknown mode {s!r}")
    return m


def _load_scenario(path) -> Scenario:
    try:
        return Scenario.from_json(json.loads(Path(path).read_text()))
    except FileNotFoundError:
        raise ConfigError(f"scenario file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e.msg})") from None


def _open_rasters(path):
    """A PGM directory, or a scenario JSON whose frames are re-rendered."""
    p = Path(path)
    if p.is_file() and p.suffix == ".json":
        _, rasters, _ = generate(_load_scenario(p))
        return rasters
    return PGMDirectory(p)


def _truth_from_json(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (FileNotFoundError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read ground truth {path}: {e}") from None
    if "profiles" not in data:
        raise DataError(f"{path} carries no 'profiles' section")
    out = {}
    for lane, d in data["profiles"].items():
        c = np.array(d["segment_center_m"], dtype=float)
        ones = np.ones(len(c), dtype=int)
        out[int(lane)] = (Profile(c, np.array(d["velocity_mps"], dtype=float), ones, "velocity_mps"),
                          Profile(c, np.array(d["stroke_rate_spm"], dtype=float), ones, "stroke_rate_spm"))
    return out


def profiles_json(truth: dict) -> dict:
    return {str(lane): {"segment_center_m": v.centers.tolist(), "velocity_mps": v.values.tolist(),
                        "stroke_rate_spm": s.values.tolist()} for lane, (v, s) in truth.items()}


def write_recon_outputs(result, out: Path, truth: dict | None = None) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    reports = compare(result, truth) if truth else {}
    hs = result.homographies
    summary = {"mode": result.options.mode, "stroke_signal": result.options.stroke,
               "anchor_frame": hs.anchor_frame, "frames": len(result.times),
               "flagged_frames": int(hs.flagged.sum()), "lanes": {}}
    for lane, lr in sorted(result.lanes.items()):
        tag = f"lane{lane}"
        tr = lr.track
        vp = lr.velocity_profile
        extra = {}
        if lane in reports:
            extra = {"truth_velocity_mps": truth[lane][0].values, "error_mps": vp.values - truth[lane][0].values}
        rio.write_profile_csv(out / f"{tag}_velocity.csv", vp, extra)
        series = [(vp.centers, vp.values, "reconstructed")]
        if lane in reports:
            series.append((truth[lane][0].centers, truth[lane][0].values, "truth"))
        line_plot(out / f"{tag}_velocity.svg", series, f"Lane {lane} ({tr.boat_class.name}) velocity",
                  "distance to finish (m)", "velocity (m/s)")
        with open(out / f"{tag}_track.csv", "w") as f:
            f.write("frame,t_s,x_m,y_m,velocity_mps,source\n")
            for i in range(len(tr)):
                f.write(f"{tr.frames[i]},{tr.times[i]:.6f},{tr.positions[i, 0]:.4f},{tr.positions[i, 1]:.4f},"
                        f"{lr.velocity.values[i]:.4f},{tr.source[i]}\n")
        entry = {"boat_class": tr.boat_class.name,
                 "offsets_m": lr.track.calibration.offsets.tolist(),
                 "calibration_frames": [int(f) for f in lr.track.calibration.source_frames],
                 "sources": {str(k): int(v) for k, v in zip(*np.unique(tr.source.astype(str), return_counts=True))}}
        if lr.stroke_profile is not None:
            sp = lr.stroke_profile.segments
            extra = {}
            if lane in reports:
                extra = {"truth_stroke_rate_spm": truth[lane][1].values,
                         "error_spm": sp.values - truth[lane][1].values}
            rio.write_profile_csv(out / f"{tag}_stroke_rate.csv", sp, extra)
            with open(out / f"{tag}_peaks.csv", "w") as f:
                f.write("t_s\n" + "".join(f"{t:.4f}\n" for t in lr.peaks.times))
            series = [(sp.centers, sp.values, "reconstructed")]
            if lane in reports:
                series.append((truth[lane][1].centers, truth[lane][1].values, "truth"))
            line_plot(out / f"{tag}_stroke_rate.svg", series, f"Lane {lane} stroke rate",
                      "distance to finish (m)", "stroke rate (1/min)")
            entry["peaks"] = len(lr.peaks)
        if lane in reports:
            entry["agreement"] = {k: r.as_dict() for k, r in reports[lane].items()}
            bland_altman_plot(out / f"{tag}_bland_altman.svg", vp.values, truth[lane][0].values,
                              reports[lane]["velocity"].bland_altman, f"Lane {lane} velocity", "(m/s)")
        summary["lanes"][str(lane)] = entry
    rio.write_json(out / "report.json", summary)
    return summary


def cmd_recon(a) -> int:
    spec = load_course(a.course)
    records = rio.read_stream(a.stream)
    anchors, anchor_frame = rio.read_anchors(a.anchors)
    if a.anchor_frame is not None:
        anchor_frame = a.anchor_frame
    if anchor_frame is None:
        raise ConfigError("anchor frame unknown: add 'frame' to the anchors file or pass --anchor-frame")
    rasters = _open_rasters(a.rasters) if a.rasters else None
    mode = a.mode or ("flow_noncausal" if rasters is not None else "linear")
    opt = ReconOptions(mode=mode, stroke=a.stroke)
    result = run_pipeline(spec, records, anchors, anchor_frame, rasters, opt)
    truth = _truth_from_json(a.truth) if a.truth else None
    summary = write_recon_outputs(result, Path(a.out), truth)
    for lane, e in summary["lanes"].items():
        line = f"lane {lane} {e['boat_class']}: offsets {np.round(e['offsets_m'], 3).tolist()}"
        if "agreement" in e:
            v = e["agreement"]["velocity"]
            line += f", velocity RMSE {v['rmse']:.4f} m/s RRMSE {v['rrmse']:.4f} rho {v['spearman_rho']:.3f}"
        print(line)
    return 0


def cmd_simulate(a) -> int:
    sc = _load_scenario(a.script)
    stream, rasters, gt = generate(sc, a.seed)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    rio.write_stream(out / "stream.jsonl", stream)
    rio.write_anchors(out / "anchors.json", gt.anchor_correspondences, gt.anchor_frame)
    rio.write_json(out / "course.json", sc.course.to_json())
    scen = sc.to_json()
    if a.seed is not None:
        scen["race"]["seed"] = a.seed
    rio.write_json(out / "scenario.json", scen)
    truth = truth_profiles(gt, sc.course)
    rio.write_json(out / "ground_truth.json", gt.to_json(profiles_json(truth)))
    for lane, (v, s) in truth.items():
        rio.write_profile_csv(out / f"truth_lane{lane}_velocity.csv", v)
        rio.write_profile_csv(out / f"truth_lane{lane}_stroke_rate.csv", s)
    if a.rasters:
        d = out / "rasters"
        d.mkdir(exist_ok=True)
        for i in range(len(rasters)):
            write_pgm(d / f"frame_{i:06d}.pgm", rasters[i])
    print(f"{len(stream)} frames, anchor frame {gt.anchor_frame}, lanes {sorted(truth)} -> {out}")
    return 0


def cmd_evaluate(a) -> int:
    pred, truth = rio.read_profile_csv(a.pred), rio.read_profile_csv(a.truth)
    if len(pred) != len(truth) or not np.allclose(pred.centers, truth.centers):
        raise DataError("prediction and truth segments differ")
    rep = agreement(pred, truth)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    rio.write_json(out / "agreement.json", rep.as_dict())
    bland_altman_plot(out / "bland_altman.svg", pred.values, truth.values, rep.bland_altman)
    line_plot(out / "profiles.svg", [(pred.centers, pred.values, "prediction"), (truth.centers, truth.values, "truth")],
              pred.quantity, "distance to finish (m)", pred.quantity)
    ba = rep.bland_altman
    print(f"RMSE {rep.rmse:.4f}  RRMSE {rep.rrmse:.4f}  rho {rep.spearman_rho:.3f}  "
          f"bias {ba.mean_diff:.4f} LoA [{ba.lo:.4f}, {ba.hi:.4f}]")
    return 0


def cmd_ablate(a) -> int:
    sc = _load_scenario(a.scenario)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    base = sc.race.seed
    rows = []
    for k in range(a.seeds):
        for r in run_ablation(sc, base + k):
            rows.append((base + k, r))
    with open(out / "ablation.csv", "w") as f:
        f.write("seed,lane,boat_class,mode,rmse_mps,rrmse,spearman_rho\n")
        for seed, r in rows:
            f.write(f"{seed},{r.lane},{r.boat_class},{r.mode},{r.rmse:.6f},{r.rrmse:.6f},{r.spearman_rho:.6f}\n")
    lines = ["| Method | RMSE (m/s) | RRMSE | Spearman rho |", "|---|---|---|---|"]
    names = {"linear": "Linear interpolation", "ordering": "Flow athlete ordering",
             "flow_causal": "Flow interpolation, causal", "flow_noncausal": "Flow interpolation, non-causal"}
    for m in MODES:
        sel = [r for _, r in rows if r.mode == m]
        cols = [np.array([getattr(r, key) for r in sel]) for key in ("rmse", "rrmse", "spearman_rho")]
        lines.append(f"| {names[m]} | " + " | ".join(f"{c.mean():.3f} ± {c.std():.3f}" for c in cols) + " |")
    table = "\n".join(lines)
    (out / "ablation.md").write_text(table + "\n")
    print(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="racerecon", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("recon", help="reconstruct velocity and stroke-rate profiles")
    r.add_argument("--course", required=True)
    r.add_argument("--stream", required=True)
    r.add_argument("--anchors", required=True)
    r.add_argument("--rasters", help="directory of frame_NNNNNN.pgm, or a scenario JSON to re-render")
    r.add_argument("--mode", type=_mode, help="linear | ordering | flow-causal | flow-noncausal")
    r.add_argument("--stroke", choices=("pose", "bbox"), default="pose")
    r.add_argument("--anchor-frame", type=int)
    r.add_argument("--truth", help="ground_truth.json with a profiles section")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_recon)

    s = sub.add_parser("simulate", help="generate a synthetic race")
    s.add_argument("--script", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--rasters", action="store_true", help="also write every frame as PGM (large)")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("evaluate", help="compare a profile CSV with a reference CSV")
    e.add_argument("--pred", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("ablate", help="compare the four gap-filling modes on a scenario")
    b.add_argument("--scenario", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--seeds", type=int, default=1)
    b.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ReconError as e:
        for cls, code in EXIT_CODES:
            if isinstance(e, cls):
                print(f"error: {e}", file=sys.stderr)
                return code
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
