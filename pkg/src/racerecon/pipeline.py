"""End-to-end reconstruction: detections -> homographies -> tracks -> profiles."""

from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .course import CourseSpec, assign_lane
from .errors import ConfigError, NoCompleteFrames, OutOfFrame, ReconError
from .geometry import apply
from .io import records_from_objects
from .kinematics import Profile, TimeSeries, design_fir, segment_profile, smooth_fir, velocity
from .localization import (
    MODES,
    AthleteObservation,
    BoatTrack,
    OffsetCalibration,
    TipObservation,
    athlete_image_position,
    boat_class,
    build_track,
    calibrate_offsets,
    fill_tracks,
    initial_tip_estimate,
    sort_seats,
    tip_roi,
)
from .metrics import AgreementReport, agreement
from .strokerate import (
    RateSignal,
    StrokePeaks,
    StrokeRateProfile,
    detect_and_merge_peaks,
    motion_signal_bbox,
    motion_signal_pose,
    rate_from_peaks,
    stroke_profile,
)
from .simulator import generate, truth_profiles
from .tracking import HomographySequence, PropagationParams, propagate

log = logging.getLogger(__name__)


@dataclass
class ReconOptions:
    mode: str = "flow_noncausal"
    stroke: str = "pose"  # pose | bbox
    extra_modes: tuple = ()  # further fill modes to evaluate alongside ``mode``
    calibration_frames: int = 5
    roi_size: int = 150
    snap_radius: float = 8.0
    fir_taps: int = 25
    fir_cutoff_hz: float = 1.5
    image_size: tuple = (3840, 2160)  # used when no rasters are given
    propagation: PropagationParams = field(default_factory=PropagationParams)


@dataclass
class LaneResult:
    lane: int
    track: BoatTrack
    position: TimeSeries  # smoothed along-track position
    velocity: TimeSeries
    velocity_profile: Profile
    peaks: StrokePeaks | None = None
    rate: RateSignal | None = None
    stroke_profile: StrokeRateProfile | None = None


@dataclass
class ReconResult:
    homographies: HomographySequence
    lanes: dict  # lane -> LaneResult for options.mode
    by_mode: dict  # mode -> {lane: LaneResult} (kinematics only for extra modes)
    calibrations: dict  # lane -> OffsetCalibration
    times: np.ndarray
    options: ReconOptions


@contextmanager
def lane_context(lane: int):
    """Prefix errors raised inside with the lane they concern."""
    try:
        yield
    except ReconError as e:
        raise type(e)(f"lane {lane}: {e}") from e


class _Offset:
    """Index rasters by stream position instead of frame number."""

    def __init__(self, rasters, first: int):
        self.rasters, self.first = rasters, first

    def __getitem__(self, i):
        return self.rasters[i + self.first]


def _lane_detections(spec: CourseSpec, records, hseq):
    """Per lane and stream position: athlete detections.

    Frames whose homography is flagged contribute nothing; their positions
    are filled like any other gap.
    """
    out = {lane: [[] for _ in records] for lane in spec.boats}
    for i, rec in enumerate(records):
        athletes = rec.of_class("athlete")
        if not athletes or hseq.flagged[i]:
            continue
        img = np.array([athlete_image_position(d) for d in athletes])
        world = apply(hseq.image_to_world(i), img)
        for d, p in zip(athletes, world):
            lane = assign_lane(spec, p)
            if lane in out:
                out[lane][i].append(d)
    return out


def calibrate_lane(lane, cls, dets, hseq, anchor: int, image_size, count: int = 5,
                   roi_size: int = 150) -> OffsetCalibration:
    """Offsets from the complete frames with a boat tip closest to the anchor.

    A tip only counts when it falls in the search window around the
    class-default estimate. Without any usable tip the default offset is
    taken as the tip, which leaves the calibration at its initial guess.
    """
    complete = [i for i, d in enumerate(dets) if len(d) == cls.n]
    if not complete:
        raise NoCompleteFrames(f"no frame with all {cls.n} athletes detected")
    complete.sort(key=lambda i: (abs(i - anchor), i))
    frames, tips = [], []
    fallback = []
    for i in complete:
        ds = dets[i]
        img = np.array([athlete_image_position(d) for d in ds])
        world = apply(hseq.image_to_world(i), img)
        order = sort_seats(world)
        obs = [AthleteObservation(img[k], world[k], lane, s + 1) for s, k in enumerate(order)]
        if len(fallback) < count:
            fallback.append((i, obs))
        tip = next((d.tip for d in ds if d.tip is not None), None)
        if tip is None:
            continue
        est = initial_tip_estimate(obs, cls)
        try:
            l, t, w, h = tip_roi(hseq[i], est, image_size, roi_size)
        except OutOfFrame:
            continue
        if not (l <= tip[0] < l + w and t <= tip[1] < t + h):
            log.warning("lane %d frame %d: tip outside the search window, skipped", lane, i)
            continue
        frames.append(obs)
        tips.append(TipObservation(i, tuple(tip)))
        if len(frames) == count:
            break
    if not frames:
        log.warning("lane %d: no tip observations, using the class default offset", lane)
        for i, obs in fallback:
            frames.append(obs)
            tips.append(TipObservation(i, world=tuple(initial_tip_estimate(obs, cls)), provenance="default"))
    return calibrate_offsets(frames, tips, hseq, cls)


def _kinematics(track: BoatTrack, spec: CourseSpec, taps):
    x = TimeSeries(track.times, track.positions[:, 0])
    xs = smooth_fir(x, taps)
    v = velocity(xs)
    return xs, v, segment_profile(v, xs, spec)


def _stroke_athletes(track: BoatTrack, dets):
    """Per frame the detection of the front-most seat that was actually detected."""
    chosen, selection = [], np.zeros(len(track), dtype=int)
    for i, ds in enumerate(dets):
        if not ds:
            chosen.append(None)
            continue
        img = np.array([athlete_image_position(d) for d in ds])
        pick, seat = None, 0
        if track.seat_source is not None:
            for k in np.flatnonzero(track.seat_source[i] == 1):
                dist = np.hypot(*(img - track.seats[i, k]).T)
                j = int(np.argmin(dist))
                if dist[j] < 1e-6:
                    pick, seat = j, k + 1
                    break
        if pick is None:
            pick = int(np.argmin(img[:, 1]))  # farthest from the camera
        chosen.append(ds[pick])
        selection[i] = seat
    return chosen, selection


def _stroke(track, dets, spec, rasters, position: TimeSeries, how: str):
    chosen, selection = _stroke_athletes(track, dets)
    t = track.times
    if how == "pose":
        kps = [None if d is None or d.keypoints is None else (d.keypoints["shoulder"], d.keypoints["wrist"])
               for d in chosen]
        widths = [None if d is None else d.bbox[2] for d in chosen]
        sig = motion_signal_pose(t, kps, widths, selection)
    elif how == "bbox":
        bbs = [None if d is None else d.bbox for d in chosen]
        sig = motion_signal_bbox(rasters, np.arange(len(t)), t, bbs, selection)
    else:
        raise ConfigError(f"unknown stroke signal {how!r}; expected pose or bbox")
    peaks = detect_and_merge_peaks(sig, track.boat_class.discipline)
    rate = rate_from_peaks(peaks, 1.0 / sig.series.dt, filled=sig.filled)
    return peaks, rate, stroke_profile(rate, t, position.values, spec)


def run_pipeline(spec: CourseSpec, records, anchors, anchor_frame: int, rasters=None,
                 options: ReconOptions | None = None) -> ReconResult:
    """Reconstruct every lane declared in ``spec.boats``.

    ``records`` are FrameRecords with consecutive frame numbers; rasters
    (if any) are indexed by frame number.
    """
    opt = options or ReconOptions()
    if not spec.boats:
        raise ConfigError("course config declares no boats; add a {lane: class} 'boats' mapping")
    modes = [opt.mode] + [m for m in opt.extra_modes if m != opt.mode]
    for m in modes:
        if m not in MODES:
            raise ConfigError(f"unknown fill mode {m!r}; expected one of {MODES}")
    first = records[0].frame
    anchor = anchor_frame - first
    if not 0 <= anchor < len(records):
        raise ConfigError(f"anchor frame {anchor_frame} is not in the stream")
    ras = None if rasters is None else (_Offset(rasters, first) if first else rasters)
    if ras is not None:
        h, w = ras[anchor].intensity.shape
        image_size = (w, h)
    else:
        image_size = tuple(opt.image_size)
    times = np.array([r.t_s for r in records])

    hseq = propagate(ras, anchor, anchors, spec, [r.buoy_centers() for r in records],
                     image_size, opt.propagation, frame_count=len(records))
    if hseq.flagged.any():
        log.warning("%d of %d frames have an unreliable homography", int(hseq.flagged.sum()), len(records))

    per_lane = _lane_detections(spec, records, hseq)
    tracks, cals = [], {}
    for lane in sorted(spec.boats):
        cls = boat_class(spec.boats[lane])
        with lane_context(lane):
            cal = calibrate_lane(lane, cls, per_lane[lane], hseq, anchor, image_size,
                                 opt.calibration_frames, opt.roi_size)
            cals[lane] = cal
            img = [np.array([athlete_image_position(d) for d in ds]).reshape(-1, 2) for ds in per_lane[lane]]
            tracks.append(build_track(lane, cls, np.arange(len(records)), times, img, hseq, cal))

    filled = fill_tracks(tracks, modes, ras, hseq, opt.snap_radius, opt.propagation.lk)
    taps = design_fir(opt.fir_taps, opt.fir_cutoff_hz, 1.0 / np.median(np.diff(times)))
    by_mode = {}
    for m in modes:
        res = {}
        for tr in filled[m]:
            with lane_context(tr.lane):
                xs, v, prof = _kinematics(tr, spec, taps)
                lr = LaneResult(tr.lane, tr, xs, v, prof)
                if m == opt.mode:
                    lr.peaks, lr.rate, lr.stroke_profile = _stroke(tr, per_lane[tr.lane], spec, ras, xs, opt.stroke)
                res[tr.lane] = lr
        by_mode[m] = res
    return ReconResult(hseq, by_mode[opt.mode], by_mode, cals, times, opt)


def compare(result: ReconResult, truth: dict, mode: str | None = None) -> dict:
    """Agreement reports per lane against {lane: (velocity Profile, stroke Profile)}."""
    lanes = result.by_mode[mode or result.options.mode]
    out = {}
    for lane, lr in lanes.items():
        if lane not in truth:
            continue
        v_true, s_true = truth[lane]
        rep = {"velocity": agreement(lr.velocity_profile, v_true)}
        if lr.stroke_profile is not None and s_true is not None:
            rep["stroke_rate"] = agreement(lr.stroke_profile.segments, s_true)
        out[lane] = rep
    return out


__all__ = ["ReconOptions", "ReconResult", "LaneResult", "run_pipeline", "compare", "calibrate_lane",
           "AgreementReport"]


@dataclass
class AblationRow:
    mode: str
    lane: int
    boat_class: str
    rmse: float
    rrmse: float
    spearman_rho: float


def run_ablation(scenario, seed: int | None = None, options: ReconOptions | None = None) -> list:
    """Simulate ``scenario`` and score every fill mode's velocity profile."""
    stream, rasters, gt = generate(scenario, seed)
    opt = options or ReconOptions()
    opt = ReconOptions(**{**opt.__dict__, "mode": "flow_noncausal", "extra_modes": MODES})
    res = run_pipeline(scenario.course, records_from_objects(stream), gt.anchor_correspondences,
                       gt.anchor_frame, rasters, opt)
    truth = truth_profiles(gt, scenario.course)
    rows = []
    for m in MODES:
        for lane, rep in compare(res, truth, m).items():
            v = rep["velocity"]
            rows.append(AblationRow(m, lane, scenario.course.boats[lane], v.rmse, v.rrmse, v.spearman_rho))
    return rows
