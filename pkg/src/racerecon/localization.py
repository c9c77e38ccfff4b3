"""Boat-tip localization from athlete detections.

Per lane and frame, athletes are mapped onto the water plane and combined
with per-seat calibrated offsets into a boat position. Frames in which not
every seat was detected are completed by linear interpolation or by
propagating athlete image positions with optical flow.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .course import WorldPoint
from .errors import (
    ConfigError,
    IncompleteFrame,
    MissingTip,
    NoCompleteFrames,
    OutOfFrame,
    UnknownSeat,
    WrongClass,
    WrongCount,
)
from .geometry import apply
from .tracking import LKParams, snap_to_detections, track_points

log = logging.getLogger(__name__)

MODES = ("linear", "ordering", "flow_causal", "flow_noncausal")


@dataclass
class Detection:
    cls: str
    bbox: tuple[float, float, float, float]  # left, top, width, height
    conf: float = 1.0
    keypoints: dict | None = None  # {"shoulder": (u, v), "wrist": (u, v)}
    tip: tuple[float, float] | None = None
    frame_index: int = 0

    @property
    def center(self) -> np.ndarray:
        l, t, w, h = self.bbox
        return np.array([l + w / 2, t + h / 2])


@dataclass(frozen=True)
class BoatClass:
    name: str
    n: int
    default_offset: tuple[float, float]
    discipline: str


BOAT_CLASSES = {
    "K1": BoatClass("K1", 1, (2.4, 0.0), "kayak"),
    "C1": BoatClass("C1", 1, (2.4, 0.0), "canoe"),
    "K2": BoatClass("K2", 2, (3.0, 0.0), "kayak"),
    "C2": BoatClass("C2", 2, (3.0, 0.0), "canoe"),
    "K4": BoatClass("K4", 4, (4.0, 0.0), "kayak"),
}


def boat_class(name: str) -> BoatClass:
    try:
        return BOAT_CLASSES[name.upper()]
    except KeyError:
        raise ConfigError(f"unknown boat class {name!r}; expected one of {sorted(BOAT_CLASSES)}") from None


class AthleteObservation(NamedTuple):
    image_pos: np.ndarray
    world_pos: np.ndarray
    lane: int
    seat: int | None = None
    source: str = "detected"


class TipObservation(NamedTuple):
    frame_index: int
    image: tuple[float, float] | None = None
    world: tuple[float, float] | None = None
    provenance: str = "ingested"


@dataclass
class OffsetCalibration:
    offsets: np.ndarray  # (N, 2), seat-ordered
    source_frames: list
    tips: list  # tip world points per source frame

    @property
    def n(self) -> int:
        return len(self.offsets)


# ---------------------------------------------------------------------------
# single-frame operations


def athlete_image_position(d: Detection) -> np.ndarray:
    """Centre of the bottom edge of the bounding box."""
    if d.cls != "athlete":
        raise WrongClass(f"expected an athlete detection, got {d.cls!r}")
    l, t, w, h = d.bbox
    return np.array([l + w / 2.0, t + h])


def initial_tip_estimate(athletes, cls: BoatClass) -> WorldPoint:
    """Class default offset added to the mean athlete world position."""
    if len(athletes) != cls.n:
        raise WrongCount(f"{cls.name} needs {cls.n} athletes, got {len(athletes)}")
    a = np.array([_world(o) for o in athletes], dtype=float)
    p = a.mean(axis=0) + np.asarray(cls.default_offset)
    return WorldPoint(float(p[0]), float(p[1]))


def tip_roi(h_world_to_image, estimate, raster_size: tuple[int, int], size: int = 150):
    """Square search window around the reprojected tip estimate.

    Returns (left, top, size, size), clamped so it lies inside the raster.
    """
    width, height = raster_size
    c = apply(h_world_to_image, np.asarray(estimate, dtype=float))
    if not (0 <= c[0] < width and 0 <= c[1] < height):
        raise OutOfFrame(f"tip estimate reprojects to {tuple(np.round(c, 1))}, outside the raster")
    left = int(round(c[0] - size / 2))
    top = int(round(c[1] - size / 2))
    left = min(max(left, 0), max(width - size, 0))
    top = min(max(top, 0), max(height - size, 0))
    return left, top, size, size


def _world(o) -> np.ndarray:
    return np.asarray(o.world_pos if isinstance(o, AthleteObservation) else o, dtype=float)


def calibrate_offsets(frames, tips, hseq, cls: BoatClass) -> OffsetCalibration:
    """Per-seat offsets tip - athlete, averaged over the given frames.

    ``frames`` holds one seat-ordered list of AthleteObservation per frame;
    ``tips`` the matching TipObservation per frame.
    """
    if len(frames) != len(tips):
        raise MissingTip(f"{len(frames)} frames but {len(tips)} tip observations")
    per_frame, tip_world, used = [], [], []
    for athletes, tip in zip(frames, tips):
        if len(athletes) != cls.n:
            raise IncompleteFrame(f"frame has {len(athletes)} athletes, {cls.name} needs {cls.n}")
        if tip is None or (tip.world is None and tip.image is None):
            raise MissingTip("frame has no tip observation")
        if tip.world is not None:
            p = np.asarray(tip.world, dtype=float)
        else:
            p = apply(hseq.image_to_world(tip.frame_index), np.asarray(tip.image, dtype=float))
        a = np.array([_world(o) for o in athletes])
        per_frame.append(p - a)
        tip_world.append(WorldPoint(float(p[0]), float(p[1])))
        used.append(tip.frame_index)
    if not per_frame:
        raise IncompleteFrame("no calibration frames")
    return OffsetCalibration(np.mean(per_frame, axis=0), used, tip_world)


def boat_position(athletes, cal: OffsetCalibration) -> WorldPoint:
    """Mean of athlete position plus seat offset over the seats present."""
    if not athletes:
        raise WrongCount("no athletes")
    acc = []
    for o in athletes:
        if o.seat is None or not 1 <= o.seat <= cal.n:
            raise UnknownSeat(f"seat {o.seat!r} not in 1..{cal.n}")
        acc.append(_world(o) + cal.offsets[o.seat - 1])
    p = np.mean(acc, axis=0)
    return WorldPoint(float(p[0]), float(p[1]))


def order_athletes(prev, flow, detections, radius: float) -> dict[int, int]:
    """Carry seat labels from the previous frame onto current detections.

    ``prev`` maps seat -> previous image position, ``flow`` holds one flow
    vector per entry of ``prev`` (same order). Returns seat -> detection
    index; seats without a detection within ``radius`` are left out.
    """
    seats = list(prev)
    if not seats:
        return {}
    pos = np.array([prev[k] for k in seats], dtype=float)
    delta = np.where(flow.valid[:, None], flow.delta, 0.0)
    match = snap_to_detections(pos + delta, detections, radius)
    return {k: int(m) for k, m in zip(seats, match) if m >= 0}


# ---------------------------------------------------------------------------
# lane tracks


@dataclass
class BoatTrack:
    lane: int
    boat_class: BoatClass
    frames: np.ndarray  # frame indices
    times: np.ndarray  # seconds
    detections: list  # per frame (k, 2) athlete image positions in this lane
    positions: np.ndarray  # (F, 2) boat tip world positions, NaN where unknown
    complete: np.ndarray  # (F,) all N seats detected
    source: np.ndarray  # (F,) detected | interpolated | flow_predicted | extrapolated | missing
    calibration: OffsetCalibration | None = None
    seats: np.ndarray | None = None  # (F, N, 2) seat image positions, NaN for gaps
    seat_source: np.ndarray | None = None  # (F, N) 0 gap, 1 detected, 2 flow

    @property
    def x(self) -> np.ndarray:
        return self.positions[:, 0]

    def __len__(self):
        return len(self.frames)


def sort_seats(world: np.ndarray) -> np.ndarray:
    """Indices ordering athletes by travel direction, seat 1 first."""
    return np.argsort(-world[:, 0], kind="stable")


def build_track(lane: int, cls: BoatClass, frames, times, detections, hseq,
                calibration: OffsetCalibration) -> BoatTrack:
    """Track with boat positions for complete frames only."""
    f = len(frames)
    n = cls.n
    pos = np.full((f, 2), np.nan)
    seats = np.full((f, n, 2), np.nan)
    seat_src = np.zeros((f, n), dtype=np.int8)
    complete = np.zeros(f, dtype=bool)
    for i, (fi, d) in enumerate(zip(frames, detections)):
        d = np.asarray(d, dtype=float).reshape(-1, 2)
        if len(d) != n:
            continue
        w = apply(hseq.image_to_world(fi), d)
        order = sort_seats(w)
        seats[i] = d[order]
        seat_src[i] = 1
        complete[i] = True
        pos[i] = (w[order] + calibration.offsets).mean(axis=0)
    source = np.where(complete, "detected", "missing").astype(object)
    return BoatTrack(lane, cls, np.asarray(frames), np.asarray(times, dtype=float),
                     [np.asarray(d, dtype=float).reshape(-1, 2) for d in detections],
                     pos, complete, source, calibration, seats, seat_src)


def _end_velocity(times, pos, known, side: int, window: float):
    """Least-squares velocity over the known rows within ``window`` s of one end."""
    t_end = times[known[side]]
    near = known[np.abs(times[known] - t_end) <= window]
    if len(near) < 2:
        near = known[:2] if side == 0 else known[-2:]
    if len(near) < 2:
        return np.zeros(pos.shape[1])
    t = times[near] - times[near].mean()
    return (t[:, None] * (pos[near] - pos[near].mean(axis=0))).sum(axis=0) / (t ** 2).sum()


def _interpolate(times: np.ndarray, pos: np.ndarray, window: float = 1.0):
    """Fill NaN rows linearly between known rows; hold velocity at the ends.

    The end velocity is a least-squares slope over the known rows within
    ``window`` seconds of the last (or first) known row.
    """
    known = np.flatnonzero(np.isfinite(pos[:, 0]))
    if len(known) == 0:
        raise NoCompleteFrames("no frame with a known boat position")
    out = pos.copy()
    src = np.full(len(times), "interpolated", dtype=object)
    src[known] = ""
    for c in range(pos.shape[1]):
        out[:, c] = np.interp(times, times[known], pos[known, c])
    for side in (0, -1):
        k0 = known[side]
        ends = np.arange(0, k0) if side == 0 else np.arange(k0 + 1, len(times))
        if len(ends) == 0:
            continue
        vel = _end_velocity(times, pos, known, side, window)
        out[ends] = pos[k0] + (times[ends, None] - times[k0]) * vel
        src[ends] = "extrapolated"
    return out, src


def _world_velocity(hseq, frames, times, p, i, img_p, img_i, both, old):
    """Boat world velocity between chain frames ``p`` and ``i``.

    Only seats detected in both frames count (median over them), so flow
    predictions never feed back into the motion prior. Without such seats
    the previous velocity is kept.
    """
    if not both.any():
        return old
    wp = apply(hseq.image_to_world(frames[p]), img_p[both])
    wi = apply(hseq.image_to_world(frames[i]), img_i[both])
    return np.median((wi - wp) / (times[i] - times[p]), axis=0)


def _motion_prior(hseq, frames, times, p, i, img, vel):
    """Image displacement of seats moving at the boat's world velocity.

    Accounts for camera motion between the frames, so the optical flow
    search starts near the athlete even when the pan changes abruptly.
    """
    w = apply(hseq.image_to_world(frames[p]), img) + vel * (times[i] - times[p])
    return apply(hseq[frames[i]], w) - img


def _run_chains(tracks, rasters, hseq, direction: int, variants, radius: float, lk: LKParams):
    """Propagate seat labels through every track in one direction.

    ``variants`` lists interpolate flags; False reproduces flow ordering
    (unmatched seats become gaps), True keeps the flow prediction for them.
    Optical flow is seeded with a constant world-velocity motion prior,
    which also stands in for the flow where it is invalid.
    Returns per variant and track: (seats (F, N, 2), seat_src (F, N), age (F, N)).
    """
    out = []
    for track in tracks:
        f, n = len(track), track.boat_class.n
        out.append([(np.full((f, n, 2), np.nan), np.zeros((f, n), np.int8),
                     np.zeros((f, n), dtype=float)) for _ in variants])
    if not tracks:
        return out
    f = len(tracks[0])
    frames, times = tracks[0].frames, tracks[0].times
    order = range(f) if direction > 0 else range(f - 1, -1, -1)
    # per track and variant: (image positions (N, 2), age (N,), boat world velocity (2,), seat source (N,))
    state = [[None for _ in variants] for _ in tracks]
    prev = None
    for i in order:
        pts, guesses, owners = [], [], []
        if prev is not None:
            for t, track in enumerate(tracks):
                if track.complete[i]:
                    continue
                for v in range(len(variants)):
                    st = state[t][v]
                    if st is None:
                        continue
                    ks = np.flatnonzero(np.isfinite(st[0][:, 0]))
                    pts.extend(st[0][ks])
                    guesses.extend(_motion_prior(hseq, frames, times, prev, i, st[0][ks], st[2]))
                    owners.extend((t, v, k) for k in ks)
        flows = None
        if pts:
            guesses = np.array(guesses)
            flows = track_points(rasters[frames[prev]], rasters[frames[i]], np.array(pts), lk, initial=guesses)
        # group flow results per (track, variant)
        grouped: dict = {}
        for row, (t, v, k) in enumerate(owners):
            grouped.setdefault((t, v), []).append((k, row))
        for t, track in enumerate(tracks):
            n = track.boat_class.n
            for v, interp in enumerate(variants):
                seats_out, src_out, age_out = out[t][v]
                old = state[t][v]
                if track.complete[i]:
                    cur = track.seats[i].copy()
                    src = np.ones(n, np.int8)
                    age = np.zeros(n)
                elif old is None or (t, v) not in grouped:
                    state[t][v] = None
                    continue
                else:
                    prev_pos, prev_age = old[0], old[1]
                    rows = grouped[(t, v)]
                    ks = [k for k, _ in rows]
                    rr = [r for _, r in rows]
                    delta = np.where(flows.valid[rr][:, None], flows.delta[rr], guesses[rr])
                    pred = prev_pos[ks] + delta
                    dets = track.detections[i]
                    match = snap_to_detections(pred, dets, radius)
                    cur = np.full((n, 2), np.nan)
                    src = np.zeros(n, np.int8)
                    age = np.zeros(n)
                    for j, k in enumerate(ks):
                        if match[j] >= 0:
                            cur[k] = dets[match[j]]
                            src[k] = 1
                        elif interp:
                            cur[k] = pred[j]
                            src[k] = 2
                            age[k] = prev_age[k] + 1
                    if not np.isfinite(cur[:, 0]).any():
                        state[t][v] = None
                        continue
                if old is None:
                    vel = np.zeros(2)
                else:
                    both = (old[3] == 1) & (src == 1)
                    vel = _world_velocity(hseq, frames, times, prev, i, old[0], cur, both, old[2])
                state[t][v] = (cur, age, vel, src)
                seats_out[i] = cur
                src_out[i] = src
                age_out[i] = age
        prev = i
    return out


def _merge_noncausal(fw, bw):
    seats_f, src_f, age_f = fw
    seats_b, src_b, age_b = bw
    seats = seats_f.copy()
    src = src_f.copy()
    use_b = (src_f != 1) & ((src_b == 1) | ((src_f == 0) & (src_b == 2)))
    seats[use_b] = seats_b[use_b]
    src[use_b] = src_b[use_b]
    both = (src_f == 2) & (src_b == 2)
    if both.any():
        wf = 1.0 / age_f[both]
        wb = 1.0 / age_b[both]
        seats[both] = (seats_f[both] * wf[:, None] + seats_b[both] * wb[:, None]) / (wf + wb)[:, None]
    return seats, src


def _positions_from_seats(track: BoatTrack, seats, src, hseq):
    f = len(track)
    pos = np.full((f, 2), np.nan)
    source = np.full(f, "missing", dtype=object)
    offsets = track.calibration.offsets
    for i in range(f):
        have = np.flatnonzero(src[i] > 0)
        if len(have) == 0:
            continue
        w = apply(hseq.image_to_world(track.frames[i]), seats[i, have])
        pos[i] = (w + offsets[have]).mean(axis=0)
        source[i] = "detected" if np.all(src[i] == 1) or (src[i][have] == 1).all() else "flow_predicted"
    return pos, source


def fill_tracks(tracks, modes, rasters, hseq, radius: float = 8.0,
                lk: LKParams | None = None) -> dict:
    """Complete every track with each requested mode.

    Returns {mode: [filled BoatTrack per input track]}. Flow-based modes
    share their flow computations.
    """
    lk = lk or LKParams()
    for m in modes:
        if m not in MODES:
            raise ConfigError(f"unknown fill mode {m!r}; expected one of {MODES}")
    for t in tracks:
        if not t.complete.any():
            raise NoCompleteFrames(f"lane {t.lane}: no frame with all {t.boat_class.n} athletes detected")
    needs_flow = [m for m in modes if m != "linear"]
    if needs_flow and rasters is None:
        raise ConfigError(f"fill modes {needs_flow} need rasters")

    result = {}
    fwd_variants = []
    if "ordering" in modes:
        fwd_variants.append(False)
    if "flow_causal" in modes or "flow_noncausal" in modes:
        fwd_variants.append(True)
    fwd = _run_chains(tracks, rasters, hseq, +1, fwd_variants, radius, lk) if fwd_variants else None
    bwd = _run_chains(tracks, rasters, hseq, -1, [True], radius, lk) if "flow_noncausal" in modes else None

    for mode in modes:
        filled = []
        for t, track in enumerate(tracks):
            if mode == "linear":
                pos = track.positions.copy()
                src_seats = track.seat_source
                seats = track.seats
                source = np.where(track.complete, "detected", "missing").astype(object)
            else:
                if mode == "ordering":
                    seats, src_seats, _ = fwd[t][fwd_variants.index(False)]
                elif mode == "flow_causal":
                    seats, src_seats, _ = fwd[t][fwd_variants.index(True)]
                else:
                    seats, src_seats = _merge_noncausal(fwd[t][fwd_variants.index(True)], bwd[t][0])
                pos, source = _positions_from_seats(track, seats, src_seats, hseq)
            full, fill_src = _interpolate(track.times, pos)
            known = np.isfinite(pos[:, 0])
            source = np.where(known, source, fill_src)
            filled.append(replace(track, positions=full, source=source, seats=seats, seat_source=src_seats))
        result[mode] = filled
    return result


def fill_track(track: BoatTrack, mode: str, rasters=None, hseq=None, **kw) -> BoatTrack:
    return fill_tracks([track], [mode], rasters, hseq, **kw)[mode][0]
