"""Stroke-rate extraction from a per-lane motion signal."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, signal

from .course import CourseSpec
from .errors import MissingRaster, NoPeaks, TooFewPeaks, TooSparse
from .kinematics import Profile, TimeSeries, segment_means

MERGE_TOLERANCE_S = {"canoe": 0.6, "kayak": 0.3}


@dataclass
class MotionSignal:
    series: TimeSeries
    source: str  # pose_distance | bbox_brightness
    selection: np.ndarray | None = None  # chosen seat per frame, 0 when none
    filled: np.ndarray | None = None  # frames filled by interpolation

    @property
    def t(self):
        return self.series.t

    @property
    def values(self):
        return self.series.values


@dataclass
class StrokePeaks:
    times: np.ndarray
    frames: np.ndarray  # fractional frame positions
    history: list = field(default_factory=list)  # (t_a, t_b, merged) per merge

    def __len__(self):
        return len(self.times)

    @classmethod
    def from_frames(cls, frames, fps: float, t0: float = 0.0) -> "StrokePeaks":
        f = np.asarray(frames, dtype=float)
        return cls(t0 + f / fps, f)


@dataclass
class RateSignal:
    """Stroke rate knots (interval midpoints) with linear interpolation.

    ``gaps`` lists (start, end) spans without a trustworthy rate; the
    signal is NaN there and outside [start, end].
    """
    knot_t: np.ndarray
    knot_rate: np.ndarray
    start: float
    end: float
    gaps: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if len(self.knot_t) == 0:
            return np.full(t.shape, np.nan)
        r = np.interp(t, self.knot_t, self.knot_rate)
        bad = (t < self.start) | (t > self.end)
        for lo, hi in self.gaps:
            bad |= (t > lo) & (t < hi)
        return np.where(bad, np.nan, r)


@dataclass
class StrokeRateProfile:
    rate: RateSignal
    segments: Profile


def _fill_gaps(t, values, present, min_fraction=0.5):
    present = np.asarray(present, dtype=bool)
    if present.sum() < max(2, min_fraction * len(t)):
        raise TooSparse(f"motion signal present in {present.sum()} of {len(t)} frames")
    out = np.array(values, dtype=float)
    out[~present] = np.interp(t[~present], t[present], out[present])
    return out


def motion_signal_pose(t, keypoints, widths, selection=None) -> MotionSignal:
    """Shoulder-wrist distance normalised by bounding box width.

    ``keypoints`` holds (shoulder, wrist) per frame or None when missing.
    """
    t = np.asarray(t, dtype=float)
    r = np.full(len(t), np.nan)
    for i, (kp, w) in enumerate(zip(keypoints, widths)):
        if kp is None or w is None or not w > 0:
            continue
        s, wr = np.asarray(kp[0], float), np.asarray(kp[1], float)
        r[i] = np.hypot(*(s - wr)) / w
    present = np.isfinite(r)
    vals = _fill_gaps(t, r, present)
    return MotionSignal(TimeSeries(t, vals), "pose_distance",
                        None if selection is None else np.asarray(selection), ~present)


def bbox_brightness(raster, bbox, kernel: int = 11, fraction: float = 0.2) -> float:
    """Mean blurred intensity of the lower-left sub-box of ``bbox``."""
    img = raster.intensity
    h_img, w_img = img.shape
    l, t, w, h = bbox
    sw = max(1, int(round(fraction * w)))
    sh = max(1, int(round(fraction * h)))
    x0 = int(round(l))
    y1 = int(round(t + h))
    x1, y0 = x0 + sw, y1 - sh
    pad = kernel // 2
    cx0, cy0 = max(x0 - pad, 0), max(y0 - pad, 0)
    cx1, cy1 = min(x1 + pad, w_img), min(y1 + pad, h_img)
    if cx0 >= cx1 or cy0 >= cy1:
        return float("nan")
    ctx = np.asarray(img[cy0:cy1, cx0:cx1], dtype=float)
    blurred = ndimage.uniform_filter(ctx, size=kernel, mode="nearest")
    sub = blurred[max(y0, 0) - cy0:min(y1, h_img) - cy0, max(x0, 0) - cx0:min(x1, w_img) - cx0]
    return float(sub.mean()) if sub.size else float("nan")


def motion_signal_bbox(rasters, frames, t, bboxes, selection=None) -> MotionSignal:
    """Blurred brightness in the lower-left 20 % corner of the athlete box."""
    t = np.asarray(t, dtype=float)
    if rasters is None:
        raise MissingRaster("bounding-box motion signal needs rasters")
    r = np.full(len(t), np.nan)
    for i, (fi, bb) in enumerate(zip(frames, bboxes)):
        if bb is None:
            continue
        raster = rasters[fi]
        if raster is None:
            raise MissingRaster(f"no raster for frame {fi}")
        r[i] = bbox_brightness(raster, bb)
    present = np.isfinite(r)
    vals = _fill_gaps(t, r, present)
    return MotionSignal(TimeSeries(t, vals), "bbox_brightness",
                        None if selection is None else np.asarray(selection), ~present)


def select_athlete(seats) -> int | None:
    """Front-most detected seat (lowest seat index), None if nobody detected."""
    seats = [s for s in seats if s is not None]
    return min(seats) if seats else None


def merge_peaks(times, tolerance: float):
    """Merge the closest pair of peaks within tolerance until none remain.

    Each merge replaces the pair by its mean timestamp; ties go to the
    earliest pair.
    """
    ts = sorted(float(x) for x in times)
    history = []
    while len(ts) > 1:
        gaps = np.diff(ts)
        k = int(np.argmin(gaps))
        if gaps[k] > tolerance:
            break
        a, b = ts[k], ts[k + 1]
        m = 0.5 * (a + b)
        history.append((a, b, m))
        ts[k:k + 2] = [m]
    return np.array(ts), history


def find_maxima(y: np.ndarray) -> np.ndarray:
    """Strict local maxima refined to sub-sample position by a parabola fit."""
    if len(y) < 3:
        return np.zeros(0)
    i = np.flatnonzero((y[1:-1] > y[:-2]) & (y[1:-1] > y[2:])) + 1
    a, b, c = y[i - 1], y[i], y[i + 1]
    den = a - 2 * b + c
    off = np.where(den < 0, 0.5 * (a - c) / np.where(den < 0, den, -1.0), 0.0)
    return i + np.clip(off, -0.5, 0.5)


def detect_and_merge_peaks(r, discipline: str, window: int = 11, order: int = 3,
                           tolerance: float | None = None) -> StrokePeaks:
    """Stroke peaks: de-mean, Savitzky-Golay smoothing, maxima, merging."""
    series = r.series if isinstance(r, MotionSignal) else r
    y = np.asarray(series.values, dtype=float)
    y = y - y.mean()
    win = min(window, len(y) if len(y) % 2 else len(y) - 1)
    if win > order + 1:
        y = signal.savgol_filter(y, win, order)
    pos = find_maxima(y)
    if len(pos) == 0:
        raise NoPeaks("motion signal has no local maxima")
    dt = series.dt
    times = series.t[0] + pos * dt
    tol = MERGE_TOLERANCE_S[discipline] if tolerance is None else tolerance
    merged, history = merge_peaks(times, tol)
    return StrokePeaks(merged, (merged - series.t[0]) / dt, history)


def _run_lengths(mask: np.ndarray) -> np.ndarray:
    """Length of the run of True values each element belongs to (0 for False)."""
    out = np.zeros(len(mask), dtype=int)
    i = 0
    while i < len(mask):
        if mask[i]:
            j = i
            while j < len(mask) and mask[j]:
                j += 1
            out[i:j] = j - i
            i = j
        else:
            i += 1
    return out


def rate_from_peaks(peaks, fps: float, neighbours: int = 2, filled=None, max_gap: int = 5) -> RateSignal:
    """Strokes per minute from inter-peak intervals averaged over +-2 neighbours.

    ``peaks`` is a StrokePeaks or an array of peak frame positions. Windows
    are truncated at the sequence ends. With ``filled`` (per-frame mask of
    interpolated motion samples) an interval containing more than
    ``max_gap`` consecutive filled frames is treated as unobserved: it is
    left out of the averages and the rate is NaN across it.
    """
    if not isinstance(peaks, StrokePeaks):
        peaks = StrokePeaks.from_frames(peaks, fps)
    if len(peaks) < 2:
        raise TooFewPeaks(f"need at least 2 peaks, got {len(peaks)}")
    intervals = np.diff(peaks.frames) / fps
    m = len(intervals)
    ok = np.ones(m, dtype=bool)
    if filled is not None:
        runs = _run_lengths(np.asarray(filled, dtype=bool))
        for k in range(m):
            lo = max(int(np.ceil(peaks.frames[k])), 0)
            hi = min(int(np.floor(peaks.frames[k + 1])) + 1, len(runs))
            ok[k] = not np.any(runs[lo:hi] > max_gap)
    if not ok.any():
        raise TooFewPeaks("no stroke interval is fully observed")
    avg = np.full(m, np.nan)
    for k in np.flatnonzero(ok):
        lo, hi = max(0, k - neighbours), k + neighbours + 1
        avg[k] = intervals[lo:hi][ok[lo:hi]].mean()
    mid = 0.5 * (peaks.times[:-1] + peaks.times[1:])
    gaps = np.c_[peaks.times[:-1][~ok], peaks.times[1:][~ok]]
    return RateSignal(mid[ok], 60.0 / avg[ok], float(peaks.times[0]), float(peaks.times[-1]), gaps)


def stroke_profile(rate: RateSignal, t, x, spec: CourseSpec) -> StrokeRateProfile:
    """Rate sampled along the boat trajectory and averaged per segment."""
    vals = rate.at(t)
    return StrokeRateProfile(rate, segment_means(vals, x, spec, "stroke_rate_spm"))
