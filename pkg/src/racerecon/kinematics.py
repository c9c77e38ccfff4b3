"""Distance-time smoothing, differentiation and 12.5 m segment averaging."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .course import CourseSpec
from .errors import BadTaps, DataError, NoOverlap, TooShort


@dataclass
class TimeSeries:
    t: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[0] != self.t.shape[0]:
            raise DataError("timestamps and values differ in length")
        if len(self.t) > 1:
            d = np.diff(self.t)
            if np.any(d <= 0):
                raise DataError("timestamps must be strictly increasing")
            if np.max(np.abs(d - d.mean())) > 1e-9:
                raise DataError("timestamps must be uniformly spaced")

    def __len__(self):
        return len(self.t)

    @property
    def dt(self) -> float:
        return float((self.t[-1] - self.t[0]) / (len(self.t) - 1))


@dataclass
class Profile:
    """A quantity averaged over course segments; NaN marks a missing segment."""
    centers: np.ndarray
    values: np.ndarray
    counts: np.ndarray
    quantity: str = "velocity_mps"

    def __len__(self):
        return len(self.centers)


VelocityProfile = Profile


def design_fir(numtaps: int = 25, cutoff_hz: float = 1.5, fps: float = 25.0) -> np.ndarray:
    """Hamming-windowed low-pass taps with unit DC gain."""
    taps = signal.firwin(numtaps, cutoff_hz, fs=fps, window="hamming")
    return taps / taps.sum()


def smooth_fir(x: TimeSeries, taps) -> TimeSeries:
    """Zero-phase FIR filtering with odd-reflection padding at both ends.

    Odd reflection about the end samples keeps constant and linear signals
    unchanged up to the boundary.
    """
    taps = np.asarray(taps, dtype=float)
    if taps.ndim != 1 or len(taps) % 2 == 0:
        raise BadTaps(f"need an odd number of taps, got {taps.shape}")
    if abs(taps.sum() - 1.0) > 1e-9:
        raise BadTaps(f"taps must sum to 1, got {taps.sum():.12g}")
    v = x.values
    if len(v) == 0:
        return TimeSeries(x.t.copy(), v.copy())
    half = len(taps) // 2
    cols = v.reshape(len(v), -1)
    out = np.empty_like(cols)
    for c in range(cols.shape[1]):
        padded = np.pad(cols[:, c], half, mode="reflect", reflect_type="odd") if len(v) > 1 \
            else np.full(len(v) + 2 * half, cols[0, c])
        out[:, c] = np.convolve(padded, taps, mode="valid")
    return TimeSeries(x.t.copy(), out.reshape(v.shape))


def velocity(x: TimeSeries) -> TimeSeries:
    """Second-order central differences, one-sided second order at the ends.

    For 2-D positions the speed (norm of the derivative) is returned.
    """
    if len(x) < 3:
        raise TooShort(f"need at least 3 samples, got {len(x)}")
    d = np.gradient(x.values, x.dt, axis=0, edge_order=2)
    if d.ndim == 2:
        d = np.linalg.norm(d, axis=1)
    return TimeSeries(x.t.copy(), d)


def segment_index(x, spec: CourseSpec) -> np.ndarray:
    """Segment number per position, -1 outside the course."""
    x = np.asarray(x, dtype=float)
    k = np.full(x.shape, -1, dtype=int)
    ok = np.isfinite(x)
    kk = np.floor((x[ok] + spec.race_distance) / spec.segment_spacing).astype(int)
    kk[(kk < 0) | (kk >= spec.segment_count)] = -1
    k[ok] = kk
    return k


def segment_means(values, x, spec: CourseSpec, quantity: str) -> Profile:
    values = np.asarray(values, dtype=float)
    k = segment_index(x, spec)
    ok = (k >= 0) & np.isfinite(values)
    nseg = spec.segment_count
    counts = np.bincount(k[ok], minlength=nseg)
    sums = np.bincount(k[ok], weights=values[ok], minlength=nseg)
    if counts.sum() == 0:
        raise NoOverlap("no samples fall inside the course segments")
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return Profile(np.array(spec.segment_centers()), means, counts, quantity)


def segment_profile(v: TimeSeries, x: TimeSeries, spec: CourseSpec) -> Profile:
    """Mean velocity per segment over samples whose position falls inside it.

    Segments are half-open [lower, upper) in the travel direction; segments
    without samples are NaN.
    """
    if len(v) != len(x) or not np.allclose(v.t, x.t, rtol=0, atol=1e-9):
        raise DataError("velocity and position must share timestamps")
    xv = x.values if x.values.ndim == 1 else x.values[:, 0]
    return segment_means(v.values, xv, spec, "velocity_mps")
