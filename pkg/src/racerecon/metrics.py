"""Agreement metrics between reconstructed and reference profiles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.stats import rankdata

from .course import CourseSpec
from .errors import ClassMismatch, DegenerateRanks, NoOverlap, SingleAthleteClass
from .kinematics import segment_index

LOA_FACTOR = 1.97
RRMSE_DEFINITION = "rmse / mean(|truth|) over shared segments"


def _values(p):
    return np.asarray(getattr(p, "values", p), dtype=float)


def shared(pred, truth):
    a, b = _values(pred), _values(truth)
    if a.shape != b.shape:
        raise NoOverlap(f"profiles are not aligned: {a.shape} vs {b.shape}")
    ok = np.isfinite(a) & np.isfinite(b)
    return a[ok], b[ok]


def rmse_rrmse(pred, truth) -> tuple[float, float]:
    a, b = shared(pred, truth)
    if len(a) == 0:
        raise NoOverlap("no shared non-missing segments")
    rmse = math.sqrt(float(np.mean((a - b) ** 2)))
    return rmse, rmse / float(np.mean(np.abs(b)))


def spearman(pred, truth) -> float:
    """Rank correlation with average ranks for ties."""
    a, b = shared(pred, truth)
    if len(a) < 3:
        raise NoOverlap(f"need at least 3 shared segments, got {len(a)}")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise DegenerateRanks("one side is constant")
    ra, rb = rankdata(a), rankdata(b)
    ra -= ra.mean()
    rb -= rb.mean()
    return float((ra * rb).sum() / math.sqrt((ra * ra).sum() * (rb * rb).sum()))


@dataclass
class BlandAltman:
    mean_diff: float
    sd: float
    lo: float
    hi: float
    factor: float = LOA_FACTOR


def bland_altman(pred, truth, factor: float = LOA_FACTOR) -> BlandAltman:
    a, b = shared(pred, truth)
    if len(a) < 2:
        raise NoOverlap(f"need at least 2 shared segments, got {len(a)}")
    d = a - b
    m = float(d.mean())
    sd = float(d.std(ddof=1))
    return BlandAltman(m, sd, m - factor * sd, m + factor * sd, factor)


@dataclass
class AgreementReport:
    rmse: float
    rrmse: float
    spearman_rho: float
    bland_altman: BlandAltman
    segment_errors: np.ndarray
    rrmse_definition: str = RRMSE_DEFINITION

    def as_dict(self) -> dict:
        ba = self.bland_altman
        return {
            "rmse": self.rmse,
            "rrmse": self.rrmse,
            "rrmse_definition": self.rrmse_definition,
            "spearman_rho": self.spearman_rho,
            "bland_altman": {"mean_diff": ba.mean_diff, "sd": ba.sd, "lo": ba.lo, "hi": ba.hi,
                             "factor": ba.factor},
            "segment_errors": [None if not np.isfinite(e) else float(e) for e in self.segment_errors],
        }


def agreement(pred, truth) -> AgreementReport:
    rmse, rrmse = rmse_rrmse(pred, truth)
    try:
        rho = spearman(pred, truth)
    except (DegenerateRanks, NoOverlap):
        rho = float("nan")
    try:
        ba = bland_altman(pred, truth)
    except NoOverlap:
        ba = BlandAltman(float("nan"), float("nan"), float("nan"), float("nan"))
    return AgreementReport(rmse, rrmse, rho, ba, _values(pred) - _values(truth))


def offset_consistency(cal_a, cal_b) -> float:
    """Mean over seats of |o1 - o2| relative to the mean offset length."""
    a = np.asarray(getattr(cal_a, "offsets", cal_a), dtype=float).reshape(-1, 2)
    b = np.asarray(getattr(cal_b, "offsets", cal_b), dtype=float).reshape(-1, 2)
    if a.shape != b.shape:
        raise ClassMismatch(f"calibrations have {len(a)} and {len(b)} seats")
    num = np.linalg.norm(a - b, axis=1)
    den = np.linalg.norm(a + b, axis=1) / 2
    return float(np.mean(num / den))


@dataclass
class SpacingReport:
    centers: np.ndarray
    median: np.ndarray
    sd: np.ndarray
    counts: np.ndarray
    frame_errors: np.ndarray = field(repr=False)
    frame_x: np.ndarray = field(repr=False)


def frame_spacing_error(athletes_world, offsets) -> float:
    """Mean over seat pairs of observed minus modelled spacing."""
    a = np.asarray(athletes_world, dtype=float)
    o = np.asarray(offsets, dtype=float)
    n = len(o)
    total = 0.0
    for i, j in combinations(range(n), 2):
        total += np.linalg.norm(a[j] - a[i]) - np.linalg.norm(o[j] - o[i])
    return total * 2.0 / (n * (n - 1))


def spacing_error(frames_world, boat_x, cal, spec: CourseSpec) -> SpacingReport:
    """Spacing error per complete frame, binned per course segment.

    ``frames_world`` holds seat-ordered athlete world positions for each
    complete frame and ``boat_x`` the boat position used for binning.
    """
    offsets = np.asarray(getattr(cal, "offsets", cal), dtype=float)
    if len(offsets) < 2:
        raise SingleAthleteClass("spacing error needs at least two athletes")
    errs = np.array([frame_spacing_error(a, offsets) for a in frames_world])
    bx = np.asarray(boat_x, dtype=float)
    k = segment_index(bx, spec)
    nseg = spec.segment_count
    med, sd, cnt = np.full(nseg, np.nan), np.full(nseg, np.nan), np.zeros(nseg, int)
    for s in range(nseg):
        e = errs[k == s]
        cnt[s] = len(e)
        if len(e):
            med[s] = np.median(e)
            sd[s] = e.std(ddof=1) if len(e) > 1 else 0.0
    return SpacingReport(np.array(spec.segment_centers()), med, sd, cnt, errs, bx)
