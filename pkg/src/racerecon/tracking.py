"""Sparse point tracking and homography propagation through a sequence."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .course import CourseSpec, buoy_world_positions
from .errors import (
    AnchorFitFailed,
    DataError,
    DegenerateConfiguration,
    DimensionMismatch,
    InsufficientInliers,
    MissingRaster,
    NumericError,
)
from .geometry import (
    Correspondence,
    FitReport,
    Homography,
    apply,
    estimate_ransac,
    invert,
)


@dataclass
class Raster:
    intensity: np.ndarray  # (height, width), values in [0, 1]
    frame_index: int = 0

    @property
    def width(self) -> int:
        return self.intensity.shape[1]

    @property
    def height(self) -> int:
        return self.intensity.shape[0]


@dataclass
class FlowVectors:
    origin: np.ndarray  # (n, 2)
    delta: np.ndarray  # (n, 2)
    valid: np.ndarray  # (n,) bool

    def __len__(self):
        return len(self.origin)

    @property
    def target(self) -> np.ndarray:
        return self.origin + self.delta


@dataclass
class LKParams:
    levels: int = 3
    window: int = 21
    iterations: int = 30
    epsilon: float = 0.01
    min_eigenvalue: float = 1e-4
    max_displacement: float = 24.0  # beyond the initial guess
    max_residual: float = 0.5  # final rms error relative to template contrast


# ---------------------------------------------------------------------------
# Lucas-Kanade


def _extract(img: np.ndarray, centers: np.ndarray, half: int) -> np.ndarray:
    """Stack of (2*half+1)^2 patches around integer centers, edge-padded."""
    h, w = img.shape
    size = 2 * half + 1
    out = np.empty((len(centers), size, size), dtype=np.float32)
    for k, (cx, cy) in enumerate(centers):
        x0, y0 = cx - half, cy - half
        x1, y1 = x0 + size, y0 + size
        sx0, sy0 = max(x0, 0), max(y0, 0)
        sx1, sy1 = min(x1, w), min(y1, h)
        if sx0 >= sx1 or sy0 >= sy1:
            out[k] = 0.0
            continue
        region = img[sy0:sy1, sx0:sx1]
        if (sx0, sy0, sx1, sy1) != (x0, y0, x1, y1):
            region = np.pad(region, ((sy0 - y0, y1 - sy1), (sx0 - x0, x1 - sx1)), mode="edge")
        out[k] = region
    return out


def _down(stack: np.ndarray) -> np.ndarray:
    # 2x2 box average; level-(l+1) pixel i sits at level-l coordinate 2i + 0.5
    n, h, w = stack.shape
    h2, w2 = h // 2, w // 2
    s = stack[:, : 2 * h2, : 2 * w2]
    return 0.25 * (s[:, 0::2, 0::2] + s[:, 1::2, 0::2] + s[:, 0::2, 1::2] + s[:, 1::2, 1::2])


def _sample(stack: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear samples with edge clamping; xs, ys shaped (n, a, b) in patch coordinates."""
    n, h, w = stack.shape
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.minimum(xs.astype(np.intp), w - 2)
    y0 = np.minimum(ys.astype(np.intp), h - 2)
    fx = (xs - x0).astype(np.float32)
    fy = (ys - y0).astype(np.float32)
    base = (np.arange(n, dtype=np.intp)[:, None, None] * h + y0) * w + x0
    flat = stack.reshape(-1)
    top = flat[base] * (1 - fx) + flat[base + 1] * fx
    bot = flat[base + w] * (1 - fx) + flat[base + w + 1] * fx
    return top * (1 - fy) + bot * fy


def track_points(prev: Raster, nxt: Raster, points, params: LKParams | None = None,
                 initial=None) -> FlowVectors:
    """Pyramidal Lucas-Kanade estimate of each point's displacement.

    ``initial`` optionally seeds the displacement per point (e.g. from a
    motion model); the returned delta includes it.
    """
    params = params or LKParams()
    if prev.intensity.shape != nxt.intensity.shape:
        raise DimensionMismatch(f"raster shapes differ: {prev.intensity.shape} vs {nxt.intensity.shape}")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        e = np.zeros((0, 2))
        return FlowVectors(e, e.copy(), np.zeros(0, dtype=bool))
    guess0 = np.zeros((n, 2)) if initial is None else np.asarray(initial, dtype=float).reshape(n, 2).copy()
    guess0[~np.isfinite(guess0)] = 0.0

    levels = max(1, params.levels)
    r = params.window // 2
    top = 2 ** (levels - 1)
    half = top * (r + 3) + int(math.ceil(params.max_displacement))

    c_prev = np.rint(pts).astype(int)
    c_next = np.rint(pts + guess0).astype(int)
    # sub-pixel parts; the next patch is centered on the guessed location
    f_prev = pts - c_prev
    f_next = pts + guess0 - c_next
    pyr_p = [_extract(prev.intensity, c_prev, half)]
    pyr_n = [_extract(nxt.intensity, c_next, half)]
    for _ in range(levels - 1):
        pyr_p.append(_down(pyr_p[-1]))
        pyr_n.append(_down(pyr_n[-1]))

    off = np.arange(-r - 1, r + 2, dtype=float)
    oy, ox = np.meshgrid(off, off, indexing="ij")
    d = np.zeros((n, 2))  # residual displacement in current level units
    min_eig0 = np.zeros(n)
    ok = np.ones(n, dtype=bool)
    for lvl in range(levels - 1, -1, -1):
        scale = 2.0 ** lvl
        # level-0 patch coordinate u maps to (u + 0.5) / scale - 0.5 at this level
        pp = (half + f_prev + 0.5) / scale - 0.5
        pn = (half + f_next + 0.5) / scale - 0.5
        big_x = pp[:, 0, None, None] + ox
        big_y = pp[:, 1, None, None] + oy
        tpl_big = _sample(pyr_p[lvl], big_x, big_y)
        gy, gx = np.gradient(tpl_big, axis=(1, 2))
        tpl = tpl_big[:, 1:-1, 1:-1]
        gx = gx[:, 1:-1, 1:-1]
        gy = gy[:, 1:-1, 1:-1]
        gxx = (gx * gx).sum((1, 2))
        gxy = (gx * gy).sum((1, 2))
        gyy = (gy * gy).sum((1, 2))
        det = gxx * gyy - gxy * gxy
        tr = gxx + gyy
        min_eig = 0.5 * (tr - np.sqrt(np.maximum(tr * tr - 4 * det, 0.0)))
        area = (2 * r + 1) ** 2
        solvable = min_eig / area > 1e-12
        if lvl == 0:
            min_eig0 = min_eig / area
        wx = ox[1:-1, 1:-1]
        wy = oy[1:-1, 1:-1]
        active = solvable & ok
        safe_det = np.where(solvable, det, 1.0)
        for _ in range(params.iterations):
            if not active.any():
                break
            jx = pn[:, 0, None, None] + d[:, 0, None, None] + wx
            jy = pn[:, 1, None, None] + d[:, 1, None, None] + wy
            warped = _sample(pyr_n[lvl], jx, jy)
            err = tpl - warped
            bx = (err * gx).sum((1, 2))
            by = (err * gy).sum((1, 2))
            dx = (gyy * bx - gxy * by) / safe_det
            dy = (gxx * by - gxy * bx) / safe_det
            step = np.where(active[:, None], np.c_[dx, dy], 0.0)
            d += step
            bad = ~np.all(np.isfinite(d), axis=1) | (np.abs(d).max(1) * scale > params.max_displacement + 2 * scale)
            ok &= ~bad
            d[bad] = 0.0
            active &= ~bad & (np.hypot(step[:, 0], step[:, 1]) >= params.epsilon)
        if lvl > 0:
            d *= 2.0
        else:
            jx = pn[:, 0, None, None] + d[:, 0, None, None] + wx
            jy = pn[:, 1, None, None] + d[:, 1, None, None] + wy
            res = tpl - _sample(pyr_n[0], jx, jy)
            contrast = tpl.std(axis=(1, 2))
            rel = np.sqrt((res ** 2).mean((1, 2))) / np.maximum(contrast, 1e-12)

    delta = guess0 + d
    tgt = pts + delta
    h, w = prev.intensity.shape
    inside = (tgt[:, 0] >= 0) & (tgt[:, 0] <= w - 1) & (tgt[:, 1] >= 0) & (tgt[:, 1] <= h - 1)
    valid = (ok & inside & (min_eig0 >= params.min_eigenvalue) & (rel <= params.max_residual)
             & (np.hypot(d[:, 0], d[:, 1]) <= params.max_displacement))
    return FlowVectors(pts.copy(), delta, valid)


# ---------------------------------------------------------------------------
# detection association


def snap_to_detections(predicted, detections, radius: float):
    """Greedy nearest matching, each detection used at most once.

    Returns an int array with the matched detection index per prediction
    (-1 when unmatched). Pairs are taken in order of increasing distance;
    ties go to the lowest detection index.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    p = np.asarray(predicted, dtype=float).reshape(-1, 2)
    q = np.asarray(detections, dtype=float).reshape(-1, 2)
    match = np.full(len(p), -1, dtype=int)
    if len(p) == 0 or len(q) == 0:
        return match
    dist = np.linalg.norm(p[:, None, :] - q[None, :, :], axis=2)
    ii, jj = np.nonzero(dist <= radius)
    if len(ii) == 0:
        return match
    order = np.lexsort((ii, jj, dist[ii, jj]))
    used = np.zeros(len(q), dtype=bool)
    for k in order:
        i, j = ii[k], jj[k]
        if match[i] < 0 and not used[j]:
            match[i] = j
            used[j] = True
    return match


# ---------------------------------------------------------------------------
# homography propagation


@dataclass
class HomographySequence:
    homographies: list
    reports: list
    correspondences: list
    flagged: np.ndarray
    anchor_frame: int
    _inverse: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return len(self.homographies)

    def __getitem__(self, i) -> Homography:
        return self.homographies[i]

    def image_to_world(self, i) -> Homography:
        if i not in self._inverse:
            self._inverse[i] = invert(self.homographies[i])
        return self._inverse[i]


@dataclass
class PropagationParams:
    # inlier threshold matches the snap radius so detection jitter is tolerated
    threshold_px: float = 8.0
    max_iters: int = 2000
    seed: int = 0
    snap_radius: float = 8.0
    max_tracked: int = 24
    margin: int = 16
    search_px: float = 96.0  # translation vote range for coarse alignment
    # the motion model seeds each buoy closely, so a shallow pyramid suffices
    lk: LKParams = field(default_factory=lambda: LKParams(levels=2))


def visible_mask(h: Homography, world: np.ndarray, width: int, height: int, margin: float = 0.0):
    """World points that project in front of the camera and inside the image."""
    world = np.asarray(world, dtype=float).reshape(-1, 2)
    q = world @ h.m[:, :2].T + h.m[:, 2]
    center_w = apply(invert(h), np.array([width / 2, height / 2]))
    sign = np.sign(h.m[2, :2] @ center_w + h.m[2, 2])
    front = q[:, 2] * sign > 1e-9
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = q[:, :2] / q[:, 2:3]
    inside = ((uv[:, 0] >= margin) & (uv[:, 0] <= width - 1 - margin)
              & (uv[:, 1] >= margin) & (uv[:, 1] <= height - 1 - margin))
    return front & inside & np.all(np.isfinite(uv), axis=1), uv


def vote_shift(predicted, detections, radius: float, search: float):
    """Common image translation best aligning predictions with detections.

    Every prediction/detection pair closer than ``search`` proposes its
    offset; the proposal supported by the most pairs within ``radius`` wins.
    Returns (shift, support).
    """
    p = np.asarray(predicted, dtype=float).reshape(-1, 2)
    q = np.asarray(detections, dtype=float).reshape(-1, 2)
    if len(p) == 0 or len(q) == 0:
        return np.zeros(2), 0
    diff = (q[None, :, :] - p[:, None, :]).reshape(-1, 2)
    cand = diff[np.hypot(diff[:, 0], diff[:, 1]) <= search]
    if len(cand) == 0:
        return np.zeros(2), 0
    near = np.hypot(*(cand[:, None, :] - cand[None, :, :]).transpose(2, 0, 1)) <= radius
    support = near.sum(1)
    best = int(np.argmax(support))
    return cand[near[best]].mean(axis=0), int(support[best])


def _extrapolate(h_prev: Homography, h_prevprev: Homography | None) -> np.ndarray:
    if h_prevprev is None:
        return h_prev.m
    # constant-velocity model in the homography group
    return h_prev.m @ np.linalg.inv(h_prevprev.m) @ h_prev.m


def propagate(frames, anchor: int, anchor_corrs, spec: CourseSpec, detections,
              image_size: tuple[int, int], params: PropagationParams | None = None,
              frame_count: int | None = None) -> HomographySequence:
    """Carry the anchor homography forward and backward through the sequence.

    ``frames`` is an indexable sequence of Raster (or None to predict buoy
    motion from the homography trajectory alone); ``detections`` holds
    per-frame (k, 2) arrays of buoy detection centers in pixels.
    """
    params = params or PropagationParams()
    n = frame_count if frame_count is not None else len(detections)
    width, height = image_size
    if not 0 <= anchor < n:
        raise AnchorFitFailed(f"anchor frame {anchor} outside 0..{n - 1}")
    try:
        h0, rep0 = estimate_ransac(anchor_corrs, params.threshold_px, params.max_iters,
                                   params.seed, frame_index=anchor)
    except (InsufficientInliers, DegenerateConfiguration, NumericError) as e:
        raise AnchorFitFailed(f"anchor correspondences do not yield a homography: {e}") from None

    world = np.array([b.point for b in buoy_world_positions(spec)], dtype=float)
    hs = [None] * n
    reps = [None] * n
    corrs = [[] for _ in range(n)]
    flagged = np.zeros(n, dtype=bool)
    hs[anchor], reps[anchor] = h0, rep0
    corrs[anchor] = [Correspondence(tuple(c[0]), tuple(c[1])) for c in anchor_corrs]

    for step in (1, -1):
        h_prev, h_pp = h0, None
        p = anchor
        for i in range(anchor + step, n if step > 0 else -1, step):
            vis, uv_prev = visible_mask(h_prev, world, width, height, params.margin)
            idx = np.flatnonzero(vis)
            if len(idx) > params.max_tracked:
                dc = np.hypot(uv_prev[idx, 0] - width / 2, uv_prev[idx, 1] - height / 2)
                idx = idx[np.argsort(dc, kind="stable")[: params.max_tracked]]
            pts_prev = uv_prev[idx]
            try:
                h_pred = Homography(_extrapolate(h_prev, h_pp), i)
                guess = apply(h_pred, world[idx]) - pts_prev
            except NumericError:
                guess = np.zeros_like(pts_prev)
            pred = pts_prev + guess
            dets = np.asarray(detections[i], dtype=float).reshape(-1, 2)
            if len(idx):
                # coarse re-centering when the motion model drifts off the buoys
                hit = np.count_nonzero(snap_to_detections(pred, dets, params.snap_radius) >= 0)
                shift, support = vote_shift(pred, dets, params.snap_radius, params.search_px)
                if support > hit:
                    guess = guess + shift
                    pred = pred + shift
            if frames is not None and len(idx):
                fl = track_points(frames[p], frames[i], pts_prev, params.lk, initial=guess)
                pred = np.where(fl.valid[:, None], fl.target, pred)
            match = snap_to_detections(pred, dets, params.snap_radius) if len(pred) else np.zeros(0, int)
            img = np.where((match >= 0)[:, None], dets[np.maximum(match, 0)] if len(dets) else pred, pred)
            keep = ((img[:, 0] >= 0) & (img[:, 0] <= width - 1) & (img[:, 1] >= 0) & (img[:, 1] <= height - 1))
            cs = [Correspondence(tuple(img[k]), tuple(world[idx[k]])) for k in np.flatnonzero(keep)]
            try:
                h, rep = estimate_ransac(cs, params.threshold_px, params.max_iters,
                                         params.seed + i, frame_index=i)
                flagged[i] = np.count_nonzero(match[keep] >= 0) < 4
            except (InsufficientInliers, DegenerateConfiguration, NumericError):
                h, rep = h_prev.with_frame(i), None
                flagged[i] = True
            hs[i], reps[i], corrs[i] = h, rep, cs
            h_pp, h_prev, p = h_prev, h, i
    return HomographySequence(hs, reps, corrs, flagged, anchor)


# ---------------------------------------------------------------------------
# PGM rasters


def read_pgm(path, frame_index: int = 0) -> Raster:
    data = Path(path).read_bytes()
    m = re.match(rb"P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(\d+)\s+(\d+)\s", data)
    if not m:
        raise DataError(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval > 255:
        raise DataError(f"{path}: only 8-bit PGM is supported")
    pix = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=m.end())
    return Raster(pix.reshape(h, w).astype(np.float32) / maxval, frame_index)


def write_pgm(path, raster: Raster) -> None:
    a = np.clip(np.rint(np.asarray(raster.intensity) * 255), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (a.shape[1], a.shape[0]))
        f.write(a.tobytes())


class PGMDirectory:
    """Lazy frame_%06d.pgm sequence."""

    def __init__(self, directory):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise DataError(f"raster directory not found: {directory}")
        self._cache: dict[int, Raster] = {}

    def path(self, i: int) -> Path:
        return self.directory / f"frame_{i:06d}.pgm"

    def __getitem__(self, i: int) -> Raster:
        if i not in self._cache:
            p = self.path(i)
            if not p.exists():
                raise MissingRaster(f"missing raster {p}")
            if len(self._cache) > 4:
                self._cache.pop(next(iter(self._cache)))
            self._cache[i] = read_pgm(p, i)
        return self._cache[i]
