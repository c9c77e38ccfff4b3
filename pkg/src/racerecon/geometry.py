"""Planar projective mappings between the water plane and the image.

Homographies are stored world -> image. Use ``invert`` for the image -> world
direction so that only one matrix per frame is ever estimated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    DegenerateConfiguration,
    InsufficientInliers,
    PointAtInfinity,
    SingularMatrix,
)


class Correspondence(NamedTuple):
    image: tuple[float, float]
    world: tuple[float, float]


@dataclass(frozen=True, eq=False)
class Homography:
    m: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float).reshape(3, 3)
        if not np.all(np.isfinite(m)):
            raise SingularMatrix("homography has non-finite entries")
        if abs(m[2, 2]) > 1e-12 * np.abs(m).max():
            m = m / m[2, 2]
        sv = np.linalg.svd(m, compute_uv=False)
        if sv[0] == 0 or sv[-1] < 1e-12 * sv[0]:
            raise SingularMatrix("homography is singular")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    def __call__(self, pts):
        return apply(self, pts)

    def with_frame(self, frame_index: int) -> "Homography":
        return Homography(self.m, frame_index)


@dataclass
class FitReport:
    inlier_mask: np.ndarray
    rms_reprojection_px: float
    iterations: int

    @property
    def inlier_count(self) -> int:
        return int(np.count_nonzero(self.inlier_mask))


def apply(h: Homography, pts) -> np.ndarray:
    """Map a point (shape (2,)) or points (shape (n, 2)) through ``h``.

    Output is (m @ [u, v, 1]) divided by its third homogeneous component w.
    """
    p = np.asarray(pts, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    q = p @ h.m[:, :2].T + h.m[:, 2]
    w = q[:, 2]
    if np.any(np.abs(w) < 1e-12):
        raise PointAtInfinity("point maps to infinity (|w| < 1e-12)")
    out = q[:, :2] / w[:, None]
    return out[0] if single else out


def invert(h: Homography) -> Homography:
    try:
        inv = np.linalg.inv(h.m)
    except np.linalg.LinAlgError:
        raise SingularMatrix("homography is not invertible") from None
    return Homography(inv, h.frame_index)


def _normalizer(pts: np.ndarray) -> np.ndarray:
    # isotropic: centroid to origin, mean distance sqrt(2)
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    if d < 1e-15:
        raise DegenerateConfiguration("all points coincide")
    s = math.sqrt(2) / d
    return np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])


def _design(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """DLT design rows for dst ~ H src. Works on (..., n, 2) arrays."""
    x, y = src[..., 0], src[..., 1]
    u, v = dst[..., 0], dst[..., 1]
    one, zero = np.ones_like(x), np.zeros_like(x)
    r1 = np.stack([x, y, one, zero, zero, zero, -u * x, -u * y, -u], axis=-1)
    r2 = np.stack([zero, zero, zero, x, y, one, -v * x, -v * y, -v], axis=-1)
    return np.concatenate([r1, r2], axis=-2)


def _split(corrs) -> tuple[np.ndarray, np.ndarray]:
    img = np.array([c[0] for c in corrs], dtype=float).reshape(-1, 2)
    wld = np.array([c[1] for c in corrs], dtype=float).reshape(-1, 2)
    return img, wld


def _collinear(pts: np.ndarray, tol: float = 1e-9) -> bool:
    c = pts - pts.mean(axis=0)
    s = np.linalg.svd(c, compute_uv=False)
    return s[0] == 0 or s[-1] / s[0] < tol


def _dlt(world: np.ndarray, image: np.ndarray) -> np.ndarray:
    if len(world) < 4:
        raise DegenerateConfiguration("need at least 4 correspondences")
    if _collinear(world) or _collinear(image):
        raise DegenerateConfiguration("points are collinear")
    tw, ti = _normalizer(world), _normalizer(image)
    wn = world @ tw[:2, :2].T + tw[:2, 2]
    im = image @ ti[:2, :2].T + ti[:2, 2]
    a = _design(wn, im)
    _, s, vt = np.linalg.svd(a)
    if s[7] < 1e-10 * s[0]:
        raise DegenerateConfiguration("design matrix is rank deficient")
    hn = vt[-1].reshape(3, 3)
    return np.linalg.inv(ti) @ hn @ tw


def estimate_dlt(corrs, frame_index: int = 0) -> Homography:
    """Least-squares world -> image homography from >= 4 correspondences."""
    image, world = _split(corrs)
    m = _dlt(world, image)
    try:
        return Homography(m, frame_index)
    except SingularMatrix:
        raise DegenerateConfiguration("estimated homography is singular") from None


def reprojection_errors(h: Homography, corrs) -> np.ndarray:
    image, world = _split(corrs)
    return np.linalg.norm(apply(h, world) - image, axis=1)


def _sample_ok(pts: np.ndarray, eps: float) -> np.ndarray:
    # pts: (b, 4, 2); every triangle of the 4 points must have area > eps
    ok = np.ones(pts.shape[0], dtype=bool)
    for i, j, k in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
        a, b, c = pts[:, i], pts[:, j], pts[:, k]
        area = 0.5 * np.abs((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                            - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
        ok &= area > eps
    return ok


def estimate_ransac(corrs, threshold_px: float = 3.0, max_iters: int = 2000,
                    seed: int = 0, confidence: float = 0.999,
                    frame_index: int = 0, batch: int = 64):
    """Robust homography fit maximizing the inlier count.

    Minimal 4-point hypotheses are scored by reprojection error in the
    image; the winner is refit on its inliers with ``estimate_dlt``.
    Deterministic for a given seed.
    """
    image, world = _split(corrs)
    n = len(image)
    if n < 4:
        raise InsufficientInliers(f"{n} correspondences, need at least 4")
    try:
        tw, ti = _normalizer(world), _normalizer(image)
    except DegenerateConfiguration:
        raise InsufficientInliers("correspondences coincide") from None
    wn = world @ tw[:2, :2].T + tw[:2, 2]
    im = image @ ti[:2, :2].T + ti[:2, 2]
    ti_inv = np.linalg.inv(ti)
    rng = np.random.default_rng(seed)
    wh = np.c_[world, np.ones(n)]

    best_count, best_cost, best_mask = 0, np.inf, None
    iters, needed = 0, max_iters
    thr2 = threshold_px ** 2
    while iters < min(max_iters, needed):
        b = min(batch, max_iters - iters)
        idx = np.argsort(rng.random((b, n)), axis=1)[:, :4]
        iters += b
        ok = _sample_ok(wn[idx], 1e-3) & _sample_ok(im[idx], 1e-3)
        if not ok.any():
            continue
        idx = idx[ok]
        a = _design(wn[idx], im[idx])
        _, _, vt = np.linalg.svd(a)
        hs = ti_inv @ vt[:, -1].reshape(-1, 3, 3) @ tw
        q = np.einsum("bij,nj->bni", hs, wh)
        w = q[..., 2]
        good_w = np.abs(w) > 1e-12
        with np.errstate(divide="ignore", invalid="ignore"):
            proj = q[..., :2] / w[..., None]
        err2 = ((proj - image) ** 2).sum(-1)
        err2 = np.where(good_w & np.isfinite(err2), err2, np.inf)
        inl = err2 < thr2
        counts = inl.sum(1)
        costs = np.minimum(err2, thr2).sum(1)
        order = np.lexsort((costs, -counts))
        k = order[0]
        if counts[k] > best_count or (counts[k] == best_count and costs[k] < best_cost):
            best_count, best_cost, best_mask = int(counts[k]), float(costs[k]), inl[k]
            frac = best_count / n
            if frac >= 1.0:
                needed = 0
            else:
                denom = math.log(max(1e-300, 1 - frac ** 4))
                needed = min(max_iters, int(math.ceil(math.log(1 - confidence) / denom))) if denom < 0 else max_iters

    if best_mask is None or best_count < 4:
        raise InsufficientInliers(f"best consensus {best_count} < 4")

    mask = best_mask
    h = None
    for _ in range(5):
        sel = np.flatnonzero(mask)
        try:
            m = _dlt(world[sel], image[sel])
            cand = Homography(m, frame_index)
        except (DegenerateConfiguration, SingularMatrix):
            if h is None:
                raise InsufficientInliers("inlier set is degenerate") from None
            break
        err = np.linalg.norm(apply(cand, world) - image, axis=1)
        new_mask = err < threshold_px
        if new_mask.sum() < 4:
            if h is None:
                raise InsufficientInliers("refit lost consensus")
            break
        h, final_err = cand, err
        if np.array_equal(new_mask, mask):
            break
        mask = new_mask
    mask = final_err < threshold_px
    rms = float(np.sqrt(np.mean(final_err[mask] ** 2))) if mask.any() else float("nan")
    return h, FitReport(mask, rms, iters)
