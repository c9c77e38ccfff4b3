"""Tiny SVG writer for profile and Bland-Altman plots."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
W, H, M = 640, 360, 50


def _scale(lo, hi, a, b):
    if not np.isfinite(lo) or not np.isfinite(hi) or hi == lo:
        lo, hi = (lo - 1, hi + 1) if np.isfinite(lo) else (0.0, 1.0)
    return lambda v: a + (np.asarray(v, dtype=float) - lo) / (hi - lo) * (b - a)


def _frame(title, xlabel, ylabel, xr, yr):
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">',
             f'<rect width="{W}" height="{H}" fill="white"/>',
             f'<text x="{W / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
             f'<text x="{W / 2}" y="{H - 8}" text-anchor="middle">{escape(xlabel)}</text>',
             f'<text x="14" y="{H / 2}" text-anchor="middle" transform="rotate(-90 14 {H / 2})">{escape(ylabel)}</text>',
             f'<rect x="{M}" y="{M / 2 + 5}" width="{W - 1.5 * M}" height="{H - 2 * M}" fill="none" stroke="#444"/>']
    for v, lab in ((0, f"{xr[0]:.4g}"), (1, f"{xr[1]:.4g}")):
        x = M + v * (W - 1.5 * M)
        parts.append(f'<text x="{x:.1f}" y="{H - M + 30 - 8}" text-anchor="middle">{lab}</text>')
    for v, lab in ((0, f"{yr[0]:.4g}"), (1, f"{yr[1]:.4g}")):
        y = H - M + 5 - v * (H - 2 * M)
        parts.append(f'<text x="{M - 4}" y="{y:.1f}" text-anchor="end">{lab}</text>')
    return parts


def _ranges(xs, ys):
    xs = np.concatenate([np.asarray(x, float).ravel() for x in xs]) if xs else np.zeros(1)
    ys = np.concatenate([np.asarray(y, float).ravel() for y in ys]) if ys else np.zeros(1)
    xs, ys = xs[np.isfinite(xs)], ys[np.isfinite(ys)]
    xr = (xs.min(), xs.max()) if len(xs) else (0.0, 1.0)
    yr = (ys.min(), ys.max()) if len(ys) else (0.0, 1.0)
    pad = 0.05 * (yr[1] - yr[0] or 1.0)
    return xr, (yr[0] - pad, yr[1] + pad)


def line_plot(path, series, title="", xlabel="", ylabel="") -> None:
    """``series``: list of (x, y, label); NaN breaks a line."""
    xr, yr = _ranges([s[0] for s in series], [s[1] for s in series])
    sx = _scale(*xr, M, W - M / 2)
    sy = _scale(*yr, H - M + 5, M / 2 + 5)
    parts = _frame(title, xlabel, ylabel, xr, yr)
    for k, (x, y, label) in enumerate(series):
        color = COLORS[k % len(COLORS)]
        x, y = np.asarray(x, float), np.asarray(y, float)
        ok = np.isfinite(x) & np.isfinite(y)
        runs = np.split(np.arange(len(x)), np.flatnonzero(np.diff(ok.astype(int)) != 0) + 1)
        for r in runs:
            if len(r) and ok[r[0]]:
                pts = " ".join(f"{a:.1f},{b:.1f}" for a, b in zip(sx(x[r]), sy(y[r])))
                parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{W - M}" y="{M / 2 + 20 + 14 * k}" text-anchor="end" fill="{color}">{escape(label)}</text>')
    parts.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(parts))


def bland_altman_plot(path, pred, truth, ba, title="Bland-Altman", unit="") -> None:
    """Scatter of differences against means with the mean and limit lines."""
    a, b = np.asarray(pred, float), np.asarray(truth, float)
    ok = np.isfinite(a) & np.isfinite(b)
    mean, diff = (a[ok] + b[ok]) / 2, a[ok] - b[ok]
    lines = [v for v in (ba.mean_diff, ba.lo, ba.hi) if np.isfinite(v)]
    xr, yr = _ranges([mean], [diff, np.array(lines)])
    sx = _scale(*xr, M, W - M / 2)
    sy = _scale(*yr, H - M + 5, M / 2 + 5)
    parts = _frame(title, f"mean of methods {unit}".strip(), f"difference {unit}".strip(), xr, yr)
    for x, y in zip(sx(mean), sy(diff)):
        parts.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="2.5" fill="{COLORS[0]}"/>')
    for v, dash in zip((ba.mean_diff, ba.lo, ba.hi), ("", "4 3", "4 3")):
        if np.isfinite(v):
            y = float(sy(v))
            parts.append(f'<line x1="{M}" x2="{W - M / 2}" y1="{y:.1f}" y2="{y:.1f}" stroke="{COLORS[1]}"'
                         + (f' stroke-dasharray="{dash}"' if dash else "") + "/>")
    parts.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(parts))
