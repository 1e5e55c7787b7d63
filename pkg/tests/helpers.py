"""Shared test fixtures: canonical shapes and independent oracles.

The oracles here must stay independent of the package's own geometry
paths: dense parameter sweeps for nearest points, polygon fill + euclidean
distance transform for signed-distance grids, closed-form box fields.
"""
from __future__ import annotations

import numpy as np

from glyphsdf import glyphs

SQUARE_PATH = "M 0 0 L 1 0 L 1 1 L 0 1 Z"

# L-polygon (CCW): a square with the upper-right quadrant removed; one
# concave corner at the notch
L_PATH = "M 0 0 L 1 0 L 1 0.45 L 0.55 0.45 L 0.55 1 L 0 1 Z"

# square ring: outer CCW + inner CW hole
RING_PATH = (
    "M 0 0 L 1 0 L 1 1 L 0 1 Z\n"
    "M 0.3 0.3 L 0.3 0.7 L 0.7 0.7 L 0.7 0.3 Z"
)


def square_glyph(label=0, family_id="fam"):
    return glyphs.glyph_from_path(SQUARE_PATH, label=label, family_id=family_id)


def ring_path(margin):
    """Square ring; wall thickness grows with ``margin``."""
    a, b = margin, 1.0 - margin
    return (
        "M 0 0 L 1 0 L 1 1 L 0 1 Z\n"
        f"M {a} {a} L {a} {b} L {b} {b} L {b} {a} Z"
    )


def l_path(w):
    return f"M 0 0 L 1 0 L 1 {w} L {w} {w} L {w} 1 L 0 1 Z"


def t_path(w):
    lo, hi = 0.5 - w / 2, 0.5 + w / 2
    return f"M 0 1 L 0 {1 - w} L {lo} {1 - w} L {lo} 0 L {hi} 0 L {hi} {1 - w} L 1 {1 - w} L 1 1 Z"


def diamond_ring_path(r2):
    """Diamond outline with a diamond hole of 'radius' r2 (outer 0.5)."""
    lo, hi = 0.5 - r2, 0.5 + r2
    return (
        "M 0.5 0 L 1 0.5 L 0.5 1 L 0 0.5 Z\n"
        f"M 0.5 {lo} L {lo} 0.5 L 0.5 {hi} L {hi} 0.5 Z"
    )


# two synthetic "font families" x four glyph labels: same shapes, different
# stroke weights
MINIFAM_PATHS = {
    "thin": [ring_path(0.20), l_path(0.32), t_path(0.30), diamond_ring_path(0.24)],
    "bold": [ring_path(0.34), l_path(0.55), t_path(0.50), diamond_ring_path(0.12)],
}


def minifam_dataset():
    """(family_id, family_index, label, glyph) for the 2x4 mini family."""
    out = []
    for fi, (fam, paths) in enumerate(MINIFAM_PATHS.items()):
        for label, path in enumerate(paths):
            out.append((fam, fi, label, glyphs.glyph_from_path(path, label=label, family_id=fam)))
    return out


def l_glyph(label=0, family_id="fam"):
    return glyphs.glyph_from_path(L_PATH, label=label, family_id=family_id)


def ring_glyph(label=0, family_id="fam"):
    return glyphs.glyph_from_path(RING_PATH, label=label, family_id=family_id)


def box_sdf(points, half):
    """Closed-form signed distance to an origin-centered axis-aligned square
    of half-width ``half``; positive inside."""
    p = np.abs(np.atleast_2d(points))
    q = p - half
    outside = np.sqrt(np.sum(np.maximum(q, 0.0) ** 2, axis=-1))
    inside = np.minimum(np.maximum(q[..., 0], q[..., 1]), 0.0)
    return -(outside + inside)


def dense_sweep_nearest(ctrl, p, n=100_000):
    """Brute-force nearest point on a Bezier: uniform sweep + parabolic
    refinement around the best sample."""
    ctrl = np.asarray(ctrl, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    ts = np.linspace(0.0, 1.0, n)
    pts = _bezier(ctrl, ts)
    d2 = np.sum((pts - p) ** 2, axis=1)
    j = int(np.argmin(d2))
    lo = max(j - 2, 0)
    hi = min(j + 2, n - 1)
    a, b = ts[lo], ts[hi]
    for _ in range(200):
        m1 = a + (b - a) / 3
        m2 = b - (b - a) / 3
        f1 = np.sum((_bezier(ctrl, np.array([m1]))[0] - p) ** 2)
        f2 = np.sum((_bezier(ctrl, np.array([m2]))[0] - p) ** 2)
        if f1 < f2:
            b = m2
        else:
            a = m1
    t = 0.5 * (a + b)
    d = np.sqrt(np.sum((_bezier(ctrl, np.array([t]))[0] - p) ** 2))
    return d, t


def _bezier(ctrl, ts):
    s = 1.0 - ts
    if len(ctrl) == 2:
        return np.outer(s, ctrl[0]) + np.outer(ts, ctrl[1])
    if len(ctrl) == 3:
        return (
            np.outer(s * s, ctrl[0])
            + np.outer(2 * s * ts, ctrl[1])
            + np.outer(ts * ts, ctrl[2])
        )
    return (
        np.outer(s**3, ctrl[0])
        + np.outer(3 * s * s * ts, ctrl[1])
        + np.outer(3 * s * ts * ts, ctrl[2])
        + np.outer(ts**3, ctrl[3])
    )


def flatten_contour(contour, per_segment=512):
    """Polyline approximation of a contour (oracle use only).

    Lines contribute their endpoints; curves a dense sweep.
    """
    pts = []
    for seg in contour.segments:
        if len(seg.points) == 2:
            pts.append(seg.points[:1])
        else:
            ts = np.linspace(0.0, 1.0, per_segment, endpoint=False)
            pts.append(_bezier(seg.points, ts))
    return np.concatenate(pts, axis=0)


def even_odd_mask(glyph, width):
    """Inside mask at pixel centers via the even-odd crossing rule.

    Independent re-derivation: per polygon edge, a horizontal ray to +x
    crosses when the edge straddles the query height (half-open) and the
    crossing sits right of the query.
    """
    xs = (np.arange(width) + 0.5) / width * 2.0 - 1.0
    ys = (np.arange(width) + 0.5) / width * 2.0 - 1.0
    X, Y = np.meshgrid(xs, ys)
    crossings = np.zeros((width, width), dtype=np.int64)
    for contour in glyph.contours:
        poly = flatten_contour(contour)
        a = poly
        b = np.roll(poly, -1, axis=0)
        for (x0, y0), (x1, y1) in zip(a, b):
            if y0 == y1:
                continue
            straddle = (Y >= min(y0, y1)) & (Y < max(y0, y1))
            t = (Y - y0) / (y1 - y0)
            xc = x0 + t * (x1 - x0)
            crossings += (straddle & (xc > X)).astype(np.int64)
    return crossings % 2 == 1


def edt_sdf_oracle(glyph, width, holes=None):
    """Signed distance grid via exact fill + euclidean distance transform.

    Distances are measured between pixel centers; the half-pixel offset
    between a center-to-center distance and the true boundary distance is
    compensated, leaving about +-0.7 pixel of worst-case error.  Use with
    a one-pixel tolerance.  ``holes`` is accepted for signature clarity
    only; the even-odd rule handles them automatically.
    """
    from scipy.ndimage import distance_transform_edt

    mask = even_odd_mask(glyph, width)
    d_in = distance_transform_edt(mask)
    d_out = distance_transform_edt(~mask)
    sdf_px = np.where(mask, d_in - 0.5, -(d_out - 0.5))
    return sdf_px * (2.0 / width)
