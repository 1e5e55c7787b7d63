"""Exact glyph geometry: point-to-curve distance, winding numbers, corners.

Sign convention: positive signed distance inside the glyph (nonzero
winding), negative outside.  All routines are pure and vectorized over
query points where it matters; the scalar entry points simply wrap the
batched ones.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError

# Corner threshold from the outline-angle heuristic: a junction is a corner
# when the angle between the two curve rays is below ~171 degrees.
CORNER_ANGLE_DEFAULT = 3.0  # radians

_CHUNK = 1 << 17


def eval_segment(pts, t):
    """Evaluate a Bezier segment (2-4 control points) at parameter(s) t."""
    t = np.asarray(t, dtype=np.float64)
    s = 1.0 - t
    if len(pts) == 2:
        return np.outer(s, pts[0]) + np.outer(t, pts[1]) if t.ndim else s * pts[0] + t * pts[1]
    if len(pts) == 3:
        b0, b1, b2 = (s * s, 2 * s * t, t * t)
        coeffs = (b0, b1, b2)
    else:
        b0, b1, b2, b3 = (s * s * s, 3 * s * s * t, 3 * s * t * t, t * t * t)
        coeffs = (b0, b1, b2, b3)
    if t.ndim == 0:
        return sum(c * p for c, p in zip(coeffs, pts))
    return sum(np.outer(c, p) for c, p in zip(coeffs, pts))


def eval_derivative(pts, t):
    """First derivative of a Bezier segment at parameter(s) t."""
    t = np.asarray(t, dtype=np.float64)
    if len(pts) == 2:
        d = pts[1] - pts[0]
        return np.broadcast_to(d, t.shape + (2,)).copy() if t.ndim else d.copy()
    s = 1.0 - t
    if len(pts) == 3:
        d0, d1 = 2 * (pts[1] - pts[0]), 2 * (pts[2] - pts[1])
        coeffs = (s, t)
        deltas = (d0, d1)
    else:
        d0, d1, d2 = 3 * (pts[1] - pts[0]), 3 * (pts[2] - pts[1]), 3 * (pts[3] - pts[2])
        coeffs = (s * s, 2 * s * t, t * t)
        deltas = (d0, d1, d2)
    if t.ndim == 0:
        return sum(c * d for c, d in zip(coeffs, deltas))
    return sum(np.outer(c, d) for c, d in zip(coeffs, deltas))


def eval_second_derivative(pts, t):
    t = np.asarray(t, dtype=np.float64)
    if len(pts) == 2:
        return np.zeros(t.shape + (2,)) if t.ndim else np.zeros(2)
    if len(pts) == 3:
        dd = 2 * (pts[2] - 2 * pts[1] + pts[0])
        return np.broadcast_to(dd, t.shape + (2,)).copy() if t.ndim else dd.copy()
    a = 6 * (pts[2] - 2 * pts[1] + pts[0])
    b = 6 * (pts[3] - 2 * pts[2] + pts[1])
    s = 1.0 - t
    if t.ndim == 0:
        return s * a + t * b
    return np.outer(s, a) + np.outer(t, b)


def _nearest_line(pts, P):
    a, b = pts[0], pts[1]
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        t = np.zeros(len(P))
    else:
        t = np.clip(((P - a) @ ab) / denom, 0.0, 1.0)
    diff = P - (a + t[:, None] * ab)
    return np.sqrt(np.einsum("ij,ij->i", diff, diff)), t


def _nearest_curve(pts, P, n_init, n_newton):
    """Nearest parameter on a quadratic/cubic for every row of P.

    Seeds from a uniform parameter sweep, then polishes with damped Newton
    on f(t) = (P - B(t)) . B'(t), clamped to the seed's bracketing interval
    so the iteration cannot escape its basin.
    """
    ts = np.linspace(0.0, 1.0, n_init)
    C = eval_segment(pts, ts)  # (n_init, 2)
    best_t = np.empty(len(P))
    best_d2 = np.full(len(P), np.inf)
    # distance to every sample; chunk the point axis to bound memory
    for s in range(0, len(P), _CHUNK):
        block = P[s : s + _CHUNK]
        d2 = (
            (block[:, None, 0] - C[None, :, 0]) ** 2
            + (block[:, None, 1] - C[None, :, 1]) ** 2
        )
        j = np.argmin(d2, axis=1)
        best_t[s : s + _CHUNK] = ts[j]
        best_d2[s : s + _CHUNK] = d2[np.arange(len(block)), j]
    h = 1.0 / (n_init - 1)
    lo = np.clip(best_t - h, 0.0, 1.0)
    hi = np.clip(best_t + h, 0.0, 1.0)
    t = best_t.copy()
    for _ in range(n_newton):
        B = eval_segment(pts, t)
        B1 = eval_derivative(pts, t)
        B2 = eval_second_derivative(pts, t)
        diff = P - B
        f = np.einsum("ij,ij->i", diff, B1)
        fp = -np.einsum("ij,ij->i", B1, B1) + np.einsum("ij,ij->i", diff, B2)
        step = np.where(np.abs(fp) > 1e-30, f / np.where(fp == 0, 1.0, fp), 0.0)
        t = np.clip(t - step, lo, hi)
    diff = P - eval_segment(pts, t)
    d2 = np.einsum("ij,ij->i", diff, diff)
    # keep the seed when Newton failed to improve
    worse = d2 > best_d2
    t[worse] = best_t[worse]
    d2[worse] = best_d2[worse]
    return np.sqrt(d2), t


def nearest_on_segment(points, segment, n_init=32, n_newton=8):
    """Unsigned distance and nearest parameter for a batch of points."""
    P = np.atleast_2d(np.asarray(points, dtype=np.float64))
    pts = segment.points if hasattr(segment, "points") else np.asarray(segment, float)
    if len(pts) == 2:
        return _nearest_line(pts, P)
    return _nearest_curve(pts, P, n_init, n_newton)


def segment_distance(p, segment):
    """Global minimum distance from a single point to a segment.

    Returns (distance, t).  Ties resolve to the smallest parameter: the
    dense seed sweep scans t in increasing order and ``argmin`` keeps the
    first minimum, so the polished result comes from the lowest-t basin.
    """
    P = np.asarray(p, dtype=np.float64)[None, :]
    pts = segment.points if hasattr(segment, "points") else np.asarray(segment, float)
    if len(pts) == 2:
        d, t = _nearest_line(pts, P)
    else:
        d, t = _nearest_curve(pts, P, n_init=257, n_newton=24)
    return float(d[0]), float(t[0])


# ---------------------------------------------------------------------------
# winding numbers via y-monotone pieces


@dataclass
class _MonotonePiece:
    pts: np.ndarray  # segment control points
    t0: float
    t1: float
    y0: float
    y1: float

    @property
    def upward(self):
        return self.y1 > self.y0


def _derivative_roots_y(pts):
    """Interior parameters where the segment's y-derivative vanishes."""
    ys = pts[:, 1]
    if len(pts) == 2:
        return []
    if len(pts) == 3:
        denom = ys[0] - 2 * ys[1] + ys[2]
        if denom == 0:
            return []
        r = (ys[0] - ys[1]) / denom
        return [r] if 0 < r < 1 else []
    # cubic: y'(t) ~ (1-t)^2 d0 + 2(1-t)t d1 + t^2 d2
    d0, d1, d2 = ys[1] - ys[0], ys[2] - ys[1], ys[3] - ys[2]
    a = d0 - 2 * d1 + d2
    b = 2 * (d1 - d0)
    c = d0
    roots = []
    if a == 0:
        if b != 0:
            roots.append(-c / b)
    else:
        disc = b * b - 4 * a * c
        if disc >= 0:
            sq = math.sqrt(disc)
            # numerically stable pair
            q = -0.5 * (b + math.copysign(sq, b)) if b != 0 else 0.5 * sq
            if b == 0:
                roots.extend((sq / (2 * a), -sq / (2 * a)))
            else:
                roots.append(q / a)
                if q != 0:
                    roots.append(c / q)
    return sorted(r for r in roots if 0 < r < 1)


def monotone_pieces(glyph):
    """Split every segment into y-monotone pieces (horizontal runs dropped)."""
    pieces = []
    for contour in glyph.contours:
        for seg in contour.segments:
            pts = seg.points
            knots = [0.0] + _derivative_roots_y(pts) + [1.0]
            ys = [float(eval_segment(pts, np.float64(t))[1]) for t in knots]
            for (ta, tb), (ya, yb) in zip(zip(knots, knots[1:]), zip(ys, ys[1:])):
                if ya != yb:
                    pieces.append(_MonotonePiece(pts, ta, tb, ya, yb))
    return pieces


def _piece_crossing_x(piece, y):
    """x coordinate where the piece crosses heights y (bisection on t)."""
    pts = piece.pts
    if len(pts) == 2:
        t = (y - pts[0, 1]) / (pts[1, 1] - pts[0, 1])
        return pts[0, 0] + t * (pts[1, 0] - pts[0, 0])
    if piece.upward:
        a = np.full(len(y), piece.t0)
        b = np.full(len(y), piece.t1)
    else:
        a = np.full(len(y), piece.t1)
        b = np.full(len(y), piece.t0)
    # y(t) is monotone increasing from a to b
    for _ in range(52):
        m = 0.5 * (a + b)
        ym = eval_segment(pts, m)[:, 1]
        below = ym < y
        a = np.where(below, m, a)
        b = np.where(below, b, m)
    t = 0.5 * (a + b)
    return eval_segment(pts, t)[:, 0]


def winding_batch(points, glyph, pieces=None):
    """Nonzero-rule winding number for a batch of points.

    Each y-monotone piece counts a crossing when the query height lies in
    the half-open interval [min(y), max(y)) of the piece and the crossing
    sits strictly right of the query.  The half-open rule makes junction
    hits exact: pass-throughs count once, tangential touches cancel.
    """
    P = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pieces is None:
        pieces = monotone_pieces(glyph)
    w = np.zeros(len(P), dtype=np.int64)
    for piece in pieces:
        ylo, yhi = (piece.y0, piece.y1) if piece.upward else (piece.y1, piece.y0)
        sel = (P[:, 1] >= ylo) & (P[:, 1] < yhi)
        if not sel.any():
            continue
        x = _piece_crossing_x(piece, P[sel, 1])
        direction = 1 if piece.upward else -1
        hits = x > P[sel, 0]
        idx = np.flatnonzero(sel)[hits]
        w[idx] += direction
    return w


def winding_number(p, glyph, pieces=None):
    return int(winding_batch(np.asarray(p, float)[None, :], glyph, pieces)[0])


# ---------------------------------------------------------------------------
# signed distance


def _all_segments(glyph):
    return [seg for contour in glyph.contours for seg in contour.segments]


def distance_batch(points, glyph, n_init=32, n_newton=8):
    """Unsigned distance from each point to the nearest outline point."""
    P = np.atleast_2d(np.asarray(points, dtype=np.float64))
    best = np.full(len(P), np.inf)
    for seg in _all_segments(glyph):
        d, _ = nearest_on_segment(P, seg, n_init=n_init, n_newton=n_newton)
        np.minimum(best, d, out=best)
    return best


def sdf_batch(points, glyph, pieces=None, n_init=32, n_newton=8):
    """Signed distance (positive inside) for a batch of points."""
    P = np.atleast_2d(np.asarray(points, dtype=np.float64))
    d = distance_batch(P, glyph, n_init=n_init, n_newton=n_newton)
    w = winding_batch(P, glyph, pieces)
    return np.where(w != 0, d, -d)


def glyph_sdf(p, glyph):
    """Signed distance from a single point; positive inside the glyph."""
    P = np.asarray(p, dtype=np.float64)[None, :]
    best = np.inf
    for seg in _all_segments(glyph):
        d, _ = segment_distance(P[0], seg)
        best = min(best, d)
    inside = winding_number(P[0], glyph) != 0
    return best if inside else -best


def pixel_centers(width, height=None):
    """Pixel-center grid over [-1, 1]^2: x_j=(j+.5)/W*2-1, y_i=(i+.5)/H*2-1.

    Returns an (H, W, 2) array; row i corresponds to y_i (row 0 at the
    bottom of the field domain).
    """
    if height is None:
        height = width
    xs = (np.arange(width) + 0.5) / width * 2.0 - 1.0
    ys = (np.arange(height) + 0.5) / height * 2.0 - 1.0
    grid = np.empty((height, width, 2))
    grid[..., 0] = xs[None, :]
    grid[..., 1] = ys[:, None]
    return grid


def sdf_grid(glyph, width, height=None, n_init=32, n_newton=8):
    """Exact signed distance sampled at all pixel centers, shape (H, W)."""
    if height is None:
        height = width
    pts = pixel_centers(width, height).reshape(-1, 2)
    pieces = monotone_pieces(glyph)
    out = np.empty(len(pts))
    for s in range(0, len(pts), _CHUNK):
        out[s : s + _CHUNK] = sdf_batch(
            pts[s : s + _CHUNK], glyph, pieces, n_init=n_init, n_newton=n_newton
        )
    return out.reshape(height, width)


# ---------------------------------------------------------------------------
# corner detection


@dataclass
class Corner:
    """A sharp junction between consecutive segments.

    ``tangent_in`` is the unit travel direction arriving at the corner,
    ``tangent_out`` the unit direction leaving it.  ``interior_angle`` is
    the angle between the reversed incoming ray and the outgoing ray (pi
    for a straight join).  ``convex`` is relative to the ink: True when the
    ink occupies the non-reflex wedge.
    """

    position: np.ndarray
    tangent_in: np.ndarray
    tangent_out: np.ndarray
    interior_angle: float
    convex: bool
    contour_index: int = 0
    junction_index: int = 0


def _unit_tangent(seg, t, contour_index, seg_index):
    d = eval_derivative(seg.points, np.float64(t))
    norm = float(np.hypot(d[0], d[1]))
    if norm < 1e-12:
        raise GeometryError(
            f"zero-length tangent at t={t} on contour {contour_index}, "
            f"segment {seg_index} (degenerate control points)"
        )
    return d / norm


def _contour_ink_side(glyph, contour, pieces):
    """+1 when ink lies to the left of the travel direction, else -1.

    Probes the winding number a small step to the left of the midpoint of
    the longest segment (by control-polygon length).
    """
    lengths = [
        float(np.sum(np.hypot(*(np.diff(s.points, axis=0).T)))) for s in contour.segments
    ]
    order = np.argsort(lengths)[::-1]
    for idx in order:
        seg = contour.segments[idx]
        mid = eval_segment(seg.points, np.float64(0.5))
        d = eval_derivative(seg.points, np.float64(0.5))
        norm = float(np.hypot(d[0], d[1]))
        if norm < 1e-12:
            continue
        left = np.array([-d[1], d[0]]) / norm
        probe = mid + 1e-4 * left
        return 1 if winding_number(probe, glyph, pieces) != 0 else -1
    raise GeometryError("cannot determine ink side: contour has no usable tangent")


def detect_corners(glyph, threshold=CORNER_ANGLE_DEFAULT):
    """Find junctions whose interior angle is below ``threshold`` radians.

    Every junction between consecutive segments (including the closing
    junction) is examined.  Convexity comes from the cross product of the
    travel tangents, oriented by the contour's actual ink side.
    """
    if not 0 < threshold < math.pi:
        raise GeometryError(f"corner threshold must be in (0, pi), got {threshold}")
    pieces = monotone_pieces(glyph)
    corners = []
    for ci, contour in enumerate(glyph.contours):
        ink_side = None
        n = len(contour.segments)
        for i in range(n):
            seg_in = contour.segments[i]
            seg_out = contour.segments[(i + 1) % n]
            u = _unit_tangent(seg_in, 1.0, ci, i)
            v = _unit_tangent(seg_out, 0.0, ci, (i + 1) % n)
            cos_int = float(np.clip(-(u @ v), -1.0, 1.0))
            interior = math.acos(cos_int)
            if interior >= threshold:
                continue
            if ink_side is None:
                ink_side = _contour_ink_side(glyph, contour, pieces)
            cross = u[0] * v[1] - u[1] * v[0]
            corners.append(
                Corner(
                    position=seg_out.start.copy(),
                    tangent_in=u,
                    tangent_out=v,
                    interior_angle=interior,
                    convex=bool(ink_side * cross > 0),
                    contour_index=ci,
                    junction_index=(i + 1) % n,
                )
            )
    return corners
