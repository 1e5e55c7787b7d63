"""Resolution-independent rendering, level-set extraction, image output.

Two re-sampling routes produce an image at any width W:

* implicit: evaluate the network densely at the W^2 pixel centers, take
  the per-pixel median of the distance channels, apply the opacity kernel
  with gamma = aa_k / W (the anti-alias band stays ~aa_k output pixels
  wide at every resolution);
* bilateral: bilinearly upsample the stored train-resolution distance
  grid per channel, then median + kernel as above.

Pixel-supervised models skip the kernel and clip the median directly.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import autodecoder as ad
from . import geometry
from .field import compose_median, kernel


def field_grid(bundle, z, label, width, chunk=65536):
    """Raw channel outputs at all pixel centers, shape (n, W, W)."""
    pts = geometry.pixel_centers(width).reshape(-1, 2)
    out = ad.evaluate(bundle.network, bundle.params, pts, label, z, chunk=chunk)
    n = bundle.network.out_channels
    return out.T.reshape(n, width, width)


def _finish(channels, width, aa_k, supervision):
    med = compose_median(channels, axis=0)
    if supervision == "sdf":
        return kernel(med, aa_k / width)
    return np.clip(med, 0.0, 1.0)


def render_implicit(bundle, z, label, width):
    """Dense network evaluation at the target resolution; (W, W) in [0,1]."""
    if width < 8:
        raise ValueError(f"render width must be >= 8, got {width}")
    grid = field_grid(bundle, z, label, width)
    return _finish(grid, width, bundle.aa_k, bundle.supervision)


def bilinear_resample(grid, width):
    """Bilinearly resample (n, h, w) channels to (n, width, width).

    Pixel centers on both sides follow the ((j+0.5)/W*2-1) convention, so
    resampling at the source width is the identity.  Downsampling is
    allowed.  Border pixels clamp to the outermost source centers.
    """
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim == 2:
        g = g[None]
    n, h, w = g.shape
    xt = ((np.arange(width) + 0.5) / width) * w - 0.5
    yt = ((np.arange(width) + 0.5) / width) * h - 0.5
    x0 = np.clip(np.floor(xt).astype(int), 0, w - 1)
    y0 = np.clip(np.floor(yt).astype(int), 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = np.clip(xt - x0, 0.0, 1.0)
    fy = np.clip(yt - y0, 0.0, 1.0)
    out = np.empty((n, width, width))
    for c in range(n):
        ch = g[c]
        top = ch[np.ix_(y0, x0)] * (1 - fx) + ch[np.ix_(y0, x1)] * fx
        bot = ch[np.ix_(y1, x0)] * (1 - fx) + ch[np.ix_(y1, x1)] * fx
        out[c] = top * (1 - fy[:, None]) + bot * fy[:, None]
    return out


def render_bilateral(grid, width, aa_k=4.0, supervision="sdf"):
    """Upsample a stored field grid and compose; (W, W) in [0, 1]."""
    up = bilinear_resample(grid, width)
    return _finish(up, width, aa_k, supervision)


# ---------------------------------------------------------------------------
# zero-level-set extraction (marching squares, linear interpolation)

# segment endpoints per corner-sign case, oriented with the positive region
# on the left of travel so adjacent cells chain head-to-tail
_MS_LUT = {
    (True, False, False, False): [("t", "l")],
    (False, True, False, False): [("r", "t")],
    (False, False, True, False): [("b", "r")],
    (False, False, False, True): [("l", "b")],
    (True, True, False, False): [("r", "l")],
    (False, True, True, False): [("b", "t")],
    (False, False, True, True): [("l", "r")],
    (True, False, False, True): [("t", "b")],
    (True, True, True, False): [("b", "l")],
    (True, True, False, True): [("r", "b")],
    (True, False, True, True): [("t", "r")],
    (False, True, True, True): [("l", "t")],
}


def extract_zero_level(grid):
    """Piecewise-linear contours of the zero level set of a scalar grid.

    Marching squares over pixel-center nodes with linear interpolation on
    the crossing edges.  The two ambiguous saddle cases are resolved by the
    sign of the cell-center sample (mean of the four corners), which is
    deterministic.  Returns a list of (m, 2) arrays in field coordinates;
    closed loops repeat their first vertex at the end.
    """
    f = np.asarray(grid, dtype=np.float64)
    h, w = f.shape
    if h < 2 or w < 2:
        return []
    inside = f > 0.0

    def node_xy(i, j):
        return ((j + 0.5) / w * 2.0 - 1.0, (i + 0.5) / h * 2.0 - 1.0)

    def interp(i0, j0, i1, j1):
        va, vb = f[i0, j0], f[i1, j1]
        t = va / (va - vb)
        xa, ya = node_xy(i0, j0)
        xb, yb = node_xy(i1, j1)
        return (xa + t * (xb - xa), ya + t * (yb - ya))

    # segments are (start_edge_id, end_edge_id, start_xy, end_xy); edge ids
    # name grid edges, so loops chain exactly with no coordinate tolerance
    segments = []
    for i in range(h - 1):
        for j in range(w - 1):
            key = (
                bool(inside[i, j]),
                bool(inside[i, j + 1]),
                bool(inside[i + 1, j + 1]),
                bool(inside[i + 1, j]),
            )
            if all(key) or not any(key):
                continue
            eid = {
                "t": ("h", i, j),
                "r": ("v", i, j + 1),
                "b": ("h", i + 1, j),
                "l": ("v", i, j),
            }
            # interpolate lazily: only crossing edges have a valid divisor
            corners_of = {
                "t": (i, j, i, j + 1),
                "r": (i, j + 1, i + 1, j + 1),
                "b": (i + 1, j, i + 1, j + 1),
                "l": (i, j, i + 1, j),
            }
            if key in _MS_LUT:
                pairs = _MS_LUT[key]
            else:
                center = f[i, j] + f[i, j + 1] + f[i + 1, j] + f[i + 1, j + 1]
                if key == (True, False, True, False):
                    pairs = [("t", "r"), ("b", "l")] if center > 0 else [("t", "l"), ("b", "r")]
                else:  # (False, True, False, True)
                    pairs = [("r", "b"), ("l", "t")] if center > 0 else [("r", "t"), ("l", "b")]
            for a, b in pairs:
                segments.append(
                    (eid[a], eid[b], interp(*corners_of[a]), interp(*corners_of[b]))
                )

    starts = {}
    for k, seg in enumerate(segments):
        starts.setdefault(seg[0], []).append(k)
    used = [False] * len(segments)
    contours = []
    for k0 in range(len(segments)):
        if used[k0]:
            continue
        used[k0] = True
        _, cur_edge, pa, pb = segments[k0]
        chain = [pa, pb]
        while True:
            nxt = next((k for k in starts.get(cur_edge, ()) if not used[k]), None)
            if nxt is None:
                break
            used[nxt] = True
            _, cur_edge, _, pb = segments[nxt]
            chain.append(pb)
        contours.append(np.asarray(chain))
    return contours


def write_contours(path, contours):
    payload = [np.asarray(c).tolist() for c in contours]
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


# ---------------------------------------------------------------------------
# 8-bit binary PGM output

def write_image(path, image):
    """Write a [0,1] image as binary PGM (P5), value = round(v * 255).

    Rounding is IEEE round-half-to-even via ``np.rint`` so output is
    bit-exact across platforms.
    """
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    if img.ndim != 2:
        raise ValueError("image must be 2-D")
    data = np.rint(img * 255.0).astype(np.uint8)
    h, w = data.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    try:
        Path(path).write_bytes(header + data.tobytes())
    except OSError as exc:
        raise OSError(f"cannot write image {path}: {exc}") from exc


def read_image(path):
    """Read a binary PGM (P5) back to floats in [0, 1]."""
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P5"):
        raise ValueError(f"not a binary PGM file: {path}")
    # header: magic, width, height, maxval, single whitespace, then payload
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(raw[start:pos]))
    pos += 1  # the single whitespace after maxval
    w, h, maxval = fields
    data = np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=pos)
    return data.reshape(h, w).astype(np.float64) / float(maxval)
