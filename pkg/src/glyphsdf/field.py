"""Opacity kernel, channel composition operators, analytic rasterization.

The kernel maps a signed distance to opacity through a cubic ramp over the
anti-alias band [-gamma, gamma]:

    K(d) = 0                 d <= -gamma
    K(d) = 1/2 + (3t - t^3)/4   t = d/gamma, |d| < gamma
    K(d) = 1                 d >= gamma

It is continuous, monotone non-decreasing and hits 0/1 exactly at the band
edges.  Composition across the n field channels is the median at render
time and a differentiable surrogate at training time.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CheckpointError, GeometryError
from . import geometry


@dataclass
class FieldConfig:
    """Channel count and anti-alias band for one trained field."""

    channels: int = 3
    aa_k: float = 4.0
    train_width: int = 64

    def __post_init__(self):
        if self.channels not in (1, 3):
            raise GeometryError(f"channels must be 1 or 3, got {self.channels}")
        if self.aa_k <= 0 or self.train_width < 8:
            raise GeometryError("aa_k must be > 0 and train_width >= 8")

    @property
    def gamma_final(self):
        return self.aa_k / self.train_width


def kernel(d, gamma):
    """Opacity of signed distance(s) d for anti-alias range gamma."""
    if gamma <= 0:
        raise ValueError(f"anti-alias range must be positive, got {gamma}")
    t = np.clip(np.asarray(d, dtype=np.float64) / gamma, -1.0, 1.0)
    return 0.5 + 0.25 * (3.0 * t - t**3)


def kernel_grad(d, gamma):
    """dK/dd: 3(1 - t^2)/(4 gamma) inside the band, 0 outside."""
    if gamma <= 0:
        raise ValueError(f"anti-alias range must be positive, got {gamma}")
    d = np.asarray(d, dtype=np.float64)
    t = d / gamma
    g = 0.75 * (1.0 - t * t) / gamma
    return np.where(np.abs(t) < 1.0, g, 0.0)


def compose_median(channels, axis=-1):
    """Median across channels (identity for a single channel)."""
    c = np.asarray(channels, dtype=np.float64)
    if c.shape[axis] == 1:
        return np.take(c, 0, axis=axis)
    return np.median(c, axis=axis)


def compose_train(channels, mode, axis=-1):
    """Differentiable training composition.

    mode="mean": plain channel mean (warm-up).
    mode="median_pair": average of the median and the channel value closest
    to it; an exact tie picks the smaller of the two equidistant values.
    """
    c = np.asarray(channels, dtype=np.float64)
    if c.shape[axis] == 1:
        return np.take(c, 0, axis=axis)
    if mode == "mean":
        return np.mean(c, axis=axis)
    if mode == "median_pair":
        if c.shape[axis] != 3:
            raise ValueError("median_pair composition needs exactly 3 channels")
        s = np.sort(c, axis=axis)
        a = np.take(s, 0, axis=axis)
        b = np.take(s, 1, axis=axis)
        hi = np.take(s, 2, axis=axis)
        near = np.where(b - a <= hi - b, a, hi)
        return 0.5 * (b + near)
    raise ValueError(f"unknown composition mode {mode!r}")


def compose_train_grad(channels, mode):
    """Composition value and its gradient w.r.t. the channel values.

    ``channels`` has shape (..., n); both returns broadcast accordingly.
    The surrogate is piecewise linear, so the gradient is a constant
    selection per point: 1/n everywhere for the mean, or 1/2 on the median
    channel and 1/2 on its nearest neighbour for median_pair.
    """
    c = np.asarray(channels, dtype=np.float64)
    n = c.shape[-1]
    if n == 1 or mode == "mean":
        value = np.mean(c, axis=-1) if n > 1 else c[..., 0]
        grad = np.full_like(c, 1.0 / n)
        return value, grad
    if mode != "median_pair":
        raise ValueError(f"unknown composition mode {mode!r}")
    order = np.argsort(c, axis=-1, kind="stable")
    s = np.take_along_axis(c, order, axis=-1)
    a, b, hi = s[..., 0], s[..., 1], s[..., 2]
    pick_low = (b - a) <= (hi - b)
    near_idx = np.where(pick_low, order[..., 0], order[..., 2])
    value = 0.5 * (b + np.where(pick_low, a, hi))
    grad = np.zeros_like(c)
    np.put_along_axis(grad, order[..., 1:2], 0.5, axis=-1)
    # the nearest channel may coincide with the median channel only when all
    # three values tie; accumulate so the total weight stays 1
    idx = near_idx[..., None]
    np.put_along_axis(grad, idx, np.take_along_axis(grad, idx, axis=-1) + 0.5, axis=-1)
    return value, grad


def rasterize_ground_truth(glyph, width, gamma, sdf=None):
    """Analytic anti-aliased raster of a glyph at pixel centers.

    ``sdf`` may pass a precomputed exact signed-distance grid to avoid
    recomputing it when only gamma changes.
    """
    if sdf is None:
        sdf = geometry.sdf_grid(glyph, width)
    return kernel(sdf, gamma)


# ---------------------------------------------------------------------------
# float grid container (.grid): 16-byte header + little-endian float32 data,
# channel-major then row-major.

GRID_MAGIC = b"MIFG"
GRID_VERSION = 1
_GRID_HEADER = struct.Struct("<4sIHHH2x")
assert _GRID_HEADER.size == 16


def write_grid(path, grid):
    """Write a (n, H, W) or (H, W) float array; stored as float32."""
    g = np.asarray(grid, dtype=np.float32)
    if g.ndim == 2:
        g = g[None, :, :]
    if g.ndim != 3:
        raise ValueError(f"grid must be 2- or 3-dimensional, got shape {g.shape}")
    n, h, w = g.shape
    if max(n, h, w) > 0xFFFF:
        raise ValueError(f"grid dimensions exceed the container limit: {g.shape}")
    header = _GRID_HEADER.pack(GRID_MAGIC, GRID_VERSION, n, h, w)
    payload = np.ascontiguousarray(g, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_grid(path):
    """Read a grid container back as a (n, H, W) float32 array."""
    raw = Path(path).read_bytes()
    if len(raw) < _GRID_HEADER.size:
        raise CheckpointError(f"grid file too short: {path}")
    magic, version, n, h, w = _GRID_HEADER.unpack_from(raw)
    if magic != GRID_MAGIC:
        raise CheckpointError(f"not a grid container: {path}")
    if version != GRID_VERSION:
        raise CheckpointError(f"unsupported grid version {version} in {path}")
    expected = _GRID_HEADER.size + 4 * n * h * w
    if len(raw) != expected:
        raise CheckpointError(
            f"grid payload size mismatch in {path}: {len(raw)} != {expected}"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=_GRID_HEADER.size)
    return data.reshape(n, h, w).copy()
