"""Deterministic 32x32 rasterizer and PPM (P6) export.

A pixel belongs to the shape iff its center, inverse-rotated into the
shape's canonical frame, lies inside the canonical outline. For the convex
outlines used here this fills exactly the per-row spans a scanline pass
would produce, with no anti-aliasing, so images are byte-stable across
platforms. Canonical shapes fit inside a circle of radius size/2 and point
"up" at rotation 0; positive rotation turns them clockwise on screen.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .attributes import Attributes, ShapeConfig

# Outline proportions relative to r = size / 2. The triangle is isosceles,
# the diamond is a kite (no 180-degree symmetry, so orientation stays
# unambiguous), the egg joins two half-ellipses of different height.
_TRIANGLE = [(0.0, -1.0), (0.66, 0.75), (-0.66, 0.75)]
_DIAMOND = [(0.0, -1.0), (0.62, 0.1), (0.0, 0.7), (-0.62, 0.1)]
_EGG_WIDTH = 0.60
_EGG_BOTTOM = 0.65


def _polygon_mask(cx: np.ndarray, cy: np.ndarray, vertices) -> np.ndarray:
    inside = np.ones_like(cx, dtype=bool)
    n = len(vertices)
    for k in range(n):
        x0, y0 = vertices[k]
        x1, y1 = vertices[(k + 1) % n]
        # vertices wind clockwise in y-down coords; keep the inner side
        inside &= (x1 - x0) * (cy - y0) - (y1 - y0) * (cx - x0) >= 0.0
    return inside


def _egg_mask(cx: np.ndarray, cy: np.ndarray) -> np.ndarray:
    top = (cx / _EGG_WIDTH) ** 2 + cy ** 2 <= 1.0
    bottom = (cx / _EGG_WIDTH) ** 2 + (cy / _EGG_BOTTOM) ** 2 <= 1.0
    return np.where(cy <= 0.0, top, bottom)


def shape_mask(a: Attributes, config: ShapeConfig) -> np.ndarray:
    """Boolean (H, W) mask of the shape's pixels."""
    n = config.image_size
    centers = np.arange(n) + 0.5
    px, py = np.meshgrid(centers, centers)  # px: column coordinate, py: row
    c, s = math.cos(a.rotation), math.sin(a.rotation)
    dx, dy = px - a.x, py - a.y
    r = a.size / 2.0
    cx = (c * dx + s * dy) / r  # inverse (counterclockwise) rotation
    cy = (-s * dx + c * dy) / r
    if a.category == 0:
        return _egg_mask(cx, cy)
    verts = _TRIANGLE if a.category == 1 else _DIAMOND
    return _polygon_mask(cx, cy, verts)


def render_image(a: Attributes, config: ShapeConfig) -> np.ndarray:
    """(H, W, 3) uint8 image: shape pixels in the attribute color, rest black."""
    img = np.zeros((config.image_size, config.image_size, 3), dtype=np.uint8)
    img[shape_mask(a, config)] = a.color_rgb
    return img


def write_ppm(path: Path, img: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (img.shape[1], img.shape[0]))
        f.write(img.tobytes())


def read_ppm(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    magic, dims, maxval, raster = data.split(b"\n", 3)
    if magic != b"P6" or maxval != b"255":
        raise ValueError(f"unsupported PPM header in {path}")
    w, h = (int(v) for v in dims.split())
    return np.frombuffer(raster, dtype=np.uint8, count=w * h * 3).reshape(h, w, 3)
