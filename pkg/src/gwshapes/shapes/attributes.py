"""Shape attributes: sampling, color conversion, and proto-vector codec.

The proto vector is the 11-dimensional numeric "language" describing one
shape: a 3-slot one-hot for the category followed by position, size, RGB
color and the rotation angle mapped to (cos, sin). Every component lives in
[-1, 1]; the affine map for each component is fixed by :class:`ShapeConfig`.
"""

from __future__ import annotations

import colorsys
import math
from dataclasses import dataclass

import numpy as np

PROTO_DIM = 11
CATEGORIES = ("egg", "triangle", "diamond")


class ConfigurationError(ValueError):
    pass


class ContractViolation(ValueError):
    pass


@dataclass(frozen=True)
class ShapeConfig:
    """Dataset geometry and color bounds.

    The position margin of ``size_max / 2`` keeps every shape fully inside
    the frame; the lightness floor keeps shapes visible on black.
    """

    image_size: int = 32
    size_min: float = 7.0
    size_max: float = 14.0
    lightness_min: float = 0.4

    def __post_init__(self):
        if not (0 < self.size_min < self.size_max < self.image_size):
            raise ConfigurationError(f"need 0 < size_min < size_max < {self.image_size}")
        if not (0.0 < self.lightness_min < 1.0):
            raise ConfigurationError("lightness_min must be in (0, 1)")

    @property
    def position_low(self) -> float:
        return self.size_max / 2.0

    @property
    def position_high(self) -> float:
        return self.image_size - self.size_max / 2.0


@dataclass(frozen=True)
class Attributes:
    """Ground-truth description of one rendered shape."""

    category: int  # index into CATEGORIES
    x: float
    y: float
    size: float
    rotation: float  # radians, clockwise on screen from "pointing up"
    color_hsl: tuple[float, float, float]
    color_rgb: tuple[int, int, int]


def hsl_to_rgb(h: float, s: float, l: float) -> tuple[int, int, int]:
    """HSL to 8-bit RGB (colorsys uses the HLS argument order)."""
    r, g, b = colorsys.hls_to_rgb(h, l, s)
    return (round(255 * r), round(255 * g), round(255 * b))


def sample_attributes(rng: np.random.Generator, config: ShapeConfig) -> Attributes:
    """Draw one attribute tuple with uniform marginals within config bounds."""
    category = int(rng.integers(len(CATEGORIES)))
    x = float(rng.uniform(config.position_low, config.position_high))
    y = float(rng.uniform(config.position_low, config.position_high))
    size = float(rng.uniform(config.size_min, config.size_max))
    rotation = float(rng.uniform(0.0, 2.0 * math.pi))
    h = float(rng.uniform(0.0, 1.0))
    s = float(rng.uniform(0.0, 1.0))
    l = float(rng.uniform(config.lightness_min, 1.0))
    return Attributes(category, x, y, size, rotation, (h, s, l), hsl_to_rgb(h, s, l))


def _to_unit(v, lo, hi):
    return 2.0 * (v - lo) / (hi - lo) - 1.0


def _from_unit(u, lo, hi):
    return (u + 1.0) * (hi - lo) / 2.0 + lo


def encode_proto(a: Attributes, config: ShapeConfig) -> np.ndarray:
    """Attributes -> 11-vector in [-1, 1]."""
    p = np.empty(PROTO_DIM)
    p[:3] = -1.0
    p[a.category] = 1.0
    p[3] = _to_unit(a.x, config.position_low, config.position_high)
    p[4] = _to_unit(a.y, config.position_low, config.position_high)
    p[5] = _to_unit(a.size, config.size_min, config.size_max)
    p[6:9] = [_to_unit(c, 0.0, 255.0) for c in a.color_rgb]
    p[9] = math.cos(a.rotation)
    p[10] = math.sin(a.rotation)
    return p


def decode_proto(p: np.ndarray, config: ShapeConfig, tolerance: float = 1e-6) -> Attributes:
    """Inverse of :func:`encode_proto` for valid proto vectors.

    Components may exceed [-1, 1] by at most ``tolerance`` (clamped); the
    recovered HSL is derived from the decoded RGB bytes, so only the fields
    actually stored in the vector round-trip exactly.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (PROTO_DIM,):
        raise ContractViolation(f"proto vector must have shape ({PROTO_DIM},), got {p.shape}")
    excess = np.max(np.abs(p)) - 1.0
    if excess > tolerance:
        raise ContractViolation(f"proto component out of [-1, 1] by {excess:.3g}")
    p = np.clip(p, -1.0, 1.0)
    category = int(np.argmax(p[:3]))
    x = _from_unit(p[3], config.position_low, config.position_high)
    y = _from_unit(p[4], config.position_low, config.position_high)
    size = _from_unit(p[5], config.size_min, config.size_max)
    rgb = tuple(int(round(_from_unit(u, 0.0, 255.0))) for u in p[6:9])
    rotation = math.atan2(p[10], p[9]) % (2.0 * math.pi)
    h, l, s = colorsys.rgb_to_hls(*(c / 255.0 for c in rgb))
    return Attributes(category, float(x), float(y), float(size), float(rotation), (h, s, l), rgb)
