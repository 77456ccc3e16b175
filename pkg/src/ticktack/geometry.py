"""Polar spiral coordinates and sinusoidal temporal encodings for years.

A year sits on an Archimedean spiral: its sexagenary cycle index fixes the
wrapped angle (6 degrees per index step, so same-term years share the
angle) and the number of elapsed cycles grows the radius, so 2025 lies
farther from the pole than 1965 even though both are Yisi years.  The
(x, y) Cartesian scalars of that spiral point are then expanded into a
d-dimensional sine/cosine vector on a geometric wavelength ladder, the
same construction as transformer position encodings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import sexagenary
from .sexagenary import GregorianYear

# Radius anchor: the oldest supported year sits at the base radius, so every
# supported year gets a positive radius and therefore a unique spiral point
# (a sign flip in r would reflect through the pole and collide with a year
# half a turn away).
_EPOCH_FLOOR = sexagenary.epoch_index(sexagenary.MIN_YEAR)


@dataclass(frozen=True)
class EncodingConfig:
    """Spiral and encoding hyperparameters.

    ``alpha`` is the base radius, ``beta`` the radial growth per cycle
    (both default inside the recommended [0.5, 1.0] band), ``dim`` the
    encoding width (must be even), ``wavelength_base`` the geometric base
    of the sine/cosine ladder.
    """

    alpha: float = 1.0
    beta: float = 0.5
    dim: int = 64
    wavelength_base: float = 10000.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.dim < 2 or self.dim % 2 != 0:
            raise ValueError("dim must be an even integer >= 2")
        if self.wavelength_base <= 0:
            raise ValueError("wavelength_base must be positive")


@dataclass(frozen=True)
class PolarTemporalCoordinate:
    """Wrapped angle in degrees, spiral radius, and completed-cycle count."""

    theta_degrees: float
    radius: float
    epoch: int


@dataclass(frozen=True)
class CartesianTemporalCoordinate:
    x: float
    y: float


def to_polar(year: GregorianYear | int, cfg: EncodingConfig) -> PolarTemporalCoordinate:
    """Place a year on the sexagenary spiral.

    The angle is 6 degrees times the cycle index.  The radius is
    alpha + beta * (epoch - epoch_floor + index/60): it advances by
    exactly beta per elapsed sixty-year cycle, and anchoring at the
    oldest supported year keeps it positive everywhere, so 2025 lies
    farther out than 1965 and no two years share a spiral point.
    """
    idx = sexagenary.to_cycle_index(year).value
    epoch = sexagenary.epoch_index(year)
    theta = 6.0 * idx
    radius = cfg.alpha + cfg.beta * (epoch - _EPOCH_FLOOR + idx / 60.0)
    return PolarTemporalCoordinate(theta_degrees=theta, radius=radius, epoch=epoch)


def to_cartesian(p: PolarTemporalCoordinate) -> CartesianTemporalCoordinate:
    rad = math.radians(p.theta_degrees)
    return CartesianTemporalCoordinate(x=p.radius * math.cos(rad), y=p.radius * math.sin(rad))


def temporal_encoding(s: float, cfg: EncodingConfig) -> np.ndarray:
    """Sine/cosine expansion of a scalar on the wavelength ladder.

    Entry 2j is sin(s / base^(2j/dim)) and entry 2j+1 the cosine of the
    same argument, for j in [0, dim/2).  Every entry lies in [-1, 1].
    """
    j = np.arange(cfg.dim // 2, dtype=np.float64)
    angles = s / cfg.wavelength_base ** (2.0 * j / cfg.dim)
    out = np.empty(cfg.dim, dtype=np.float64)
    out[0::2] = np.sin(angles)
    out[1::2] = np.cos(angles)
    return out


def encode_year(
    year: GregorianYear | int, cfg: EncodingConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Temporal encoding pair (TE of x, TE of y) for a year's spiral point."""
    cart = to_cartesian(to_polar(year, cfg))
    return temporal_encoding(cart.x, cfg), temporal_encoding(cart.y, cfg)
