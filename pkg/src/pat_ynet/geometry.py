"""Imaging geometry shared by the forward model and the beamformers.

Pixels sit on a node lattice: pixel ``(row, col)`` is at lateral position
``col * pixel_pitch`` and depth ``row * pixel_pitch``.  The linear array lies
on the top row (depth 0) and spans the same lateral extent as the grid, so
with 128 elements over 128 columns element ``k`` sits directly above column
``k``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Tuple

import numpy as np


@dataclass(frozen=True)
class ImagingGeometry:
    grid_nx: int = 128
    grid_ny: int = 128
    pixel_pitch: float = 3.0e-4
    sound_speed: float = 1500.0
    sensor_count: int = 128
    sample_rate: float = 4.0e7
    sample_count: int = 2560
    center_frequency: float = 7.0e6
    fractional_bandwidth: float = 0.8

    def __post_init__(self):
        if self.grid_nx < 2 or self.grid_ny < 2:
            raise ValueError("grid must be at least 2x2")
        if self.pixel_pitch <= 0 or self.sound_speed <= 0 or self.sample_rate <= 0:
            raise ValueError("pixel_pitch, sound_speed and sample_rate must be positive")
        if self.sensor_count < 2:
            raise ValueError("need at least two sensors")
        if self.sample_count < 4:
            raise ValueError("sample_count too small")
        if not 0 < self.fractional_bandwidth < 2:
            raise ValueError("fractional_bandwidth must lie in (0, 2)")
        reach = self.sample_count * self.sound_speed / self.sample_rate
        if reach < self.diagonal:
            raise ValueError(
                f"record length covers {reach:.4g} m of propagation, less than the grid diagonal {self.diagonal:.4g} m")

    @property
    def image_shape(self) -> Tuple[int, int]:
        return (self.grid_ny, self.grid_nx)

    @property
    def sinogram_shape(self) -> Tuple[int, int]:
        return (self.sample_count, self.sensor_count)

    @property
    def width(self) -> float:
        return (self.grid_nx - 1) * self.pixel_pitch

    @property
    def depth(self) -> float:
        return (self.grid_ny - 1) * self.pixel_pitch

    @property
    def diagonal(self) -> float:
        return float(np.hypot(self.width, self.depth))

    @property
    def sensor_positions(self) -> np.ndarray:
        """``(sensor_count, 2)`` array of ``(x, z)`` element centres in metres."""
        x = np.linspace(0.0, self.width, self.sensor_count)
        return np.stack([x, np.zeros_like(x)], axis=1)

    @property
    def element_spacing(self) -> float:
        return self.width / (self.sensor_count - 1)

    @property
    def passband(self) -> Tuple[float, float]:
        half = self.fractional_bandwidth / 2
        return (self.center_frequency * (1 - half), self.center_frequency * (1 + half))

    def pixel_coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        """Lateral and depth coordinates of every pixel, each ``(ny, nx)``."""
        x = np.arange(self.grid_nx) * self.pixel_pitch
        z = np.arange(self.grid_ny) * self.pixel_pitch
        return np.meshgrid(x, z)

    def arrival_sample(self, distance) -> np.ndarray:
        """Fractional sample index at which a wave travelling ``distance`` arrives."""
        return np.asarray(distance) * self.sample_rate / self.sound_speed

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ImagingGeometry":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown geometry keys: {sorted(unknown)}")
        return cls(**d)


def check_image(img: np.ndarray, geom: ImagingGeometry, what: str = "image") -> np.ndarray:
    img = np.asarray(img)
    if img.shape != geom.image_shape:
        raise ValueError(f"{what} shape {img.shape} does not match geometry {geom.image_shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError(f"{what} contains non-finite values")
    return img


def check_sinogram(s: np.ndarray, geom: ImagingGeometry) -> np.ndarray:
    s = np.asarray(s)
    if s.shape != geom.sinogram_shape:
        raise ValueError(f"sinogram shape {s.shape} does not match geometry {geom.sinogram_shape}")
    if not np.all(np.isfinite(s)):
        raise ValueError("sinogram contains non-finite values")
    return s
