"""Non-learned reconstructions: delay-and-sum and universal back-projection."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .acoustics import forward_weights, min_distance, sampling_matrix, time_derivative
from .geometry import ImagingGeometry, check_sinogram

METHODS = ("das", "ubp")


@dataclass(frozen=True)
class BeamformConfig:
    method: str = "das"
    apodization: str = "none"
    normalization: str = "max-abs"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown beamforming method {self.method!r}; expected one of {METHODS}")
        if self.apodization != "none":
            raise ValueError("only apodization='none' is supported")
        if self.normalization != "max-abs":
            raise ValueError("only normalization='max-abs' is supported")


def normalize_max_abs(img: np.ndarray) -> np.ndarray:
    peak = np.max(np.abs(img))
    return img / peak if peak > 0 else np.zeros_like(img)


def das_sum(s: np.ndarray, geom: ImagingGeometry) -> np.ndarray:
    """Unnormalized delay-and-sum: every channel sampled at the pixel's time
    of flight (linear interpolation) and summed."""
    s = check_sinogram(s, geom).astype(np.float64)
    return (sampling_matrix(geom).T @ s.ravel()).reshape(geom.image_shape)


def das_reconstruct(s: np.ndarray, geom: ImagingGeometry) -> np.ndarray:
    """Signed delay-and-sum image scaled to max-abs 1."""
    return normalize_max_abs(das_sum(s, geom))


@lru_cache(maxsize=4)
def ubp_weights(geom: ImagingGeometry):
    """Per (sensor, pixel) ``cos(theta0)/|r - r0|**2 * dS`` and the per-pixel
    solid-angle normalizer ``Omega0 = sum dS cos(theta0)/|r - r0|``."""
    fw = forward_weights(geom)
    _, pz = geom.pixel_coordinates()
    dist = np.maximum(fw.distance, min_distance(geom))
    cos_theta = pz.ravel()[None, :] / dist
    ds = geom.element_spacing
    weight = ds * cos_theta / dist ** 2
    omega = np.sum(ds * cos_theta / dist, axis=0)
    return cos_theta, weight, omega


def ubp_filtered(s: np.ndarray, geom: ImagingGeometry) -> np.ndarray:
    """Back-projection data term ``2 p(t) - 2 t dp/dt``."""
    t = np.arange(geom.sample_count, dtype=np.float64)[:, None] / geom.sample_rate
    return 2 * s - 2 * t * time_derivative(s, geom.sample_rate)


def ubp_sum(s: np.ndarray, geom: ImagingGeometry) -> np.ndarray:
    """Unnormalized universal back-projection (before the max-abs scaling)."""
    s = check_sinogram(s, geom).astype(np.float64)
    b = ubp_filtered(s, geom)
    _, weight, omega = ubp_weights(geom)
    # sample each channel at every pixel's delay, then weight per (sensor, pixel)
    fw = forward_weights(geom)
    i0 = np.floor(fw.delay).astype(np.int64)
    frac = fw.delay - i0
    ch = np.arange(geom.sensor_count)[:, None]
    sampled = b[i0, ch] * (1 - frac) + b[i0 + 1, ch] * frac
    acc = np.sum(weight * sampled, axis=0)
    out = np.zeros_like(acc)
    np.divide(acc, omega, out=out, where=omega > 0)
    return out.reshape(geom.image_shape)


def ubp_reconstruct(s: np.ndarray, geom: ImagingGeometry) -> np.ndarray:
    return normalize_max_abs(ubp_sum(s, geom))


def reconstruct(s: np.ndarray, geom: ImagingGeometry, config: BeamformConfig = BeamformConfig()) -> np.ndarray:
    return das_reconstruct(s, geom) if config.method == "das" else ubp_reconstruct(s, geom)
