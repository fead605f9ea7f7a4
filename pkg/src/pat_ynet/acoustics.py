"""Discrete photoacoustic forward model and its exact adjoint.

Each pixel contributes to each channel at its time of flight.  The
contribution is weighted by ``1/|r - r0|`` (the 2D stand-in for the solid
angle element and the ``1/(4 pi t)`` factor) and split over the two nearest
samples with linear interpolation.  The time derivative is a centred
difference scaled by the sample rate, with zero samples assumed outside the
record.

The projector is stored as a sparse matrix so that the adjoint is literally
its transpose.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy import signal

from .geometry import ImagingGeometry, check_image, check_sinogram

BANDPASS_TAPS = 63


@dataclass(frozen=True)
class ForwardWeights:
    """Per (sensor, pixel) delay in fractional samples and amplitude weight.

    Both arrays are ``(sensor_count, ny * nx)``; pixels are flattened row-major.
    """

    delay: np.ndarray
    amplitude: np.ndarray
    distance: np.ndarray


def min_distance(geom: ImagingGeometry) -> float:
    """Floor on ``|r - r0|`` for the pixel that coincides with an element."""
    return geom.pixel_pitch / 2


@lru_cache(maxsize=4)
def forward_weights(geom: ImagingGeometry) -> ForwardWeights:
    px, pz = geom.pixel_coordinates()
    sens = geom.sensor_positions
    dx = px.ravel()[None, :] - sens[:, 0:1]
    dz = pz.ravel()[None, :] - sens[:, 1:2]
    dist = np.hypot(dx, dz)
    delay = geom.arrival_sample(dist)
    amp = 1.0 / np.maximum(dist, min_distance(geom))
    for a in (delay, amp, dist):
        a.setflags(write=False)
    return ForwardWeights(delay=delay, amplitude=amp, distance=dist)


def _interp_matrix(geom: ImagingGeometry, weights: np.ndarray) -> sp.csr_matrix:
    """Sparse map from flattened pixels to the flattened (time-major) record."""
    fw = forward_weights(geom)
    ns, npix = fw.delay.shape
    i0 = np.floor(fw.delay).astype(np.int64)
    frac = fw.delay - i0
    if i0.max() + 1 > geom.sample_count - 1:
        raise ValueError("geometry places pixels beyond the end of the record")
    sensor = np.broadcast_to(np.arange(ns)[:, None], (ns, npix))
    pixel = np.broadcast_to(np.arange(npix)[None, :], (ns, npix))
    rows = np.concatenate([(i0 * ns + sensor).ravel(), ((i0 + 1) * ns + sensor).ravel()])
    cols = np.concatenate([pixel.ravel(), pixel.ravel()])
    vals = np.concatenate([(weights * (1 - frac)).ravel(), (weights * frac).ravel()])
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(geom.sample_count * ns, npix))
    return mat.tocsr()


@lru_cache(maxsize=4)
def projection_matrix(geom: ImagingGeometry) -> sp.csr_matrix:
    """Weighted interpolation part of the forward operator (before d/dt)."""
    return _interp_matrix(geom, forward_weights(geom).amplitude)


@lru_cache(maxsize=4)
def sampling_matrix(geom: ImagingGeometry) -> sp.csr_matrix:
    """Unweighted interpolation map; its transpose is delay-and-sum."""
    fw = forward_weights(geom)
    return _interp_matrix(geom, np.ones_like(fw.delay))


def time_derivative(s: np.ndarray, sample_rate: float) -> np.ndarray:
    """Centred difference along axis 0, zero outside the record."""
    out = np.empty_like(s)
    half = 0.5 * sample_rate
    out[1:-1] = (s[2:] - s[:-2]) * half
    out[0] = s[1] * half
    out[-1] = -s[-2] * half
    return out


def time_derivative_adjoint(s: np.ndarray, sample_rate: float) -> np.ndarray:
    # the zero-extended centred difference is antisymmetric
    return -time_derivative(s, sample_rate)


def forward_project(p0: np.ndarray, geom: ImagingGeometry) -> np.ndarray:
    """Sinogram ``(sample_count, sensor_count)`` produced by initial pressure ``p0``."""
    p0 = check_image(p0, geom, "initial pressure")
    u = projection_matrix(geom) @ p0.astype(np.float64).ravel()
    return time_derivative(u.reshape(geom.sinogram_shape), geom.sample_rate)


def adjoint_project(s: np.ndarray, geom: ImagingGeometry) -> np.ndarray:
    """Transpose of :func:`forward_project`."""
    s = check_sinogram(s, geom)
    u = time_derivative_adjoint(s.astype(np.float64), geom.sample_rate)
    return (projection_matrix(geom).T @ u.ravel()).reshape(geom.image_shape)


@lru_cache(maxsize=4)
def bandpass_kernel(center_frequency: float, fractional_bandwidth: float, sample_rate: float,
                    numtaps: int = BANDPASS_TAPS) -> np.ndarray:
    """Hamming-windowed FIR band-pass over ``f_c (1 -+ B/2)``."""
    lo = center_frequency * (1 - fractional_bandwidth / 2)
    hi = center_frequency * (1 + fractional_bandwidth / 2)
    if hi >= sample_rate / 2:
        raise ValueError(f"passband upper edge {hi:.4g} Hz violates Nyquist for fs={sample_rate:.4g} Hz")
    if lo <= 0:
        raise ValueError("passband lower edge must be positive")
    taps = signal.firwin(numtaps, [lo, hi], pass_zero=False, fs=sample_rate, window="hamming")
    taps.setflags(write=False)
    return taps


def apply_bandpass(s: np.ndarray, geom: ImagingGeometry) -> np.ndarray:
    """Zero-phase transducer response: the FIR kernel applied forward and
    backward along time for every channel."""
    s = check_sinogram(s, geom)
    taps = bandpass_kernel(geom.center_frequency, geom.fractional_bandwidth, geom.sample_rate)
    return signal.filtfilt(taps, [1.0], s.astype(np.float64), axis=0)


def add_noise(s: np.ndarray, target_snr_db: float = 60.0, seed: int = 0) -> np.ndarray:
    """Add white Gaussian noise so that mean signal power over the whole
    record divided by the noise variance equals ``target_snr_db``."""
    s = np.asarray(s, dtype=np.float64)
    power = float(np.mean(s * s))
    if not power > 0:
        raise ValueError("cannot set an SNR for a zero-power sinogram")
    sigma = np.sqrt(power / 10 ** (target_snr_db / 10))
    rng = np.random.default_rng(seed)
    return s + sigma * rng.standard_normal(s.shape)


def signal_free_start(geom: ImagingGeometry) -> int:
    """First sample index guaranteed free of (band-passed) signal."""
    last_arrival = int(np.ceil(forward_weights(geom).delay.max()))
    return last_arrival + 2 + 2 * BANDPASS_TAPS


def estimate_snr_db(s: np.ndarray, geom: ImagingGeometry) -> float:
    """SNR of a stored noisy sinogram, using the signal-free tail of the
    record as the noise reference."""
    s = check_sinogram(s, geom).astype(np.float64)
    start = signal_free_start(geom)
    if start >= geom.sample_count - 16:
        raise ValueError("record has no signal-free tail to estimate noise from")
    noise_power = float(np.mean(s[start:] ** 2))
    total_power = float(np.mean(s * s))
    if noise_power <= 0:
        return float("inf")
    return 10 * np.log10((total_power - noise_power) / noise_power)
