"""Image-quality metrics: SSIM, PSNR, SNR and line profiles."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy import signal


class ZeroBackgroundError(ValueError):
    """The background region has zero standard deviation, so SNR is undefined."""


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2
    g = np.exp(-(ax ** 2) / (2 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def _same_shape(a, b, what):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {a.shape} vs {b.shape}")
    return a, b


def ssim_map(f, gt, window: Optional[np.ndarray] = None, data_range: float = 1.0,
             k1: float = 0.01, k2: float = 0.03) -> np.ndarray:
    """Per-window SSIM over all fully contained windows ("valid" positions)."""
    f, gt = _same_shape(f, gt, "ssim")
    w = gaussian_window() if window is None else window
    if f.ndim != 2 or f.shape[0] < w.shape[0] or f.shape[1] < w.shape[1]:
        raise ValueError(f"ssim: images must be 2D and at least {w.shape}, got {f.shape}")
    f = np.clip(f, 0.0, 1.0)
    gt = np.clip(gt, 0.0, 1.0)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2

    def filt(img):
        return signal.correlate2d(img, w, mode="valid")

    mu_f, mu_g = filt(f), filt(gt)
    var_f = filt(f * f) - mu_f ** 2
    var_g = filt(gt * gt) - mu_g ** 2
    cov = filt(f * gt) - mu_f * mu_g
    num = (2 * mu_f * mu_g + c1) * (2 * cov + c2)
    den = (mu_f ** 2 + mu_g ** 2 + c1) * (var_f + var_g + c2)
    return num / den


def ssim(f, gt, window: Optional[np.ndarray] = None, data_range: float = 1.0,
         k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5).  Inputs are
    clamped to [0, 1] first."""
    return float(np.mean(ssim_map(f, gt, window, data_range, k1, k2)))


def psnr(f, gt, i_max: float = 1.0) -> float:
    """PSNR in dB; ``inf`` for identical images."""
    f, gt = _same_shape(f, gt, "psnr")
    err = float(np.mean((f - gt) ** 2))
    if err == 0:
        return math.inf
    return 10 * math.log10(i_max ** 2 / err)


def snr(f, background_mask) -> float:
    """Peak over background standard deviation, in dB."""
    f = np.asarray(f, dtype=np.float64)
    mask = np.asarray(background_mask, dtype=bool)
    if mask.shape != f.shape:
        raise ValueError(f"snr: mask shape {mask.shape} vs image {f.shape}")
    n = int(mask.sum())
    if n == 0:
        raise ValueError("snr: background mask is empty")
    if n == mask.size:
        raise ValueError("snr: background mask covers the whole image")
    sigma_b = float(np.std(f[mask]))
    if sigma_b == 0:
        raise ZeroBackgroundError("snr: background standard deviation is zero")
    return 10 * math.log10((float(np.max(f)) / sigma_b) ** 2)


def background_from_gt(gt, threshold: float = 0.05) -> np.ndarray:
    return np.asarray(gt) < threshold


def line_profile(image, index: int, axis: str = "row") -> np.ndarray:
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError("line_profile: image must be 2D")
    if axis not in ("row", "col"):
        raise ValueError("axis must be 'row' or 'col'")
    limit = img.shape[0] if axis == "row" else img.shape[1]
    if not 0 <= index < limit:
        raise IndexError(f"line_profile: {axis} {index} out of range [0, {limit})")
    return img[index].copy() if axis == "row" else img[:, index].copy()


@dataclass
class MetricsReport:
    """Per-(sample, method) metric rows plus per-method aggregates."""

    rows: List[dict] = field(default_factory=list)

    def add(self, sample_id: str, method: str, ssim_value: float, psnr_db: float, snr_db: float) -> None:
        if not -1.0 - 1e-12 <= ssim_value <= 1.0 + 1e-12:
            raise ValueError(f"ssim {ssim_value} outside [-1, 1]")
        self.rows.append({"sample_id": sample_id, "method": method, "ssim": ssim_value,
                          "psnr_db": psnr_db, "snr_db": snr_db})

    def methods(self) -> List[str]:
        seen: Dict[str, None] = {}
        for r in self.rows:
            seen.setdefault(r["method"], None)
        return list(seen)

    def aggregate(self) -> Dict[str, Dict[str, float]]:
        out = {}
        for m in self.methods():
            sel = [r for r in self.rows if r["method"] == m]
            agg = {}
            for key in ("ssim", "psnr_db", "snr_db"):
                vals = np.array([r[key] for r in sel], dtype=np.float64)
                agg[key + "_mean"] = float(np.mean(vals))
                # an infinite entry makes the spread undefined
                agg[key + "_std"] = float(np.std(vals)) if np.all(np.isfinite(vals)) else math.nan
            out[m] = agg
        return out
