import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pat_ynet.metrics import (MetricsReport, ZeroBackgroundError, background_from_gt, gaussian_window, line_profile,
                              psnr, snr, ssim)
from pat_ynet.phantoms import nine_point_centers, point_phantom

unit_images = arrays(np.float64, (16, 16), elements=st.floats(0, 1))


def ssim_bruteforce(x, y, size=11, sigma=1.5):
    """Per-window double loop, no filtering library."""
    ax = np.arange(size) - (size - 1) / 2
    g = np.exp(-ax ** 2 / (2 * sigma ** 2))
    w = np.outer(g, g)
    w /= w.sum()
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    x, y = np.clip(x, 0, 1), np.clip(y, 0, 1)
    vals = []
    for i in range(x.shape[0] - size + 1):
        for j in range(x.shape[1] - size + 1):
            px, py = x[i:i + size, j:j + size], y[i:i + size, j:j + size]
            mx, my = np.sum(w * px), np.sum(w * py)
            vx = np.sum(w * (px - mx) ** 2)
            vy = np.sum(w * (py - my) ** 2)
            cxy = np.sum(w * (px - mx) * (py - my))
            vals.append((2 * mx * my + c1) * (2 * cxy + c2) / ((mx ** 2 + my ** 2 + c1) * (vx + vy + c2)))
    return float(np.mean(vals))


def test_window():
    w = gaussian_window()
    assert w.shape == (11, 11) and w.sum() == pytest.approx(1.0)
    assert np.unravel_index(np.argmax(w), w.shape) == (5, 5)


def test_ssim_matches_bruteforce():
    rng = np.random.default_rng(0)
    for _ in range(5):
        a, b = rng.random((16, 16)), rng.random((16, 16))
        assert abs(ssim(a, b) - ssim_bruteforce(a, b)) < 1e-6


def test_ssim_identity_and_inverse():
    rng = np.random.default_rng(1)
    x = rng.random((32, 32))
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)
    xb = (rng.random((32, 32)) > 0.5).astype(float)
    assert ssim(xb, 1 - xb) < 0.3


def test_ssim_clamps_and_rejects():
    rng = np.random.default_rng(2)
    x = rng.random((16, 16))
    assert ssim(x * 3 - 1, x) == pytest.approx(ssim(np.clip(x * 3 - 1, 0, 1), x))
    with pytest.raises(ValueError):
        ssim(x, x[:15])


@given(unit_images, unit_images)
def test_ssim_symmetric_and_bounded(a, b):
    s = ssim(a, b)
    assert abs(s - ssim(b, a)) < 1e-12
    assert -1 <= s <= 1 + 1e-12


def test_psnr_arithmetic():
    gt = np.zeros((10, 10))
    f = np.full((10, 10), 0.1)  # MSE 0.01
    assert psnr(f, gt) == pytest.approx(20.0, abs=1e-9)
    assert psnr(gt, gt) == math.inf
    f2 = np.full((10, 10), 0.1 / np.sqrt(2))
    assert psnr(f2, gt) - psnr(f, gt) == pytest.approx(10 * np.log10(2), abs=1e-9)
    with pytest.raises(ValueError):
        psnr(f, gt[:5])


def test_psnr_monotone_in_mse():
    gt = np.zeros((8, 8))
    vals = [psnr(np.full((8, 8), e), gt) for e in np.linspace(0.01, 0.9, 40)]
    assert np.all(np.diff(vals) < 0)


def test_snr_arithmetic():
    rng = np.random.default_rng(3)
    mask = np.zeros((20, 20), bool)
    mask[:, :10] = True
    f = np.zeros((20, 20))
    noise = rng.standard_normal(200)
    noise = (noise - noise.mean()) / noise.std() * 0.1  # exactly sigma 0.1
    f[mask] = noise
    f[5, 15] = 1.0
    assert snr(f, mask) == pytest.approx(20.0, abs=1e-9)
    # random background with known injected noise: hand computation
    g = rng.random((20, 20)) + 2
    g[mask] = rng.normal(0, 0.37, 200)
    hand = 10 * math.log10((g.max() / np.std(g[mask])) ** 2)
    assert abs(snr(g, mask) - hand) < 1e-9


@given(st.floats(0.01, 100))
def test_snr_scale_invariant(k):
    rng = np.random.default_rng(4)
    f = rng.random((12, 12))
    mask = np.zeros((12, 12), bool)
    mask[:6] = True
    assert snr(k * f, mask) == pytest.approx(snr(f, mask), abs=1e-9)


def test_snr_errors():
    f = np.ones((4, 4))
    mask = np.zeros((4, 4), bool)
    mask[0] = True
    with pytest.raises(ZeroBackgroundError):
        snr(f, mask)
    with pytest.raises(ValueError):
        snr(f, np.zeros((4, 4), bool))
    with pytest.raises(ValueError):
        snr(f, np.ones((4, 4), bool))


def test_background_mask():
    gt = np.array([[0.0, 0.04], [0.05, 1.0]])
    np.testing.assert_array_equal(background_from_gt(gt), [[True, True], [False, False]])


def test_line_profile():
    img = np.full((7, 9), 0.25)
    p = line_profile(img, 3)
    assert len(p) == 9 and np.all(p == 0.25)
    assert len(line_profile(img, 8, axis="col")) == 7
    with pytest.raises(IndexError):
        line_profile(img, 7)
    phantom = point_phantom(radius=1)
    row = nine_point_centers()[0][0]
    prof = line_profile(phantom, row)
    peaks = [c for r, c in nine_point_centers() if r == row]
    assert set(np.flatnonzero(prof == prof.max())) == set(peaks) | {c + d for c in peaks for d in (-1, 1)}


def test_report_aggregate():
    rep = MetricsReport()
    rep.add("a", "das", 0.2, 10.0, 5.0)
    rep.add("b", "das", 0.4, 12.0, 7.0)
    rep.add("a", "gt", 1.0, math.inf, math.inf)
    agg = rep.aggregate()
    assert agg["das"]["ssim_mean"] == pytest.approx(0.3, abs=1e-12)
    assert agg["das"]["psnr_db_std"] == pytest.approx(1.0)
    assert agg["gt"]["psnr_db_mean"] == math.inf and math.isnan(agg["gt"]["psnr_db_std"])
    assert rep.methods() == ["das", "gt"]
    with pytest.raises(ValueError):
        rep.add("c", "das", 1.5, 0, 0)
