import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pat_ynet.geometry import ImagingGeometry, check_image, check_sinogram
from pat_ynet.io import write_pgm
from pat_ynet.phantoms import (VesselParams, compose_vessel_phantom, load_mask, mask_source, nine_point_centers,
                               point_phantom, procedural_vessel_mask, split_quadrants)


# -- geometry -------------------------------------------------------------------

def test_default_geometry(geom):
    assert geom.image_shape == (128, 128)
    assert geom.sinogram_shape == (2560, 128)
    assert geom.passband == pytest.approx((4.2e6, 9.8e6))
    pos = geom.sensor_positions
    assert np.all(np.diff(pos[:, 0]) > 0) and np.all(pos[:, 1] == 0)
    # element k sits above column k
    x, _ = geom.pixel_coordinates()
    np.testing.assert_allclose(pos[:, 0], x[0], rtol=1e-12)
    assert geom.sample_count * geom.sound_speed / geom.sample_rate >= geom.diagonal


def test_arrival_sample_arithmetic(geom):
    assert geom.arrival_sample(0.015) == pytest.approx(400.0, abs=1e-9)
    # one pixel deeper = 8 samples
    assert geom.arrival_sample(geom.pixel_pitch) == pytest.approx(8.0)


def test_geometry_rejects_short_record_and_bad_values():
    with pytest.raises(ValueError):
        ImagingGeometry(sample_count=100)
    with pytest.raises(ValueError):
        ImagingGeometry(pixel_pitch=0)
    with pytest.raises(ValueError):
        ImagingGeometry.from_dict({"grid_nx": 128, "bogus": 1})


def test_geometry_dict_round_trip(geom):
    assert ImagingGeometry.from_dict(geom.to_dict()) == geom


def test_shape_checks(geom):
    with pytest.raises(ValueError):
        check_image(np.zeros((64, 64)), geom)
    with pytest.raises(ValueError):
        check_sinogram(np.zeros((2560, 64)), geom)
    bad = np.zeros(geom.sinogram_shape)
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        check_sinogram(bad, geom)


# -- vessel phantoms --------------------------------------------------------------

def rotate_oracle(q: np.ndarray, turns: int) -> np.ndarray:
    """Counter-clockwise quarter turns by explicit index remapping."""
    out = q.copy()
    for _ in range(turns % 4):
        n = out.shape[0]
        nxt = np.empty_like(out)
        for i in range(n):
            for j in range(n):
                nxt[n - 1 - j, i] = out[i, j]
        out = nxt
    return out


def test_compose_all_ones():
    out = compose_vessel_phantom(np.ones((256, 256)), seed=3)
    assert out.shape == (128, 128) and np.all(out == 1.0)


def test_compose_deterministic():
    m = procedural_vessel_mask(5)
    np.testing.assert_array_equal(compose_vessel_phantom(m, 11), compose_vessel_phantom(m, 11))


def test_compose_matches_index_remap_oracle():
    mask = procedural_vessel_mask(42)
    rng = np.random.default_rng(7)
    picks = rng.integers(0, 4, size=2)
    turns = rng.integers(0, 4, size=2)
    quads = [mask[:128, :128], mask[:128, 128:], mask[128:, :128], mask[128:, 128:]]
    a = rotate_oracle(quads[picks[0]], turns[0])
    b = rotate_oracle(quads[picks[1]], turns[1])
    ref = np.maximum(a, b).astype(float)
    ref /= ref.max()
    np.testing.assert_array_equal(compose_vessel_phantom(mask, 7), ref)


def test_compose_resamples_small_masks_and_rejects_bad_input():
    m = np.zeros((64, 64))
    m[::3, :] = 1
    out = compose_vessel_phantom(m, 0)
    assert out.shape == (128, 128) and set(np.unique(out)) <= {0.0, 1.0}
    with pytest.raises(ValueError):
        compose_vessel_phantom(np.zeros((256, 256)), 0)
    with pytest.raises(ValueError):
        compose_vessel_phantom(np.ones((4, 4, 4)), 0)


@given(arrays(np.uint8, (32, 32), elements=st.integers(0, 1)), st.integers(0, 2 ** 31))
def test_compose_range_property(mask, seed):
    if not mask.any():
        mask[0, 0] = 1
    out = compose_vessel_phantom(mask, seed)
    assert out.min() >= 0 and out.max() <= 1


@given(arrays(np.uint8, (8, 8), elements=st.integers(0, 5)))
def test_four_quarter_turns_identity(q):
    np.testing.assert_array_equal(np.rot90(np.rot90(np.rot90(np.rot90(q)))), q)
    np.testing.assert_array_equal(rotate_oracle(q, 1), np.rot90(q))


def test_split_quadrants_order():
    m = np.arange(16).reshape(4, 4)
    q = split_quadrants(m, size=2)
    np.testing.assert_array_equal(q[1], [[2, 3], [6, 7]])
    np.testing.assert_array_equal(q[2], [[8, 9], [12, 13]])


# -- point phantoms ---------------------------------------------------------------

def test_point_phantom_trivial_cases():
    assert not point_phantom([], radius=2).any()
    img = point_phantom([(10, 20)], radius=0)
    assert img.sum() == 1 and img[10, 20] == 1
    with pytest.raises(ValueError):
        point_phantom([(200, 5)])
    with pytest.raises(ValueError):
        point_phantom([(5, 5)], radius=-1)


def test_nine_points_match_brute_force_rasterization():
    centers = nine_point_centers()
    assert len(centers) == 9
    img = point_phantom(centers, radius=1)
    disk = sum(1 for dy in range(-3, 4) for dx in range(-3, 4) if dy * dy + dx * dx <= 1)
    assert disk == 5
    assert int(img.sum()) == 9 * disk
    ref = np.zeros((128, 128))
    for r, c in centers:
        for y in range(128):
            for x in range(128):
                if (y - r) ** 2 + (x - c) ** 2 <= 1:
                    ref[y, x] = 1
    np.testing.assert_array_equal(img, ref)


def test_nine_point_layout():
    rows = sorted({r for r, _ in nine_point_centers()})
    assert rows == [43, 85]
    upper = [c for r, c in nine_point_centers() if r == 43]
    assert np.all(np.diff(upper) > 0) and len(upper) == 5


@given(st.permutations(nine_point_centers()))
def test_point_phantom_permutation_invariant(perm):
    np.testing.assert_array_equal(point_phantom(perm), point_phantom(nine_point_centers()))


# -- procedural masks ------------------------------------------------------------------

def test_procedural_mask_deterministic():
    a, b = procedural_vessel_mask(1), procedural_vessel_mask(1)
    assert a.shape == (256, 256) and a.dtype == bool
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, procedural_vessel_mask(2))


def test_procedural_short_walk_bound():
    # 10 steps of 1.5 px drawn one pixel wide: at most ~15 px of path plus the start
    for seed in range(20):
        n = procedural_vessel_mask(seed, n_branches=1, steps=10, thickness=1).sum()
        assert 10 <= n <= 30


def test_procedural_rejects_degenerate():
    with pytest.raises(ValueError):
        procedural_vessel_mask(0, n_branches=0)
    with pytest.raises(ValueError):
        VesselParams(thickness=0).validate()


def test_mask_files_round_trip(tmp_path):
    m = procedural_vessel_mask(3)
    write_pgm(tmp_path / "m.pgm", m.astype(np.float32))
    np.testing.assert_array_equal(load_mask(tmp_path / "m.pgm"), m)
    draw = mask_source([tmp_path / "m.pgm"])
    np.testing.assert_array_equal(draw(np.random.default_rng(0)), m)
    proc = mask_source(None)(np.random.default_rng(0))
    assert proc.shape == (256, 256) and proc.any()
