import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cropfcnn.hypercube import DEFAULT_WINDOWS, SpectralCube
from cropfcnn.indices import (
    DomainError,
    IndexMaps,
    compute_index_maps,
    evi,
    featurize,
    gndvi,
    hvi,
    msavi,
    ndvi,
    with_hvi,
)

refl = st.floats(0, 1, allow_nan=False)
weight = st.floats(-5, 5, allow_nan=False)


def test_ndvi_examples():
    assert ndvi(0.5, 0.5) == 0.0
    assert ndvi(0.0, 0.0) == 0.0
    assert ndvi(0.8, 0.1) == pytest.approx(0.77778, abs=1e-5)


def test_gndvi_examples():
    assert gndvi(0.4, 0.4) == 0.0
    assert gndvi(0.6, 0.2) == pytest.approx(0.5, abs=1e-12)
    assert gndvi(0.3, 0.0) == 1.0


def test_evi_examples():
    assert evi(0.3, 0.3, 0.05) == 0.0
    assert evi(0.5, 0.2, 0.1) == pytest.approx(0.38462, abs=1e-5)
    assert evi(0.4, 0.1, 0.2) == pytest.approx(1.5, abs=1e-12)


def test_evi_degenerate_denominator():
    # nir + 6 red - 7.5 blue + 1 == 0 at nir=0.5, red=0, blue=0.2
    assert evi(0.5, 0.0, 0.2) == 0.0


def test_msavi_examples():
    assert msavi(0.3, 0.3) == pytest.approx(0.0, abs=1e-15)
    assert msavi(0.8, 0.2) == pytest.approx(0.6, abs=1e-12)
    assert msavi(0.0, 0.0) == 0.0


@pytest.mark.parametrize("fn, args", [(ndvi, (-0.1, 0.2)), (gndvi, (0.2, math.nan)), (evi, (0.1, 0.1, -1)), (msavi, (math.inf, 0.1))])
def test_domain_errors(fn, args):
    with pytest.raises(DomainError):
        fn(*args)


@given(refl, refl)
def test_normalized_differences_bounded(a, b):
    assert -1.0 <= ndvi(a, b) <= 1.0
    assert -1.0 <= gndvi(a, b) <= 1.0


@given(refl, refl)
def test_msavi_bounded(nir, red):
    assert msavi(nir, red) <= 1.0 + 1e-12


def test_hvi_examples():
    assert hvi([0.4, 0.5, 0.38, 0.6], [1, 0, 0, 0]) == 0.4
    assert hvi([0.4, 0.5, 0.38, 0.6], [0.25] * 4) == pytest.approx(0.47, abs=1e-12)
    assert hvi([0.4, 0.5, 0.38, 0.6], [0] * 4) == 0.0


@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4), st.lists(weight, min_size=4, max_size=4),
       st.lists(weight, min_size=4, max_size=4), weight, weight)
def test_hvi_linear_in_weights(ind, w, v, a, b):
    mixed = a * np.array(w) + b * np.array(v)
    assert hvi(ind, mixed) == pytest.approx(a * hvi(ind, w) + b * hvi(ind, v), abs=1e-12)


@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4), st.lists(weight, min_size=4, max_size=4))
def test_hvi_weight_gradient_is_index(ind, w):
    # hvi is exactly linear, so a unit step in w_k moves it by I_k
    for k in range(4):
        bumped = list(w)
        bumped[k] += 1.0
        assert hvi(ind, bumped) - hvi(ind, w) == pytest.approx(ind[k], abs=1e-12)


def _cube_from_levels(blue, green, red, nir, h=1, w=1):
    wl = 450.0 + 4.0 * np.arange(125)
    spectrum = np.full(125, 0.33)
    for lo, hi, v in ((450, 495, blue), (495, 570, green), (620, 690, red), (760, 900, nir)):
        spectrum[(wl >= lo) & (wl < hi)] = v
    return SpectralCube(np.broadcast_to(spectrum[:, None, None], (125, h, w)).copy(), 450.0, 4.0)


def test_index_maps_single_pixel():
    maps = compute_index_maps(_cube_from_levels(0.05, 0.2, 0.1, 0.8))
    assert maps.ndvi[0, 0] == pytest.approx(0.77778, abs=1e-5)
    assert maps.gndvi[0, 0] == pytest.approx(0.6, abs=1e-12)
    assert maps.evi[0, 0] == pytest.approx(2.5 * 0.7 / (0.8 + 0.6 - 0.375 + 1), abs=1e-12)
    assert maps.msavi[0, 0] == pytest.approx((2.6 - math.sqrt(2.6**2 - 8 * 0.7)) / 2, abs=1e-12)


def test_index_maps_constant_cube():
    maps = compute_index_maps(_cube_from_levels(0.04, 0.1, 0.05, 0.5, h=3, w=2))
    assert maps.ndvi.shape == (3, 2)
    np.testing.assert_allclose(maps.ndvi, ndvi(0.5, 0.05), atol=1e-15)
    np.testing.assert_allclose(maps.msavi, msavi(0.5, 0.05), atol=1e-15)


def test_index_maps_ignore_bands_outside_windows():
    a = _cube_from_levels(0.04, 0.1, 0.05, 0.5)
    data = a.data.copy()
    wl = a.wavelengths
    outside = np.ones(125, bool)
    for w in DEFAULT_WINDOWS.values():
        outside &= ~((wl >= w.low) & (wl < w.high))
    data[outside] = 0.9
    b = SpectralCube(data, 450.0, 4.0)
    for name in ("ndvi", "gndvi", "evi", "msavi"):
        np.testing.assert_array_equal(getattr(compute_index_maps(a), name), getattr(compute_index_maps(b), name))


def test_index_maps_match_scalar_loop():
    rng = np.random.default_rng(5)
    cube = SpectralCube(rng.uniform(0, 1, (40, 3, 4)), 450.0, 12.0)
    maps = compute_index_maps(cube)
    wl = cube.wavelengths

    def mean(win, r, c):
        vals = [cube.data[b, r, c] for b in range(cube.bands) if win.low <= wl[b] < win.high]
        return sum(vals) / len(vals)

    W = DEFAULT_WINDOWS
    for r in range(3):
        for c in range(4):
            nir, red, green, blue = (mean(W[k], r, c) for k in ("NIR", "Red", "Green", "Blue"))
            assert maps.ndvi[r, c] == pytest.approx(ndvi(nir, red), abs=1e-12)
            assert maps.gndvi[r, c] == pytest.approx(gndvi(nir, green), abs=1e-12)
            assert maps.evi[r, c] == pytest.approx(evi(nir, red, blue), abs=1e-12)
            assert maps.msavi[r, c] == pytest.approx(msavi(nir, red), abs=1e-12)


def _maps(values):
    a = np.asarray(values, dtype=float)
    return IndexMaps(a[0], a[1], a[2], a[3])


def test_featurize_examples():
    one = _maps([[[0.4]], [[0.5]], [[0.38]], [[0.6]]])
    np.testing.assert_allclose(featurize(one), [0.4, 0.5, 0.38, 0.6, 0.47], atol=1e-12)
    two = _maps([[[0.2, 0.6]], [[0.1, 0.1]], [[0.0, 0.0]], [[0.3, 0.3]]])
    f = featurize(two, [1, 0, 0, 0])
    assert f[0] == pytest.approx(0.4, abs=1e-15)
    assert f[4] == f[0]


def test_featurize_empty():
    with pytest.raises(ValueError):
        featurize(IndexMaps(np.empty((0, 0)), np.empty((0, 0)), np.empty((0, 0)), np.empty((0, 0))))


def test_featurize_permutation_invariant():
    rng = np.random.default_rng(0)
    vals = rng.uniform(-1, 1, (4, 3, 5))
    perm = rng.permutation(15)
    shuffled = vals.reshape(4, 15)[:, perm].reshape(4, 3, 5)
    np.testing.assert_allclose(featurize(_maps(vals)), featurize(_maps(shuffled)), atol=1e-14)


def test_hvi_of_means_equals_mean_of_hvi():
    rng = np.random.default_rng(1)
    vals = rng.uniform(-1, 1, (4, 6, 6))
    w = rng.normal(size=4)
    per_pixel = np.mean(hvi(np.moveaxis(vals, 0, -1), w))
    assert featurize(_maps(vals), w)[4] == pytest.approx(per_pixel, abs=1e-12)


def test_with_hvi_column():
    raw = np.array([[0.4, 0.5, 0.38, 0.6], [0.1, 0.2, 0.3, 0.4]])
    out = with_hvi(raw, [0.25] * 4)
    assert out.shape == (2, 5)
    assert out[0, 4] == pytest.approx(0.47)
