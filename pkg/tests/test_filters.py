import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import diffusion_reference, gaussian_kernel_ratios
from satedge import filters
from satedge.errors import DegenerateChannelWarning, DegenerateRangeWarning, NumericInstabilityError
from satedge.filters import (ConditionalTriggerParams, DiffusionParams, anisotropic_diffusion,
                             conditional_contrast_normalization, conditional_gaussian_blur,
                             fuzzy_histogram_hyperbolization, gaussian_blur, gaussian_kernel,
                             gray_world_gains, median_blur, white_balance)

unit = st.floats(0.0, 1.0, allow_nan=False)
small_gray = arrays(np.float64, st.tuples(st.integers(2, 10), st.integers(2, 10)), elements=unit)


# --- white balance ---------------------------------------------------------

def test_white_balance_neutral_image_unchanged(rng):
    gray = rng.random((8, 9))
    img = np.repeat(gray[:, :, None], 3, axis=2)
    np.testing.assert_allclose(white_balance(img), img, atol=1e-15)


def test_white_balance_constant_colour():
    img = np.empty((4, 4, 3))
    img[:] = (0.2, 0.4, 0.6)
    # gray world: every channel goes to the mean of the means, (0.2+0.4+0.6)/3
    np.testing.assert_allclose(white_balance(img), 0.4, atol=1e-15)


def test_white_balance_zero_channel_warns_and_passes_through(rng):
    img = rng.random((5, 5, 3))
    img[:, :, 2] = 0.0
    with pytest.warns(DegenerateChannelWarning):
        out = white_balance(img)
    np.testing.assert_array_equal(out, img)


@settings(max_examples=50)
@given(arrays(np.float64, (6, 7, 3), elements=st.floats(0.01, 1.0)))
def test_white_balance_equalizes_means_before_clipping(img):
    balanced = img * gray_world_gains(img)
    means = balanced.reshape(-1, 3).mean(axis=0)
    assert np.ptp(means) < 1e-6


# --- anisotropic diffusion -------------------------------------------------

def test_diffusion_constant_and_zero_iterations(rng):
    const = np.full((9, 7), 0.37)
    np.testing.assert_array_equal(anisotropic_diffusion(const, DiffusionParams(K=0.1, K_mode="fixed")), const)
    np.testing.assert_array_equal(anisotropic_diffusion(const), const)
    img = rng.random((9, 7))
    np.testing.assert_array_equal(anisotropic_diffusion(img, DiffusionParams(iterations=0)), img)


def test_diffusion_step_edge_small_kappa_preserved():
    step = np.array([[0.0, 0.0, 1.0, 1.0]])
    params = DiffusionParams(iterations=10, time_step=0.25, K=0.01, K_mode="fixed")
    out = anisotropic_diffusion(step, params)
    ref = diffusion_reference(step, 0.01, 0.25, 10)
    np.testing.assert_allclose(out, ref, atol=1e-12)
    np.testing.assert_allclose(out, step, atol=1e-3)


def test_diffusion_step_edge_large_kappa_flattens():
    step = np.array([[0.0, 0.0, 1.0, 1.0]])
    params = DiffusionParams(iterations=10, time_step=0.25, K=100.0, K_mode="fixed")
    out = anisotropic_diffusion(step, params)
    ref = diffusion_reference(step, 100.0, 0.25, 10)
    np.testing.assert_allclose(out, ref, atol=1e-12)
    assert out.mean() == pytest.approx(0.5, abs=1e-12)
    # near-linear heat flow: the spread about the mean shrinks with every iteration
    spreads = [np.abs(diffusion_reference(step, 100.0, 0.25, n) - 0.5).max() for n in range(0, 31, 5)]
    assert all(a > b for a, b in zip(spreads, spreads[1:]))
    assert np.abs(out - 0.5).max() == pytest.approx(spreads[2], abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(small_gray, st.floats(0.01, 2.0), st.integers(1, 6))
def test_diffusion_matches_scalar_reference(img, kappa, iterations):
    params = DiffusionParams(iterations=iterations, K=kappa, K_mode="fixed")
    out = anisotropic_diffusion(img, params)
    np.testing.assert_allclose(out, diffusion_reference(img, kappa, 0.25, iterations), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(small_gray, st.floats(0.01, 2.0), st.floats(0.01, 0.25))
def test_diffusion_conserves_mean_and_bounds_each_step(img, kappa, dt):
    u = img.copy()
    lo, hi = img.min(), img.max()
    for _ in range(5):
        before = u.mean()
        filters._diffusion_step(u, kappa, dt)
        assert abs(u.mean() - before) <= 1e-9
        assert u.min() >= lo - 1e-12 and u.max() <= hi + 1e-12


def test_diffusion_uses_noise_estimate_by_default(rng):
    img = np.clip(0.5 + 0.05 * rng.standard_normal((32, 32)), 0, 1)
    from satedge.canny import noise_estimate

    k = noise_estimate(img)
    auto = anisotropic_diffusion(img)
    fixed = anisotropic_diffusion(img, DiffusionParams(K=k, K_mode="fixed"))
    np.testing.assert_array_equal(auto, fixed)
    assert auto.std() < img.std()


def test_diffusion_instability_raises(monkeypatch, rng):
    def blow_up(u, kappa, dt):
        u[0, 0] = np.inf

    monkeypatch.setattr(filters, "_diffusion_step", blow_up)
    with pytest.raises(NumericInstabilityError):
        anisotropic_diffusion(rng.random((4, 4)), DiffusionParams(K=0.1, K_mode="fixed"))


@pytest.mark.parametrize("kwargs", [{"time_step": 0.3}, {"time_step": 0.0}, {"K": 0.0, "K_mode": "fixed"},
                                    {"iterations": -1}, {"K_mode": "bogus"}])
def test_diffusion_params_validation(kwargs):
    with pytest.raises(ValueError):
        DiffusionParams(**kwargs)


# --- contrast normalization ------------------------------------------------

def test_cn_balanced_image_not_applied(rng):
    img = np.clip(0.5 + 0.1 * rng.standard_normal((40, 40)), 0, 1)
    img[0, :4] = 0.02   # a little mass in each tail
    img[1, :4] = 0.98
    out, outcome = conditional_contrast_normalization(img)
    assert not outcome.applied
    assert out is img


def test_cn_constant_image_not_applied():
    img = np.full((10, 10), 0.5)
    out, outcome = conditional_contrast_normalization(img)
    assert not outcome.applied
    np.testing.assert_array_equal(out, img)


def test_cn_bright_skew_traced():
    # 90 px in the top tail, 1 px in the bottom tail, 9 px mid-gray
    img = np.array([0.95] * 90 + [0.5] * 9 + [0.02]).reshape(10, 10)
    out, outcome = conditional_contrast_normalization(img)
    assert outcome.applied
    assert outcome.diagnostics["upper_mass"] == 90 and outcome.diagnostics["lower_mass"] == 1
    # shift down 0.2 and saturate: 0.75, 0.30, 0.0; stretch [0, 0.75] -> [0, 1]
    assert out.min() == 0.0 and out.max() == 1.0
    np.testing.assert_allclose(out.ravel()[[0, 90, 99]], [1.0, 0.4, 0.0], atol=1e-12)


def test_cn_dark_skew_shifts_up():
    img = np.array([0.05] * 90 + [0.5] * 9 + [0.97]).reshape(10, 10)
    out, outcome = conditional_contrast_normalization(img)
    assert outcome.applied and outcome.diagnostics["direction"] == "up"
    # shift up: 0.25, 0.70, 1.0 (saturated); stretch [0.25, 1] -> [0, 1]
    np.testing.assert_allclose(out.ravel()[[0, 90, 99]], [0.0, 0.6, 1.0], atol=1e-12)


def test_cn_one_empty_tail_counts_as_infinite_ratio():
    img = np.array([0.95] * 10 + [0.5] * 90).reshape(10, 10)
    _, outcome = conditional_contrast_normalization(img)
    assert outcome.applied and outcome.diagnostics["skew_ratio"] == np.inf


def test_cn_without_saturation_is_plain_stretch():
    img = np.array([0.95] * 90 + [0.5] * 9 + [0.02]).reshape(10, 10)
    params = ConditionalTriggerParams(saturate_shift=False)
    out, outcome = conditional_contrast_normalization(img, params)
    stretch = (img - img.min()) / (img.max() - img.min())
    assert outcome.applied
    np.testing.assert_allclose(out, stretch, atol=1e-12)


def test_cn_multiplicative_mode():
    img = np.array([0.95] * 90 + [0.5] * 9 + [0.02]).reshape(10, 10)
    params = ConditionalTriggerParams(shift_mode="multiplicative")
    out, outcome = conditional_contrast_normalization(img, params)
    assert outcome.applied
    assert out.min() == 0.0 and out.max() == 1.0


def test_cn_forced_on_balanced_image(rng):
    img = np.clip(0.5 + 0.1 * rng.standard_normal((40, 40)), 0, 1)
    img[0, :4] = 0.02
    img[1, :4] = 0.98
    out, outcome = conditional_contrast_normalization(img, force=True)
    assert outcome.applied
    assert out.min() == 0.0 and out.max() == 1.0


# --- fuzzy histogram hyperbolization ---------------------------------------

def test_fhh_endpoints_and_midpoint():
    img = np.array([[0.2, 0.45, 0.7]])
    out = fuzzy_histogram_hyperbolization(img)
    assert out[0, 0] == pytest.approx(0.0, abs=1e-12)
    assert out[0, 2] == pytest.approx(1.0, abs=1e-12)
    # mu = 0.5: (e^-0.5 - 1) / (e^-1 - 1)
    assert out[0, 1] == pytest.approx(0.6224593312018546, abs=1e-12)
    assert out[0, 1] == pytest.approx(0.6225, abs=1e-4)


def test_fhh_lambda_substitution_gives_L_minus_1():
    # lambda * (e^-1 - 1) == L - 1 for any L
    for L in (2, 16, 256):
        lam = (L - 1) / (np.exp(-1.0) - 1.0)
        assert lam * (np.exp(-1.0) - 1.0) == pytest.approx(L - 1, rel=1e-14)
        out = fuzzy_histogram_hyperbolization(np.array([[0.0, 1.0]]), L=L)
        assert out[0, 1] == pytest.approx(1.0, abs=1e-12)


def test_fhh_constant_image_warns():
    img = np.full((3, 3), 0.4)
    with pytest.warns(DegenerateRangeWarning):
        out = fuzzy_histogram_hyperbolization(img)
    np.testing.assert_array_equal(out, img)


@given(st.lists(st.integers(0, 255), min_size=2, max_size=64, unique=True))
def test_fhh_strictly_monotone(levels):
    img = np.array(levels, dtype=np.float64)[None, :] / 255.0
    out = fuzzy_histogram_hyperbolization(img)
    order = np.argsort(img[0])
    assert (np.diff(out[0, order]) > 0).all()
    assert out.min() == pytest.approx(0.0, abs=1e-12) and out.max() == pytest.approx(1.0, abs=1e-12)


# --- median and gaussian blur ----------------------------------------------

def test_median_examples():
    const = np.full((5, 6), 0.3)
    np.testing.assert_array_equal(median_blur(const), const)
    spot = np.zeros((7, 7))
    spot[3, 3] = 1.0
    np.testing.assert_array_equal(median_blur(spot), np.zeros((7, 7)))
    one = np.array([[0.8]])
    np.testing.assert_array_equal(median_blur(one), one)


def test_gaussian_kernel_ratios():
    k = gaussian_kernel(1.5)
    centre, edge, corner = gaussian_kernel_ratios(1.5)
    assert k.sum() == pytest.approx(1.0, abs=1e-15)
    assert k[0, 1] / k[1, 1] == pytest.approx(edge / centre, rel=1e-14)
    assert k[0, 0] / k[1, 1] == pytest.approx(corner / centre, rel=1e-14)
    assert edge == pytest.approx(np.exp(-1 / 4.5)) and corner == pytest.approx(np.exp(-2 / 4.5))


def test_gaussian_constant_and_impulse():
    const = np.full((6, 6), 0.61)
    np.testing.assert_allclose(gaussian_blur(const), const, atol=1e-12)
    impulse = np.zeros((7, 7))
    impulse[3, 3] = 1.0
    out = gaussian_blur(impulse)
    np.testing.assert_allclose(out[2:5, 2:5], gaussian_kernel(1.5), atol=1e-15)
    assert out.sum() == pytest.approx(1.0)


@settings(max_examples=40)
@given(small_gray)
def test_blurs_stay_within_input_range(img):
    for out in (gaussian_blur(img), median_blur(img)):
        assert out.shape == img.shape
        assert out.min() >= img.min() and out.max() <= img.max()


# --- conditional blur ------------------------------------------------------

def _levels_image(counts):
    """100x100 raster whose histogram holds counts[bin] pixels per bin."""
    values = np.concatenate([np.full(n, b / 255.0) for b, n in counts.items()])
    assert values.size == 10_000
    return values.reshape(100, 100)


def test_cb_constant_not_applied():
    img = np.full((20, 20), 0.5)
    out, outcome = conditional_gaussian_blur(img)
    assert not outcome.applied and out is img


def test_cb_sparse_histogram_fires():
    # 30 bins with one pixel each (0.01% of 10 000), 10 heavy bins: 30/40 sparse
    counts = {b: 1 for b in range(100, 130)}
    counts.update({b: 997 for b in range(10, 20)})
    img = _levels_image(counts)
    out, outcome = conditional_gaussian_blur(img)
    assert outcome.diagnostics == {"nonempty_bins": 40, "sparse_bins": 30, "sparse_fraction": 0.75}
    assert outcome.applied
    np.testing.assert_array_equal(out, gaussian_blur(img))


def test_cb_heavy_bins_do_not_fire():
    img = _levels_image({20: 2500, 80: 2500, 150: 2500, 220: 2500})
    out, outcome = conditional_gaussian_blur(img)
    assert outcome.diagnostics["sparse_bins"] == 0
    assert not outcome.applied and out is img


def test_cb_trigger_boundary():
    # 4 sparse of 40 non-empty is exactly 10%: not "more than"
    counts = {b: 1 for b in range(100, 104)}
    counts.update({b: 9996 // 36 for b in range(10, 46)})
    counts[10] += 10_000 - sum(counts.values())
    _, outcome = conditional_gaussian_blur(_levels_image(counts))
    assert outcome.diagnostics["sparse_bins"] == 4
    assert not outcome.applied


def test_cb_all_bins_denominator():
    counts = {b: 1 for b in range(100, 130)}
    counts.update({b: 997 for b in range(10, 20)})
    params = ConditionalTriggerParams(sparse_denominator="all")
    _, outcome = conditional_gaussian_blur(_levels_image(counts), params)
    assert outcome.diagnostics["sparse_fraction"] == pytest.approx(30 / 256)
    assert outcome.applied


@pytest.mark.parametrize("kwargs", [{"shift_factor": 0.0}, {"skew_ratio_threshold": 1.0},
                                    {"sparse_bin_fraction": 1.5}, {"shift_mode": "x"}])
def test_trigger_params_validation(kwargs):
    with pytest.raises(ValueError):
        ConditionalTriggerParams(**kwargs)


@settings(max_examples=30, deadline=None)
@given(small_gray)
def test_every_filter_preserves_shape_and_range(img):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        outs = [anisotropic_diffusion(img), fuzzy_histogram_hyperbolization(img), median_blur(img),
                gaussian_blur(img), conditional_contrast_normalization(img)[0],
                conditional_gaussian_blur(img)[0]]
    for out in outs:
        assert out.shape == img.shape
        assert np.isfinite(out).all() and out.min() >= 0.0 and out.max() <= 1.0
