import numpy as np
import pytest

from irstlab.baselines import (
    PatchImageConfig,
    ipi_detect,
    lcm,
    patch_fold,
    patch_unfold,
    rpca_ialm,
    soft_threshold,
    threshold_to_mask,
    tophat,
)
from irstlab.image_core import GrayImage, connected_components
from irstlab.rng import Rng
from irstlab.synth import SceneSpec, make_sample


def test_tophat_constant_is_zero():
    img = GrayImage(np.full((16, 16), 0.6))
    assert np.allclose(tophat(img, se_radius=3), 0.0)


def test_tophat_isolated_peak_recovered():
    a = np.full((16, 16), 0.2)
    a[8, 8] = 0.9
    resp = tophat(GrayImage(a), se_radius=3)
    assert resp[8, 8] == pytest.approx(0.7)
    assert resp.max() == resp[8, 8]


def test_tophat_suppresses_large_plateau():
    a = np.full((32, 32), 0.1)
    a[4:24, 4:24] = 0.8  # much larger than the structuring element
    resp = tophat(GrayImage(a), se_radius=3)
    assert resp[14, 14] == pytest.approx(0.0, abs=1e-12)


def test_tophat_nonnegative_and_translation_equivariant():
    rng = Rng(2)
    base = np.full((24, 24), 0.3)
    base[6, 6] = 0.9
    r1 = tophat(GrayImage(base), se_radius=2)
    shifted = np.roll(base, (5, 7), axis=(0, 1))
    r2 = tophat(GrayImage(shifted), se_radius=2)
    assert r1.min() >= 0.0
    # compare away from borders where reflection padding differs
    assert r2[11, 13] == pytest.approx(r1[6, 6])


def test_lcm_constant_background_flat_score():
    # on a constant image the contrast ratio is max^2/mean = c everywhere
    img = GrayImage(np.full((18, 18), 0.4))
    score = lcm(img, scales=(3,))
    assert np.allclose(score, 0.4, atol=1e-9)


def test_lcm_bright_point_hand_value():
    a = np.full((27, 27), 0.1)
    a[13, 13] = 1.0
    score = lcm(GrayImage(a), scales=(3,))
    assert score[13, 13] == pytest.approx(10.0)
    assert score.max() == pytest.approx(10.0)
    r, c = np.unravel_index(np.argmax(score), score.shape)
    assert abs(r - 13) <= 1 and abs(c - 13) <= 1


def test_lcm_multiscale_takes_max():
    a = np.full((27, 27), 0.1)
    a[13, 13] = 1.0
    s_multi = lcm(GrayImage(a), scales=(3, 5, 7))
    s_each = [lcm(GrayImage(a), scales=(c,)) for c in (3, 5, 7)]
    np.testing.assert_allclose(s_multi, np.max(s_each, axis=0))


def test_soft_threshold_hand_values():
    x = np.array([-2.0, -0.5, 0.0, 0.5, 2.0])
    np.testing.assert_allclose(soft_threshold(x, 1.0), [-1.0, 0.0, 0.0, 0.0, 1.0])


def test_rpca_recovers_planted_decomposition():
    rng = Rng(5)
    m, n, r = 40, 40, 2
    u = rng.standard_normal((m, r))
    v = rng.standard_normal((r, n))
    low = (u @ v) / 10.0
    sparse = np.zeros((m, n))
    idx = rng.choice(m * n, 20, replace=False)
    sparse.flat[idx] = rng.uniform(0.5, 1.0, 20) * np.sign(rng.standard_normal(20))
    d = low + sparse
    b, t, info = rpca_ialm(d, tol=1e-7, max_iter=1000)
    assert info["converged"]
    assert np.abs(d - b - t).max() < 1e-5
    rel_b = np.linalg.norm(b - low) / np.linalg.norm(low)
    rel_t = np.linalg.norm(t - sparse) / np.linalg.norm(sparse)
    assert rel_b < 0.05 and rel_t < 0.05


def test_rpca_objective_monotone():
    rng = Rng(6)
    d = rng.standard_normal((30, 30))
    _, _, info = rpca_ialm(d, max_iter=60, track_objective=True)
    obj = info["objective"]
    assert all(b <= a + 1e-8 for a, b in zip(obj, obj[1:]))


def test_patch_unfold_fold_identity():
    rng = Rng(7)
    img = rng.uniform(0, 1, (40, 40))
    pat, grid = patch_unfold(img, 16, 8)
    assert pat.shape[0] == 16 * 16
    back = patch_fold(pat, grid, img.shape, 16)
    np.testing.assert_allclose(back, img, atol=1e-12)


def test_patch_grid_covers_borders():
    img = np.zeros((42, 50))
    pat, grid = patch_unfold(img, 16, 8)
    rows = {r for r, c in grid}
    cols = {c for r, c in grid}
    assert max(rows) == 42 - 16 and max(cols) == 50 - 16  # final offsets present


def test_ipi_constant_scene_no_target():
    img = GrayImage(np.full((48, 48), 0.5))
    score = ipi_detect(img, PatchImageConfig(max_iter=200))
    assert score.max() < 1e-6


def test_ipi_blob_argmax_inside_support():
    s = make_sample(SceneSpec(size=48, n_targets=1, scr_range=(8.0, 8.0),
                              background_kind="cloud", seed=3))
    score = ipi_detect(s.image, PatchImageConfig())
    r, c = np.unravel_index(np.argmax(score), score.shape)
    assert s.mask.bits[r, c] == 1


def test_threshold_fixed():
    score = np.array([[0.1, 0.5], [0.7, 0.2]])
    m = threshold_to_mask(score, method="fixed", tau=0.5)
    np.testing.assert_array_equal(m.bits, [[0, 0], [1, 0]])


def test_threshold_adaptive_matches_formula():
    rng = Rng(8)
    score = rng.uniform(0, 1, (16, 16))
    k = 2.0
    m = threshold_to_mask(score, k=k)
    tau = score.mean() + k * score.std()
    np.testing.assert_array_equal(m.bits, (score > tau).astype(np.uint8))


def test_threshold_rejects_unknown_method_and_nonfinite():
    with pytest.raises(ValueError):
        threshold_to_mask(np.zeros((4, 4)), method="otsu")
    with pytest.raises(ValueError):
        threshold_to_mask(np.array([[np.nan, 0.0]]), method="fixed", tau=0.5)


def test_detect_pipeline_finds_easy_target():
    s = make_sample(SceneSpec(size=48, n_targets=1, scr_range=(10.0, 10.0),
                              background_kind="sky-gradient", seed=9))
    resp = tophat(s.image, se_radius=3)
    m = threshold_to_mask(resp, k=4.0)
    comps = connected_components(m)
    assert any(s.mask.bits[int(round(c.centroid[0])), int(round(c.centroid[1]))]
               for c in comps)
