"""Scoring path tests: residuals, TVaR, upsampling, smoothing, pipeline.

Oracles: sorted-tail mean for TVaR, per-pixel interpolation formula for the
bilinear resize, and a direct convolution double loop for the blur.
"""

import math

import numpy as np
import pytest

from subspace_ad import model, scoring
from subspace_ad.errors import DimensionMismatch, EmptyMap, InvalidTarget
from subspace_ad.fileio import FeatureMap


# --- oracles -----------------------------------------------------------------

def tvar_oracle(scores, rho):
    flat = np.sort(np.asarray(scores).reshape(-1))[::-1]
    m = max(1, math.ceil(rho * flat.size / 100.0))
    return flat[:m].mean()


def bilinear_oracle(grid, target_h, target_w):
    h, w = grid.shape
    out = np.zeros((target_h, target_w))
    for i in range(target_h):
        for j in range(target_w):
            sy = min(max((i + 0.5) * h / target_h - 0.5, 0.0), h - 1.0)
            sx = min(max((j + 0.5) * w / target_w - 0.5, 0.0), w - 1.0)
            y0, x0 = int(math.floor(sy)), int(math.floor(sx))
            y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
            fy, fx = sy - y0, sx - x0
            out[i, j] = (grid[y0, x0] * (1 - fy) * (1 - fx)
                         + grid[y0, x1] * (1 - fy) * fx
                         + grid[y1, x0] * fy * (1 - fx)
                         + grid[y1, x1] * fy * fx)
    return out


def reflect_index(i, n):
    # numpy 'reflect': ... 2 1 | 0 1 2 ... n-1 | n-2 n-3 ...
    if n == 1:
        return 0
    period = 2 * (n - 1)
    i = i % period
    if i < 0:
        i += period
    return i if i < n else period - i


def convolution_oracle(grid, sigma):
    h, w = grid.shape
    radius = math.ceil(4 * sigma)
    xs = np.arange(-radius, radius + 1)
    kernel = np.exp(-xs ** 2 / (2 * sigma ** 2))
    kernel /= kernel.sum()
    out = np.zeros_like(grid)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    yy = reflect_index(y + dy, h)
                    xx = reflect_index(x + dx, w)
                    acc += (kernel[dy + radius] * kernel[dx + radius]
                            * grid[yy, xx])
            out[y, x] = acc
    return out


# --- helpers -----------------------------------------------------------------

def fitted_model(rng, d=6, r_true=2, n=120):
    basis = np.linalg.qr(rng.standard_normal((d, d)))[0][:, :r_true]
    mu = rng.standard_normal(d)
    rows = mu + rng.standard_normal((n, r_true)) @ basis.T
    maps = [FeatureMap(grid_h=n // 10, grid_w=10, dim=d,
                       data=rows.reshape(n // 10, 10, d).astype(np.float32))]
    return model.fit(maps, tau=0.99), mu


def single_patch_map(vec):
    return FeatureMap(grid_h=1, grid_w=1, dim=vec.size,
                      data=vec.reshape(1, 1, -1).astype(np.float32))


def amap_of(scores):
    scores = np.asarray(scores, dtype=np.float64)
    return scoring.AnomalyMap(grid_h=scores.shape[0], grid_w=scores.shape[1],
                              scores=scores)


# --- patch_scores ------------------------------------------------------------

def axis_model(d=6, r=2):
    # exactly representable in f32 storage, so in-span inputs stay in-span
    return model.SubspaceModel(
        dim=d, mean=np.zeros(d), basis=np.eye(d)[:, :r],
        eigenvalues=np.linspace(2.0, 1.0, r), rank=r, tau=0.99,
        fit_row_count=10)


class TestPatchScores:
    def test_mean_scores_zero(self):
        m = axis_model()
        fmap = FeatureMap(2, 2, m.dim,
                          np.tile(m.mean, (2, 2, 1)).astype(np.float32))
        out = scoring.patch_scores(m, fmap)
        np.testing.assert_array_equal(out.scores, np.zeros((2, 2)))

    def test_fitted_mean_scores_near_zero(self):
        # through a fitted model the f32 feature storage perturbs mu off the
        # subspace by rounding noise; scores sit at that floor, not at 0
        rng = np.random.default_rng(50)
        m, _ = fitted_model(rng)
        fmap = FeatureMap(2, 2, m.dim,
                          np.tile(m.mean, (2, 2, 1)).astype(np.float32))
        assert scoring.patch_scores(m, fmap).scores.max() <= 1e-12

    def test_in_subspace_direction_scores_zero(self):
        m = axis_model()
        vec = m.mean + 3.7 * m.basis[:, 0]
        out = scoring.patch_scores(m, single_patch_map(vec))
        assert out.scores[0, 0] == 0.0

    def test_orthogonal_direction_full_residual(self):
        rng = np.random.default_rng(52)
        m, _ = fitted_model(rng)
        v = rng.standard_normal(m.dim)
        for j in range(m.rank):
            v -= (m.basis[:, j] @ v) * m.basis[:, j]
        v *= 2.0 / np.linalg.norm(v)
        out = scoring.patch_scores(m, single_patch_map(m.mean + v))
        assert out.scores[0, 0] == pytest.approx(4.0, abs=1e-5)

    def test_dim_mismatch(self):
        rng = np.random.default_rng(53)
        m, _ = fitted_model(rng, d=6)
        with pytest.raises(DimensionMismatch):
            scoring.patch_scores(m, single_patch_map(np.zeros(5)))

    def test_non_negative(self):
        rng = np.random.default_rng(54)
        m, _ = fitted_model(rng)
        fmap = FeatureMap(4, 4, m.dim,
                          rng.standard_normal((4, 4, m.dim)).astype(np.float32))
        assert np.all(scoring.patch_scores(m, fmap).scores >= 0.0)


# --- image_score -------------------------------------------------------------

class TestImageScore:
    def test_constant(self):
        out = scoring.image_score(amap_of(np.full((3, 4), 2.5)), rho=10.0)
        assert out.value == 2.5

    def test_top_one_of_hundred(self):
        scores = np.arange(1.0, 101.0).reshape(10, 10)
        out = scoring.image_score(amap_of(scores), rho=1.0)
        assert out.value == 100.0
        assert out.rho == 1.0

    def test_top_three_of_ten(self):
        scores = np.arange(1.0, 11.0).reshape(2, 5)
        out = scoring.image_score(amap_of(scores), rho=25.0)
        assert out.value == pytest.approx((10 + 9 + 8) / 3.0)

    def test_matches_sort_oracle(self):
        rng = np.random.default_rng(55)
        for _ in range(50):
            h, w = rng.integers(1, 12, size=2)
            scores = rng.random((h, w)) * 10
            rho = float(rng.uniform(0.5, 60.0))
            got = scoring.image_score(amap_of(scores), rho).value
            assert got == pytest.approx(tvar_oracle(scores, rho), rel=1e-12)

    def test_monotone_under_increase(self):
        rng = np.random.default_rng(56)
        scores = rng.random((5, 5))
        base = scoring.image_score(amap_of(scores), rho=20.0).value
        for _ in range(30):
            bumped = scores.copy()
            i, j = rng.integers(0, 5, size=2)
            bumped[i, j] += rng.random() * 3
            assert scoring.image_score(amap_of(bumped), rho=20.0).value >= base

    def test_empty(self):
        with pytest.raises(EmptyMap):
            scoring.image_score(amap_of(np.zeros((0, 0))), rho=1.0)

    def test_bad_rho(self):
        with pytest.raises(ValueError):
            scoring.image_score(amap_of(np.ones((2, 2))), rho=0.0)


# --- upsample_bilinear -------------------------------------------------------

class TestUpsample:
    def test_constant(self):
        out = scoring.upsample_bilinear(amap_of(np.full((3, 3), 1.5)), 9, 12)
        np.testing.assert_allclose(out, 1.5)
        assert out.shape == (9, 12)

    def test_single_cell(self):
        out = scoring.upsample_bilinear(amap_of(np.array([[7.0]])), 5, 4)
        np.testing.assert_array_equal(out, np.full((5, 4), 7.0))

    def test_matches_formula_oracle(self):
        grid = np.array([[0.0, 1.0], [0.0, 1.0]])
        got = scoring.upsample_bilinear(amap_of(grid), 4, 4)
        np.testing.assert_allclose(got, bilinear_oracle(grid, 4, 4),
                                   rtol=0, atol=1e-12)

    def test_random_against_oracle(self):
        rng = np.random.default_rng(57)
        for _ in range(10):
            h, w = rng.integers(1, 7, size=2)
            th = int(h + rng.integers(0, 12))
            tw = int(w + rng.integers(0, 12))
            grid = rng.random((h, w))
            got = scoring.upsample_bilinear(amap_of(grid), th, tw)
            np.testing.assert_allclose(got, bilinear_oracle(grid, th, tw),
                                       rtol=0, atol=1e-12)

    def test_output_within_input_range(self):
        rng = np.random.default_rng(58)
        grid = rng.random((4, 5))
        out = scoring.upsample_bilinear(amap_of(grid), 13, 17)
        assert out.min() >= grid.min() - 1e-12
        assert out.max() <= grid.max() + 1e-12

    def test_invalid_target(self):
        with pytest.raises(InvalidTarget):
            scoring.upsample_bilinear(amap_of(np.ones((4, 4))), 3, 8)


# --- gaussian_smooth ---------------------------------------------------------

class TestGaussianSmooth:
    def test_constant_unchanged(self):
        out = scoring.gaussian_smooth(np.full((20, 20), 3.25), sigma=2.0)
        np.testing.assert_allclose(out, 3.25, rtol=0, atol=1e-12)

    def test_impulse_proportional_to_gaussian(self):
        sigma = 1.5
        radius = math.ceil(4 * sigma)
        n = 4 * radius + 1
        grid = np.zeros((n, n))
        c = n // 2
        grid[c, c] = 1.0
        out = scoring.gaussian_smooth(grid, sigma)
        ys, xs = np.mgrid[-radius:radius + 1, -radius:radius + 1]
        expected = np.exp(-(ys ** 2 + xs ** 2) / (2 * sigma ** 2))
        window = out[c - radius:c + radius + 1, c - radius:c + radius + 1]
        ratio = window / expected
        np.testing.assert_allclose(ratio, ratio[radius, radius], rtol=1e-9)

    def test_matches_convolution_oracle(self):
        rng = np.random.default_rng(59)
        grid = rng.random((9, 7))
        got = scoring.gaussian_smooth(grid, sigma=0.8)
        np.testing.assert_allclose(got, convolution_oracle(grid, 0.8),
                                   rtol=0, atol=1e-9)

    def test_kernel_radius_and_normalization(self):
        kernel = scoring.gaussian_kernel(4.0)
        assert kernel.size == 2 * 16 + 1
        assert kernel.sum() == pytest.approx(1.0, abs=1e-12)

    def test_bad_sigma(self):
        with pytest.raises(ValueError):
            scoring.gaussian_smooth(np.ones((3, 3)), sigma=0.0)


# --- normalize_minmax --------------------------------------------------------

class TestNormalize:
    def test_two_values(self):
        out = scoring.normalize_minmax(np.array([[2.0, 4.0]]))
        np.testing.assert_array_equal(out.values, [[0.0, 1.0]])

    def test_constant_to_zeros(self):
        out = scoring.normalize_minmax(np.full((3, 3), 9.0))
        np.testing.assert_array_equal(out.values, np.zeros((3, 3)))

    def test_affine(self):
        out = scoring.normalize_minmax(np.array([[1.0, 2.0, 3.0]]))
        np.testing.assert_allclose(out.values, [[0.0, 0.5, 1.0]])

    def test_exact_range(self):
        rng = np.random.default_rng(60)
        grid = rng.standard_normal((8, 8)) * 100
        out = scoring.normalize_minmax(grid)
        assert out.values.min() == 0.0
        assert out.values.max() == 1.0


# --- pipeline ----------------------------------------------------------------

class TestPipeline:
    def test_in_subspace_image(self):
        rng = np.random.default_rng(61)
        m, _ = fitted_model(rng, d=8, r_true=3, n=160)
        basis = m.basis
        coeffs = rng.standard_normal((6, 6, m.rank))
        data = m.mean + coeffs @ basis.T
        fmap = FeatureMap(6, 6, m.dim, data.astype(np.float32))
        # float32 storage perturbs the patches slightly off the subspace;
        # residuals stay at the float32 noise floor
        result = scoring.score_image_pipeline(m, fmap, 84, 84, rho=1.0,
                                              sigma=4.0)
        assert result.image_score.value <= 1e-8
        assert np.all(result.raw_pixel_scores <= 1e-8)

    def test_planted_block_localization(self):
        rng = np.random.default_rng(62)
        m, _ = fitted_model(rng, d=16, r_true=4, n=640)
        u = rng.standard_normal(m.dim)
        for j in range(m.rank):
            u -= (m.basis[:, j] @ u) * m.basis[:, j]
        u /= np.linalg.norm(u)
        grid_h = grid_w = 8
        coeffs = rng.standard_normal((grid_h, grid_w, m.rank))
        data = m.mean + coeffs @ m.basis.T
        block = (slice(2, 5), slice(3, 6))
        data[block] += 5.0 * u
        fmap = FeatureMap(grid_h, grid_w, m.dim, data.astype(np.float32))
        result = scoring.score_image_pipeline(m, fmap, 64, 64, rho=10.0,
                                              sigma=2.0)
        mask = np.zeros((64, 64), dtype=bool)
        mask[16:40, 24:48] = True  # block scaled by 8x upsampling
        q = int(mask.sum())
        flat = result.raw_pixel_scores.reshape(-1)
        top = np.zeros(flat.size, dtype=bool)
        top[np.argsort(flat)[-q:]] = True
        top = top.reshape(64, 64)
        iou = (top & mask).sum() / (top | mask).sum()
        assert iou >= 0.5

    def test_target_shape(self):
        rng = np.random.default_rng(63)
        m, _ = fitted_model(rng, d=4, r_true=1, n=100)
        fmap = FeatureMap(48, 48, m.dim,
                          rng.standard_normal((48, 48, m.dim)).astype(np.float32))
        result = scoring.score_image_pipeline(m, fmap, 672, 672, rho=1.0,
                                              sigma=4.0)
        assert result.pixel_map.values.shape == (672, 672)
        assert result.raw_pixel_scores.shape == (672, 672)

    def test_composition_order(self):
        rng = np.random.default_rng(64)
        m, _ = fitted_model(rng, d=5, r_true=2, n=100)
        fmap = FeatureMap(4, 4, m.dim,
                          rng.standard_normal((4, 4, m.dim)).astype(np.float32))
        result = scoring.score_image_pipeline(m, fmap, 16, 16, rho=5.0,
                                              sigma=1.0)
        amap = scoring.patch_scores(m, fmap)
        explicit = scoring.normalize_minmax(
            scoring.gaussian_smooth(
                scoring.upsample_bilinear(amap, 16, 16), 1.0))
        np.testing.assert_array_equal(result.pixel_map.values, explicit.values)
        # image score comes from the raw patch map, not the smoothed grid
        assert result.image_score.value == scoring.image_score(amap, 5.0).value

    def test_orthogonal_transform_invariance(self):
        rng = np.random.default_rng(65)
        d, r_true, n = 10, 3, 400
        basis = np.linalg.qr(rng.standard_normal((d, d)))[0][:, :r_true]
        mu = rng.standard_normal(d)
        rows = (mu + rng.standard_normal((n, r_true)) @ basis.T
                + 0.01 * rng.standard_normal((n, d)))
        q = np.linalg.qr(rng.standard_normal((d, d)))[0]
        test_rows = (mu + rng.standard_normal((20, r_true)) @ basis.T
                     + 0.01 * rng.standard_normal((20, d)))

        def score(train, test):
            maps = [FeatureMap(n // 20, 20, d,
                               train.reshape(n // 20, 20, d).astype(np.float32))]
            m = model.fit(maps, tau=0.9)
            fmap = FeatureMap(4, 5, d, test.reshape(4, 5, d).astype(np.float32))
            return scoring.patch_scores(m, fmap).scores

        # rotating float32-stored features directly would change the stored
        # values; rotate in float64 and store once at the end of each branch
        plain = score(train=rows, test=test_rows)
        rotated = score(train=rows @ q.T, test=test_rows @ q.T)
        np.testing.assert_allclose(rotated, plain, rtol=1e-5, atol=1e-8)
