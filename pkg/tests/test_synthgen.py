"""Generator invariants: determinism, geometry, and planted signal."""

import numpy as np
import pytest

from subspace_ad.errors import InvalidSpec
from subspace_ad.fileio import read_feature_map, read_mask_pgm
from subspace_ad.manifest import load_manifest
from subspace_ad.model import fit
from subspace_ad.scoring import patch_scores
from subspace_ad.synthgen import SynthSpec, generate, write_dataset


def small_spec(**overrides):
    base = dict(dim=16, normal_rank=3, grid_h=6, grid_w=5,
                noise_std=0.0, anomaly_magnitude=1.0,
                anomaly_block=(1, 1, 2, 2), n_train=3,
                n_test_normal=3, n_test_anomalous=3, seed=7,
                pixels_per_patch=4)
    base.update(overrides)
    return SynthSpec(**base)


class TestSpecValidation:

    def test_rank_exceeds_dim(self):
        with pytest.raises(InvalidSpec):
            small_spec(normal_rank=17).validate()

    def test_full_rank_with_anomaly(self):
        with pytest.raises(InvalidSpec):
            small_spec(normal_rank=16, anomaly_magnitude=1.0).validate()

    def test_full_rank_without_anomaly_ok(self):
        small_spec(normal_rank=16, anomaly_magnitude=0.0,
                   n_test_anomalous=0).validate()

    def test_block_does_not_fit(self):
        with pytest.raises(InvalidSpec):
            small_spec(anomaly_block=(4, 0, 4, 2)).validate()

    def test_negative_noise(self):
        with pytest.raises(InvalidSpec):
            small_spec(noise_std=-0.1).validate()

    def test_zero_train(self):
        with pytest.raises(InvalidSpec):
            small_spec(n_train=0).validate()

    def test_dict_round_trip(self):
        spec = small_spec(noise_std=0.05)
        clone = SynthSpec.from_dict(spec.to_dict())
        assert clone == spec

    def test_unknown_key_rejected(self):
        with pytest.raises(InvalidSpec):
            SynthSpec.from_dict({"dim": 8, "wavelength": 3})


class TestDeterminism:

    def test_same_seed_bitwise_identical(self):
        a = generate(small_spec(noise_std=0.1))
        b = generate(small_spec(noise_std=0.1))
        np.testing.assert_array_equal(a.mean, b.mean)
        np.testing.assert_array_equal(a.basis, b.basis)
        for ma, mb in zip(a.train_maps + a.test_maps,
                          b.train_maps + b.test_maps):
            np.testing.assert_array_equal(ma.data, mb.data)

    def test_different_seeds_differ(self):
        a = generate(small_spec())
        b = generate(small_spec(seed=8))
        assert not np.array_equal(a.train_maps[0].data, b.train_maps[0].data)

    def test_magnitude_does_not_shift_normal_draws(self):
        # the direction draw is burned even when unused
        a = generate(small_spec(anomaly_magnitude=1.0))
        b = generate(small_spec(anomaly_magnitude=0.0))
        for ma, mb in zip(a.train_maps, b.train_maps):
            np.testing.assert_array_equal(ma.data, mb.data)
        np.testing.assert_array_equal(a.test_maps[0].data, b.test_maps[0].data)


class TestGeometry:

    def test_basis_orthonormal(self):
        ds = generate(small_spec())
        gram = ds.basis.T @ ds.basis
        np.testing.assert_allclose(gram, np.eye(3), rtol=0.0, atol=1e-10)

    def test_direction_unit_and_orthogonal(self):
        ds = generate(small_spec())
        np.testing.assert_allclose(
            np.linalg.norm(ds.anomaly_direction), 1.0, rtol=0.0, atol=1e-12)
        np.testing.assert_allclose(
            ds.basis.T @ ds.anomaly_direction, np.zeros(3),
            rtol=0.0, atol=1e-10)

    def test_zero_noise_rows_lie_in_span(self):
        ds = generate(small_spec(noise_std=0.0))
        for fmap in ds.train_maps:
            centered = fmap.patch_matrix() - ds.mean
            resid = centered - (centered @ ds.basis) @ ds.basis.T
            assert np.max(np.sum(resid ** 2, axis=1)) <= 1e-8

    def test_noise_residual_matches_expectation(self):
        # mean off-span power is noise_std^2 * (D - r)
        spec = SynthSpec(dim=64, normal_rank=6, grid_h=10, grid_w=10,
                         noise_std=0.1, anomaly_magnitude=0.0,
                         n_train=20, n_test_normal=0, n_test_anomalous=0,
                         seed=3)
        ds = generate(spec)
        rows = np.concatenate([m.patch_matrix() for m in ds.train_maps])
        centered = rows - ds.mean
        resid = centered - (centered @ ds.basis) @ ds.basis.T
        mean_sq = np.mean(np.sum(resid ** 2, axis=1))
        expected = spec.noise_std ** 2 * (spec.dim - spec.normal_rank)
        np.testing.assert_allclose(mean_sq, expected, rtol=0.1)


class TestPlantedAnomaly:

    def test_block_cells_dominate(self):
        spec = SynthSpec(dim=64, normal_rank=6, grid_h=8, grid_w=8,
                         noise_std=0.01, anomaly_magnitude=1.0,
                         anomaly_block=(2, 3, 3, 2), n_train=10,
                         n_test_normal=2, n_test_anomalous=2, seed=11)
        ds = generate(spec)
        model = fit(ds.train_maps, tau=0.99)
        amap = patch_scores(model, ds.test_maps[-1])
        block = np.zeros((8, 8), dtype=bool)
        block[2:5, 3:5] = True
        block_min = amap.scores[block].min()
        normal_median = np.median(amap.scores[~block])
        assert block_min >= 100.0 * normal_median

    def test_masks_cover_scaled_block(self):
        ds = generate(small_spec())
        mask = ds.test_masks[-1]
        assert mask.height == 6 * 4 and mask.width == 5 * 4
        expected = np.zeros((24, 20), dtype=bool)
        expected[4:12, 4:12] = True
        np.testing.assert_array_equal(mask.pixels, expected)

    def test_labels_partition(self):
        ds = generate(small_spec())
        assert ds.test_labels == [0, 0, 0, 1, 1, 1]
        assert [m is None for m in ds.test_masks] == \
            [True, True, True, False, False, False]


class TestWriteDataset:

    def test_round_trip_through_files(self, tmp_path):
        ds = generate(small_spec(noise_std=0.02))
        write_dataset(ds, tmp_path)
        manifest = load_manifest(tmp_path / "manifest.json")
        assert manifest.category == "synth_7"
        assert len(manifest.train_items) == 3
        assert len(manifest.test_items) == 6
        assert manifest.extra["synth_spec"] == ds.spec.to_dict()

        loaded = read_feature_map(manifest.resolve(
            manifest.train_items[0].feature_file))
        np.testing.assert_array_equal(loaded.data, ds.train_maps[0].data)

        anom = [it for it in manifest.test_items if it.image_label == 1][0]
        mask = read_mask_pgm(manifest.resolve(anom.mask_file))
        np.testing.assert_array_equal(mask.pixels, ds.test_masks[3].pixels)

    def test_mask_dimensions_recorded(self, tmp_path):
        ds = generate(small_spec())
        manifest = write_dataset(ds, tmp_path)
        item = manifest.test_items[0]
        assert item.original_height == 24
        assert item.original_width == 20
