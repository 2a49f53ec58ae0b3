"""Backbone resolution and the deterministic test backbones."""

import numpy as np
import pytest

from patch_extractor import (BackboneLoadFailure, ConstantBackbone,
                             StubBackbone, TorchHubBackbone,
                             resolve_backbone)


def checker_image(h, w, period=4):
    rows = np.arange(h)[:, None] // period
    cols = np.arange(w)[None, :] // period
    base = ((rows + cols) % 2).astype(np.float32)
    return np.repeat(base[:, :, None], 3, axis=2)


class TestResolve:
    def test_stub_spec(self):
        backbone = resolve_backbone("stub:4:32")
        assert isinstance(backbone, StubBackbone)
        assert backbone.n_layers == 4
        assert backbone.dim == 32
        assert backbone.patch_size == 14

    def test_stub_spec_with_patch(self):
        backbone = resolve_backbone("stub:2:8:7")
        assert backbone.patch_size == 7

    @pytest.mark.parametrize("spec", [
        "stub:4", "stub:4:32:7:9", "stub:a:32", "stub:0:32", "stub:4:-1",
        "resnet50", "",
    ])
    def test_bad_specs_rejected(self, spec):
        with pytest.raises(BackboneLoadFailure):
            resolve_backbone(spec)

    def test_hub_names_resolve_lazily(self):
        # No weights are fetched until tokens() is called.
        backbone = resolve_backbone("dinov2_vitg14")
        assert isinstance(backbone, TorchHubBackbone)
        assert backbone.n_layers == 40
        assert backbone.dim == 1536
        assert backbone.patch_size == 14

    def test_hub_table_covers_known_sizes(self):
        assert resolve_backbone("dinov2_vits14").dim == 384
        assert resolve_backbone("dinov2_vitb14").dim == 768
        assert resolve_backbone("dinov2_vitl14").dim == 1024


class TestStubBackbone:
    def test_token_shape(self):
        backbone = StubBackbone(3, 16)
        image = checker_image(28, 42)
        assert backbone.tokens(image).shape == (3, 2, 3, 16)

    def test_deterministic_across_instances(self):
        image = checker_image(28, 28)
        a = StubBackbone(3, 16).tokens(image)
        b = StubBackbone(3, 16).tokens(image)
        np.testing.assert_array_equal(a, b)

    def test_content_sensitivity(self):
        backbone = StubBackbone(2, 8)
        flat = np.full((28, 28, 3), 0.5, dtype=np.float32)
        busy = checker_image(28, 28)
        assert not np.allclose(backbone.tokens(flat), backbone.tokens(busy))

    def test_patchwise_locality(self):
        # Changing one patch leaves all other token positions untouched.
        backbone = StubBackbone(2, 8)
        image = checker_image(28, 28)
        poked = image.copy()
        poked[0:14, 0:14] = 0.9
        base = backbone.tokens(image)
        after = backbone.tokens(poked)
        assert not np.allclose(base[:, 0, 0], after[:, 0, 0])
        np.testing.assert_array_equal(base[:, 0, 1], after[:, 0, 1])
        np.testing.assert_array_equal(base[:, 1, :], after[:, 1, :])

    def test_layers_differ(self):
        backbone = StubBackbone(3, 8)
        tok = backbone.tokens(checker_image(28, 28))
        assert not np.allclose(tok[0], tok[1])


class TestConstantBackbone:
    def test_broadcasts_values(self):
        values = np.array([[1.0, 2.0], [3.0, 4.0]])
        backbone = ConstantBackbone(values, patch_size=7)
        tok = backbone.tokens(np.zeros((21, 14, 3), dtype=np.float32))
        assert tok.shape == (2, 3, 2, 2)
        np.testing.assert_array_equal(tok[0], np.full((3, 2, 2), [1.0, 2.0]))
        np.testing.assert_array_equal(tok[1], np.full((3, 2, 2), [3.0, 4.0]))

    def test_float64_tokens(self):
        backbone = ConstantBackbone(np.array([[0.25]]))
        assert backbone.tokens(np.zeros((14, 14, 3))).dtype == np.float64
