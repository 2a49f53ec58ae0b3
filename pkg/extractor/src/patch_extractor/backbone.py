"""Backbone access behind one interface so tests run without weights.

A backbone turns a preprocessed square RGB image into per-layer token
grids of shape (n_layers, grid, grid, dim); the extractor then selects
and aggregates layers.  Three implementations:

  - StubBackbone: deterministic pure-numpy features from patch pixel
    statistics.  Spec string "stub:<n_layers>:<dim>[:<patch>]".
  - ConstantBackbone: fixed per-layer token values, for exact
    aggregation-law tests.  Constructed directly, no spec string.
  - TorchHubBackbone: real DINOv2-family weights via torch hub, loaded
    lazily on first use.  Needs network access and the torch extra.
"""

from __future__ import annotations

import numpy as np

from .errors import BackboneLoadFailure

_HUB_MODELS = {
    "dinov2_vits14": (12, 384),
    "dinov2_vitb14": (12, 768),
    "dinov2_vitl14": (24, 1024),
    "dinov2_vitg14": (40, 1536),
}


class StubBackbone:
    """Content-sensitive deterministic features; no weights involved.

    Each patch is summarized by 8 statistics (channel means, channel
    stds, mean absolute x/y gradients), then pushed through a fixed
    random linear map per layer.
    """

    def __init__(self, n_layers: int, dim: int, patch_size: int = 14):
        self.n_layers = n_layers
        self.dim = dim
        self.patch_size = patch_size
        self._maps = None

    def _layer_maps(self) -> np.ndarray:
        if self._maps is None:
            rng = np.random.Generator(np.random.Philox(key=1234))
            self._maps = rng.normal(size=(self.n_layers, 8, self.dim))
        return self._maps

    def tokens(self, image: np.ndarray) -> np.ndarray:
        p = self.patch_size
        h, w = image.shape[:2]
        gh, gw = h // p, w // p
        patches = image[:gh * p, :gw * p].reshape(gh, p, gw, p, 3)
        patches = patches.transpose(0, 2, 1, 3, 4)  # (gh, gw, p, p, 3)
        means = patches.mean(axis=(2, 3))
        stds = patches.std(axis=(2, 3))
        dx = np.abs(np.diff(patches, axis=3)).mean(axis=(2, 3, 4))
        dy = np.abs(np.diff(patches, axis=2)).mean(axis=(2, 3, 4))
        summary = np.concatenate(
            [means, stds, dx[..., None], dy[..., None]], axis=2)  # (gh,gw,8)
        out = np.einsum("hwf,lfd->lhwd", summary, self._layer_maps())
        return np.ascontiguousarray(out)


class ConstantBackbone:
    """Every patch of every image gets the same per-layer token."""

    def __init__(self, values: np.ndarray, patch_size: int = 14):
        values = np.asarray(values, dtype=np.float64)
        self.n_layers, self.dim = values.shape
        self.patch_size = patch_size
        self.values = values

    def tokens(self, image: np.ndarray) -> np.ndarray:
        g = image.shape[0] // self.patch_size
        gw = image.shape[1] // self.patch_size
        return np.broadcast_to(
            self.values[:, None, None, :],
            (self.n_layers, g, gw, self.dim)).copy()


class TorchHubBackbone:
    """Lazy wrapper over torch.hub DINOv2 checkpoints."""

    def __init__(self, model_id: str):
        self.model_id = model_id
        self.n_layers, self.dim = _HUB_MODELS[model_id]
        self.patch_size = 14
        self._model = None

    def _load(self):
        if self._model is None:
            try:
                import torch
                self._model = torch.hub.load(
                    "facebookresearch/dinov2", self.model_id)
                self._model.eval()
            except Exception as exc:
                raise BackboneLoadFailure(
                    f"could not load {self.model_id}: {exc}") from exc
        return self._model

    def tokens(self, image: np.ndarray) -> np.ndarray:
        import torch

        model = self._load()
        g = image.shape[0] // self.patch_size
        x = torch.from_numpy(
            np.ascontiguousarray(image.transpose(2, 0, 1))[None]).float()
        with torch.no_grad():
            layers = model.get_intermediate_layers(
                x, n=range(self.n_layers), reshape=True)
        stacked = torch.stack(list(layers))  # (L, 1, dim, g, g)
        return stacked[:, 0].permute(0, 2, 3, 1).numpy().astype(np.float64)


def resolve_backbone(spec: str):
    """Map a backbone id string to an implementation.

    "stub:<n_layers>:<dim>[:<patch>]" builds a StubBackbone; known hub
    model names build a lazy TorchHubBackbone; anything else fails.
    """
    if spec.startswith("stub:"):
        parts = spec.split(":")[1:]
        if len(parts) not in (2, 3):
            raise BackboneLoadFailure(
                f"stub spec needs stub:<n_layers>:<dim>[:<patch>], got {spec!r}")
        try:
            numbers = [int(p) for p in parts]
        except ValueError:
            raise BackboneLoadFailure(f"non-integer field in {spec!r}") from None
        if any(n < 1 for n in numbers):
            raise BackboneLoadFailure(f"non-positive field in {spec!r}")
        return StubBackbone(*numbers)
    if spec in _HUB_MODELS:
        return TorchHubBackbone(spec)
    raise BackboneLoadFailure(
        f"unknown backbone {spec!r}; expected stub:... or one of "
        f"{sorted(_HUB_MODELS)}")
