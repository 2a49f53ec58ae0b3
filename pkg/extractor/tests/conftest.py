"""Shared fixture: a miniature defect-inspection dataset tree."""

import numpy as np
import pytest
from PIL import Image


def _save(path, array):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(array).save(path)


def build_tree(root, category="widget", n_train=2, n_good=1, n_defect=2,
               size=(70, 90), defect="crack", seed=99):
    """MVTec-style layout with tiny random images and one defect type."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    h, w = size
    cat = root / category

    def image():
        return rng.integers(0, 256, (h, w, 3), dtype=np.uint8)

    for i in range(n_train):
        _save(cat / "train" / "good" / f"{i:03d}.png", image())
    for i in range(n_good):
        _save(cat / "test" / "good" / f"{i:03d}.png", image())
    for i in range(n_defect):
        _save(cat / "test" / defect / f"{i:03d}.png", image())
        mask = np.zeros((h, w), dtype=np.uint8)
        mask[h // 4:h // 2, w // 4:3 * w // 4] = 255
        _save(cat / "ground_truth" / defect / f"{i:03d}_mask.png", mask)
    return root


@pytest.fixture
def dataset_root(tmp_path):
    return build_tree(tmp_path / "data")
