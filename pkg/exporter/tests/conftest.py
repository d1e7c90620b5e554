import os

import numpy as np
import pytest
from PIL import Image

PALETTE = {
    "mug": (200, 40, 40),
    "bowl": (40, 200, 40),
    "plate": (40, 40, 200),
}


def write_view_images(root, categories=None, instances=2, views_per=2, size=64, seed=7):
    """A small image tree: category/instance/view_dir/{xoy,xoz,yoz}.png.

    Each category gets a distinct base color with mild per-image jitter, so
    even a random-weight backbone separates categories while keeping
    within-category views close.
    """
    categories = dict(PALETTE) if categories is None else categories
    rng = np.random.default_rng(seed)
    for cat, base in categories.items():
        for i in range(instances):
            for v in range(views_per):
                vdir = os.path.join(root, cat, f"inst{i}", f"view{v:03d}")
                os.makedirs(vdir, exist_ok=True)
                for proj in ("xoy", "xoz", "yoz"):
                    arr = np.zeros((size, size, 3), np.uint8)
                    arr[:, :] = base
                    jitter = rng.integers(-25, 25, 3)
                    arr[: size // 2] = np.clip(np.array(base) + jitter, 0, 255)
                    Image.fromarray(arr).save(os.path.join(vdir, f"{proj}.png"))
    return root


def solid_image(path, color, size=64):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    arr = np.zeros((size, size, 3), np.uint8)
    arr[:, :] = color
    Image.fromarray(arr).save(path)


@pytest.fixture(scope="session")
def image_tree(tmp_path_factory):
    return write_view_images(str(tmp_path_factory.mktemp("imgs")))
