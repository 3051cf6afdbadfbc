import json

import numpy as np
import pytest
from click.testing import CliRunner


@pytest.fixture()
def image_dir(tmp_path):
    d = tmp_path / "images"
    d.mkdir()
    rng = np.random.default_rng(7)
    for i in range(8):
        payload = rng.integers(0, 256, size=64 + 16 * i, dtype=np.uint8).tobytes()
        (d / f"item_{i:03d}.jpg").write_bytes(payload)
    return d


@pytest.fixture()
def captions_file(tmp_path, image_dir):
    path = tmp_path / "captions.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for img in sorted(image_dir.iterdir()):
            row = {
                "item_id": img.stem,
                "captions": [
                    f"a {adj} garment named {img.stem}"
                    for adj in ("plain", "striped", "floral")
                ],
            }
            fh.write(json.dumps(row) + "\n")
    return path


@pytest.fixture()
def runner():
    return CliRunner()
