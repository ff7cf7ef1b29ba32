import logging

import numpy as np
import pytest

from semcomsim import data


def test_normalization_endpoints():
    px = np.array([[[0, 255, 127.5]]])
    np.testing.assert_array_equal(data.normalize(px), [[[-1.0, 1.0, 0.0]]])


def test_denormalize_inverts_on_integer_pixels():
    px = np.arange(256, dtype=np.uint8).reshape(1, 16, 16)
    np.testing.assert_array_equal(data.denormalize(data.normalize(px)), px)


def test_ppm_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    x = data.normalize(rng.integers(0, 256, size=(3, 16, 16)))
    path = tmp_path / "img.ppm"
    data.save_image(path, x)
    assert path.read_bytes()[:2] == b"P6"
    np.testing.assert_array_equal(data.load_image(path), x)


def test_png_round_trip(tmp_path):
    x = data.synthetic_images("textures", 1, size=32, seed=4)[0]
    data.save_image(tmp_path / "a.png", x)
    np.testing.assert_array_equal(data.load_image(tmp_path / "a.png"), x)


def test_load_resizes(tmp_path):
    x = data.synthetic_images("shapes", 1, size=64)[0]
    data.save_image(tmp_path / "big.png", x)
    assert data.load_image(tmp_path / "big.png", size=32).shape == (3, 32, 32)


@pytest.mark.parametrize("family", data.FAMILIES)
def test_generator_deterministic(family):
    a = data.synthetic_images(family, 8, seed=3)
    b = data.synthetic_images(family, 8, seed=3)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (8, 3, 32, 32)
    assert a.min() >= -1.0 and a.max() <= 1.0


def test_splits_and_seeds_differ():
    a = data.synthetic_images("shapes", 4, seed=0, split="train")
    assert not np.array_equal(a, data.synthetic_images("shapes", 4, seed=0, split="test"))
    assert not np.array_equal(a, data.synthetic_images("shapes", 4, seed=1, split="train"))


def test_families_use_disjoint_palettes():
    pal = {f: {tuple(c) for c in data.PALETTES[f]} for f in data.FAMILIES}
    assert not pal["shapes"] & pal["textures"]


def test_unknown_family():
    with pytest.raises(data.DatasetError):
        data.synthetic_images("clouds", 4)


def test_empty_directory_is_an_error(tmp_path):
    with pytest.raises(data.DatasetError):
        data.load_images(tmp_path, 32)


def test_unreadable_file_skipped_with_warning(tmp_path, caplog):
    data.save_image(tmp_path / "a.ppm", data.synthetic_images("shapes", 1)[0])
    (tmp_path / "b.png").write_bytes(b"not an image")
    with caplog.at_level(logging.WARNING, logger="semcomsim.data"):
        out = data.load_images(tmp_path, 32)
    assert out.shape == (1, 3, 32, 32)
    assert "b.png" in caplog.text


def test_directory_of_only_bad_files(tmp_path):
    (tmp_path / "b.png").write_bytes(b"junk")
    with pytest.raises(data.DatasetError):
        data.load_images(tmp_path, 32)


def test_batches_cover_each_epoch():
    it = data.batches(10, 5, np.random.default_rng(0))
    seen = np.concatenate([next(it), next(it)])
    assert sorted(seen) == list(range(10))


def test_batches_smaller_dataset_than_batch():
    it = data.batches(3, 4, np.random.default_rng(0))
    assert len(next(it)) == 4
