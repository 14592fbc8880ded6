import struct

import numpy as np
import pytest

from sparsegen.errors import BadMagicError, ShapeMismatchError, TruncatedFileError
from sparsegen.harness.datasets import (IDX_UBYTE_3D, Dataset, binarize, glyph_images, load_idx, read_idx_array,
                                        split, write_idx)


def hand_built_idx(path, pixels, count=2, rows=2, cols=3, magic=IDX_UBYTE_3D):
    path.write_bytes(struct.pack(">IIII", magic, count, rows, cols) + bytes(pixels))
    return path


class TestIdx:
    def test_hand_built_file(self, tmp_path):
        p = hand_built_idx(tmp_path / "a.idx", range(0, 240, 20))
        ds = load_idx(p)
        assert ds.name == "a" and len(ds) == 2 and ds.n == 6
        np.testing.assert_array_equal(ds.images[1], np.arange(120, 240, 20) / 255.0)
        np.testing.assert_array_equal(read_idx_array(p)[0], [[0, 20, 40], [60, 80, 100]])

    def test_binarized_load(self, tmp_path):
        p = hand_built_idx(tmp_path / "b.idx", [0, 127, 128, 255, 10, 200] * 2)
        ds = load_idx(p, binarize_pixels=True)
        assert ds.domain == "binary"
        np.testing.assert_array_equal(ds.images[0], [0, 0, 1, 1, 0, 1])

    def test_round_trip(self, tmp_path):
        imgs = np.random.default_rng(0).integers(0, 256, size=(3, 16)) / 255.0
        write_idx(tmp_path / "r.idx", imgs)
        np.testing.assert_array_equal(load_idx(tmp_path / "r.idx").images, imgs)

    def test_bad_magic(self, tmp_path):
        with pytest.raises(BadMagicError):
            load_idx(hand_built_idx(tmp_path / "m.idx", range(12), magic=0x00000801))

    @pytest.mark.parametrize("payload", [11, 0])
    def test_truncated(self, tmp_path, payload):
        with pytest.raises(TruncatedFileError):
            load_idx(hand_built_idx(tmp_path / "t.idx", range(payload)))

    def test_short_header(self, tmp_path):
        (tmp_path / "h.idx").write_bytes(b"\x00\x00")
        with pytest.raises(TruncatedFileError):
            load_idx(tmp_path / "h.idx")

    def test_trailing_bytes(self, tmp_path):
        with pytest.raises(ShapeMismatchError):
            load_idx(hand_built_idx(tmp_path / "x.idx", range(13)))

    def test_wrong_image_shape(self, tmp_path):
        with pytest.raises(ShapeMismatchError):
            load_idx(hand_built_idx(tmp_path / "s.idx", range(12)), image_shape=(3, 2))

    def test_errors_are_distinct(self):
        assert len({BadMagicError, TruncatedFileError, ShapeMismatchError}) == 3
        assert not issubclass(BadMagicError, TruncatedFileError)


class TestDataset:
    def test_binarize_threshold(self):
        np.testing.assert_array_equal(binarize([0.49, 0.5, 0.51, 0.0, 1.0]), [0, 1, 1, 0, 1])

    @pytest.mark.parametrize("imgs, domain", [(np.full((2, 3), 1.5), "continuous"),
                                              (np.full((2, 3), 0.5), "binary"),
                                              (np.zeros(3), "continuous"),
                                              (np.zeros((2, 3)), "grey")])
    def test_invalid(self, imgs, domain):
        with pytest.raises(ValueError):
            Dataset("d", imgs, domain)

    def test_read_only_and_subset(self):
        ds = Dataset("d", np.eye(4))
        with pytest.raises(ValueError):
            ds.images[0, 0] = 0.5
        np.testing.assert_array_equal(ds.subset([2, 0]).images, np.eye(4)[[2, 0]])

    def test_split(self):
        imgs = np.arange(20)[:, None].astype(float)
        train, test = split(imgs, 5, seed=1)
        assert len(train) == 15 and len(test) == 5
        assert sorted(np.concatenate([train, test]).ravel()) == list(range(20))
        np.testing.assert_array_equal(split(imgs, 5, seed=1)[1], test)
        with pytest.raises(ValueError):
            split(imgs, 20)


class TestGlyphs:
    def test_deterministic_binary(self):
        a, b = glyph_images(20, seed=3), glyph_images(20, seed=3)
        np.testing.assert_array_equal(a, b)
        assert a.shape == (20, 784)
        assert set(np.unique(a)) <= {0.0, 1.0}
        Dataset("glyphs", a, "binary")

    def test_prefix_stable_and_seed_sensitive(self):
        np.testing.assert_array_equal(glyph_images(5, seed=3), glyph_images(20, seed=3)[:5])
        assert not np.array_equal(glyph_images(5, seed=3), glyph_images(5, seed=4))

    def test_ink_within_margin(self):
        g = glyph_images(30, seed=0).reshape(30, 28, 28)
        assert np.all(g.sum(axis=(1, 2)) > 0)
        assert g[:, 0, :].sum() == 0 and g[:, :, 0].sum() == 0

    def test_invalid_count(self):
        with pytest.raises(ValueError):
            glyph_images(0)
