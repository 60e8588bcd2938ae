import struct

import numpy as np
import pytest

from advswarm import classifier as clf
from advswarm import data as dat
from advswarm.errors import DataError, InputError


def write_idx_pair(tmp_path, pixels, labels, rows, cols):
    """Raw IDX writer independent of the package's save_idx."""
    images_path = tmp_path / "images.idx"
    labels_path = tmp_path / "labels.idx"
    n = len(labels)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        fh.write(bytes(pixels))
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", 0x00000801, n))
        fh.write(bytes(labels))
    return images_path, labels_path


class TestLoadIdx:
    def test_byte_scaling_endpoints(self, tmp_path):
        paths = write_idx_pair(tmp_path, [0x00, 0xFF, 0x80, 0x01], [1], 2, 2)
        ds = dat.load_idx(*paths)
        assert ds.images[0].pixels[0] == 0.0
        assert ds.images[0].pixels[1] == 1.0
        assert ds.images[0].pixels[2] == pytest.approx(128 / 255)

    def test_header_arithmetic(self, tmp_path):
        paths = write_idx_pair(tmp_path, [7] * (10 * 28 * 28), list(range(10)), 28, 28)
        ds = dat.load_idx(*paths)
        assert len(ds) == 10
        assert ds.images[0].size == 784

    def test_out_of_range_label(self, tmp_path):
        paths = write_idx_pair(tmp_path, [0] * 8, [10, 3], 2, 2)
        with pytest.raises(DataError, match="label 10"):
            dat.load_idx(*paths, num_classes=10)

    def test_bad_image_magic(self, tmp_path):
        images_path = tmp_path / "bad.idx"
        images_path.write_bytes(struct.pack(">IIII", 0xDEADBEEF, 1, 2, 2) + b"\x00" * 4)
        _, labels_path = write_idx_pair(tmp_path, [0] * 4, [0], 2, 2)
        with pytest.raises(DataError, match="magic"):
            dat.load_idx(images_path, labels_path)

    def test_truncated_payload_names_offset(self, tmp_path):
        images_path = tmp_path / "short.idx"
        images_path.write_bytes(struct.pack(">IIII", 0x00000803, 2, 2, 2) + b"\x00" * 5)
        _, labels_path = write_idx_pair(tmp_path, [0] * 8, [0, 1], 2, 2)
        with pytest.raises(DataError, match="byte 16"):
            dat.load_idx(images_path, labels_path)

    def test_count_mismatch(self, tmp_path):
        images_path, _ = write_idx_pair(tmp_path, [0] * 8, [0, 1], 2, 2)
        labels_path = tmp_path / "short_labels.idx"
        labels_path.write_bytes(struct.pack(">II", 0x00000801, 1) + b"\x00")
        with pytest.raises(DataError, match="label count 1 != image count 2"):
            dat.load_idx(images_path, labels_path)

    def test_round_trip_quantization(self, tmp_path):
        ds = dat.synth_blobs(num_classes=2, n_per_class=5, side=6, seed=3)
        dat.save_idx(ds, tmp_path / "imgs.idx", tmp_path / "labs.idx")
        back = dat.load_idx(tmp_path / "imgs.idx", tmp_path / "labs.idx")
        assert back.labels == ds.labels
        for a, b in zip(ds.images, back.images):
            assert np.abs(a.pixels - b.pixels).max() <= 0.5 / 255 + 1e-12


class TestImageDir:
    def test_loads_png_with_labels(self, tmp_path):
        from PIL import Image as PilImage

        rng = np.random.default_rng(0)
        for i in range(3):
            arr = rng.integers(0, 256, (5, 4), dtype=np.uint8)
            PilImage.fromarray(arr, mode="L").save(tmp_path / f"img{i}.png")
        (tmp_path / "labels.csv").write_text(
            "filename,label\nimg0.png,0\nimg1.png,1\nimg2.png,0\n")
        ds = dat.load_image_dir(tmp_path)
        assert len(ds) == 3
        assert ds.images[0].width == 4 and ds.images[0].height == 5
        assert 0.0 <= ds.images[0].pixels.min() and ds.images[0].pixels.max() <= 1.0

    def test_rgb_flattening_is_channel_fastest(self, tmp_path):
        from PIL import Image as PilImage

        arr = np.zeros((2, 2, 3), dtype=np.uint8)
        arr[0, 1] = (255, 0, 0)  # red pixel at row 0 col 1
        PilImage.fromarray(arr, mode="RGB").save(tmp_path / "rgb.png")
        (tmp_path / "labels.csv").write_text("rgb.png,0\n")
        ds = dat.load_image_dir(tmp_path)
        img = ds.images[0]
        assert img.channels == 3
        # coordinate (row*width + col)*channels + channel
        assert img.pixels[(0 * 2 + 1) * 3 + 0] == 1.0
        assert img.pixels[(0 * 2 + 1) * 3 + 1] == 0.0

    def test_itemized_errors(self, tmp_path):
        (tmp_path / "broken.png").write_bytes(b"not a png")
        (tmp_path / "labels.csv").write_text(
            "broken.png,0\nmissing.png,1\nbad_label.png,x\n")
        with pytest.raises(DataError) as err:
            dat.load_image_dir(tmp_path)
        text = str(err.value)
        assert "broken.png" in text and "missing.png" in text and "bad_label.png" in text

    def test_missing_csv(self, tmp_path):
        with pytest.raises(DataError, match="label file not found"):
            dat.load_image_dir(tmp_path)


class TestSynthBlobs:
    def test_deterministic(self):
        a = dat.synth_blobs(seed=5)
        b = dat.synth_blobs(seed=5)
        for x, y in zip(a.images, b.images):
            assert np.array_equal(x.pixels, y.pixels)

    def test_shapes_and_range(self):
        ds = dat.synth_blobs(num_classes=3, n_per_class=10, side=8, seed=1)
        assert len(ds) == 30
        assert all(im.size == 64 for im in ds.images)
        assert all(im.pixels.min() >= 0 and im.pixels.max() <= 1 for im in ds.images)

    def test_too_many_classes(self):
        with pytest.raises(InputError):
            dat.synth_blobs(num_classes=12)

    @pytest.mark.parametrize("seed", range(5))
    def test_reference_classifier_separates(self, seed):
        # the defaults must stay learnable: >= 95% train accuracy
        ds = dat.synth_blobs(seed=seed)
        train, val = dat.split(ds, 0.2, seed=seed)
        model = clf.train(train, hyper=clf.TrainConfig(seed=seed), val=val)
        assert model.meta["train_accuracy"] >= 0.95


class TestSplit:
    def test_partition(self):
        ds = dat.synth_blobs(num_classes=2, n_per_class=30, side=6, seed=2)
        train, val = dat.split(ds, 0.25, seed=9)
        assert len(train) + len(val) == len(ds)
        assert abs(len(val) - 0.25 * len(ds)) <= 1
        seen = {im.pixels.tobytes() for im in train.images}
        assert all(im.pixels.tobytes() not in seen for im in val.images)

    def test_deterministic(self):
        ds = dat.synth_blobs(num_classes=2, n_per_class=10, side=6, seed=0)
        a_train, _ = dat.split(ds, 0.3, seed=4)
        b_train, _ = dat.split(ds, 0.3, seed=4)
        assert [im.pixels.tobytes() for im in a_train.images] == \
            [im.pixels.tobytes() for im in b_train.images]

    def test_bad_fraction(self):
        ds = dat.synth_blobs(num_classes=2, n_per_class=5, side=6, seed=0)
        with pytest.raises(InputError):
            dat.split(ds, 1.5)


class TestDatasetInvariants:
    def test_mismatched_lengths(self):
        img = dat.Image(np.zeros(4), 2, 2, 1, label=0)
        with pytest.raises(InputError):
            dat.Dataset([img], [0, 1], 2)

    def test_label_range(self):
        img = dat.Image(np.zeros(4), 2, 2, 1, label=0)
        with pytest.raises(InputError):
            dat.Dataset([img], [5], 2)

    def test_mixed_shapes(self):
        a = dat.Image(np.zeros(4), 2, 2, 1, label=0)
        b = dat.Image(np.zeros(9), 3, 3, 1, label=0)
        with pytest.raises(InputError):
            dat.Dataset([a, b], [0, 0], 2)

    def test_image_validation(self):
        with pytest.raises(InputError):
            dat.Image(np.array([0.5, 1.5]), 2, 1, 1)
        with pytest.raises(InputError):
            dat.Image(np.array([0.5, np.nan]), 2, 1, 1)
        with pytest.raises(InputError):
            dat.Image(np.zeros(3), 2, 2, 1)

    def test_pixels_read_only(self):
        img = dat.Image(np.zeros(4), 2, 2, 1)
        with pytest.raises(ValueError):
            img.pixels[0] = 1.0
