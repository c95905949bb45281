import gzip
import struct

import numpy as np
import pytest

from archprune.data import (
    Dataset,
    ParseError,
    balanced_subsample,
    binary_task,
    class_task,
    encode_idx_images,
    encode_idx_labels,
    load_cifar,
    load_mnist,
    parse_cifar,
    parse_idx_images,
    parse_idx_labels,
    split,
    synthetic,
)


def write_mnist(root, images, labels, gz=False):
    root.mkdir(parents=True, exist_ok=True)
    for name, blob in (("train-images-idx3-ubyte", encode_idx_images(images)),
                       ("train-labels-idx1-ubyte", encode_idx_labels(labels))):
        if gz:
            with gzip.open(root / (name + ".gz"), "wb") as fh:
                fh.write(blob)
        else:
            (root / name).write_bytes(blob)


@pytest.fixture
def tiny_mnist(tmp_path, rng):
    images = rng.integers(0, 256, (30, 784), dtype=np.uint8)
    images[0, 0] = 255
    labels = np.arange(30) % 10
    write_mnist(tmp_path / "m", images, labels)
    return tmp_path / "m", images, labels


class TestIdx:
    def test_magic_accepted(self):
        raw = encode_idx_images(np.zeros((2, 784), dtype=np.uint8))
        assert raw[:4] == bytes([0, 0, 8, 3])
        assert parse_idx_images(raw).shape == (2, 784)

    def test_bad_magic_names_offset(self):
        raw = struct.pack(">iiii", 2049, 1, 28, 28) + bytes(784)
        with pytest.raises(ParseError, match="offset 0"):
            parse_idx_images(raw)

    def test_truncated(self):
        raw = encode_idx_images(np.zeros((2, 784), dtype=np.uint8))
        with pytest.raises(ParseError, match="offset"):
            parse_idx_images(raw[:-1])
        with pytest.raises(ParseError):
            parse_idx_images(raw[:10])
        with pytest.raises(ParseError):
            parse_idx_labels(encode_idx_labels([1, 2, 3])[:-1])

    def test_load_scaling_and_labels(self, tiny_mnist):
        root, images, labels = tiny_mnist
        ds = load_mnist(root)
        assert ds.features.shape == (30, 784)
        assert ds.features[0, 0] == 1.0
        np.testing.assert_array_equal(ds.features, images / 255.0)
        np.testing.assert_array_equal(ds.labels, labels)
        assert ds.features.min() >= 0 and ds.features.max() <= 1

    def test_gzip_and_determinism(self, tmp_path, rng):
        images = rng.integers(0, 256, (5, 784), dtype=np.uint8)
        write_mnist(tmp_path / "g", images, [1, 2, 3, 4, 5], gz=True)
        a, b = load_mnist(tmp_path / "g"), load_mnist(tmp_path / "g")
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_count_mismatch(self, tmp_path):
        write_mnist(tmp_path / "x", np.zeros((3, 784), dtype=np.uint8), [0, 1])
        with pytest.raises(ParseError):
            load_mnist(tmp_path / "x")


class TestTasks:
    def test_binary_relabels(self, tiny_mnist):
        ds = load_mnist(tiny_mnist[0])
        b = binary_task(ds, 3, 7)
        assert len(b) == 6 and b.class_count == 2
        assert set(b.labels.tolist()) == {0, 1}

    def test_same_class_rejected(self, tiny_mnist):
        with pytest.raises(ValueError):
            binary_task(load_mnist(tiny_mnist[0]), 0, 0)

    def test_missing_class(self):
        ds = Dataset(np.zeros((4, 2)), np.array([0, 1, 0, 1]), 10)
        with pytest.raises(ValueError, match="not present"):
            class_task(ds, [0, 5])

    def test_balanced_subsample(self):
        ds = synthetic(2000, 4, 10, seed=0)
        sub = balanced_subsample(ds, range(10), 50, seed=3)
        assert len(sub) == 500
        np.testing.assert_array_equal(np.bincount(sub.labels), [50] * 10)
        again = balanced_subsample(ds, range(10), 50, seed=3)
        np.testing.assert_array_equal(sub.features, again.features)
        assert len(balanced_subsample(ds, range(10), 0, seed=3)) == 0

    def test_balanced_insufficient_names_class(self):
        ds = Dataset(np.zeros((5, 2)), np.array([0, 0, 0, 1, 1]), 2)
        with pytest.raises(ValueError, match="class 1"):
            balanced_subsample(ds, [0, 1], 3, seed=0)

    def test_split_is_disjoint_and_stratified(self):
        ds = synthetic(200, 3, 4, seed=1)
        ds = Dataset(np.arange(200.0)[:, None], ds.labels, 4)
        tr, te = split(ds, 0.25, seed=2)
        assert len(tr) + len(te) == 200
        assert not set(tr.features[:, 0]) & set(te.features[:, 0])
        assert abs(np.bincount(te.labels) - 0.25 * np.bincount(ds.labels)).max() <= 0.5


class TestCifar:
    def _records(self, rng, n, header):
        recs = rng.integers(0, 256, (n, header + 3072), dtype=np.uint8)
        recs[:, :header] = rng.integers(0, 10, (n, header))
        return recs

    def test_c10(self, rng, tmp_path):
        recs = self._records(rng, 7, 1)
        (tmp_path / "data_batch_1.bin").write_bytes(recs.tobytes())
        ds = load_cifar(tmp_path / "data_batch_1.bin")
        assert len(ds) == len(recs.tobytes()) // 3073 == 7
        np.testing.assert_array_equal(ds.labels, recs[:, 0])
        assert ds.features.shape == (7, 3072) and ds.features.max() <= 1

    def test_c100_uses_fine_label(self, rng):
        recs = self._records(rng, 4, 2)
        ds = parse_cifar(recs.tobytes(), "c100")
        np.testing.assert_array_equal(ds.labels, recs[:, 1])
        with pytest.raises(ParseError):
            parse_cifar(recs.tobytes(), "c10")  # 4 * 3074 is not a multiple of 3073

    def test_directory(self, rng, tmp_path):
        for k in range(2):
            (tmp_path / f"b{k}.bin").write_bytes(self._records(rng, 3, 1).tobytes())
        assert len(load_cifar(tmp_path)) == 6

    def test_empty_file(self):
        with pytest.raises(ParseError):
            parse_cifar(b"")


class TestRealMnist:
    def test_available_and_scaled(self, mnist):
        assert mnist.features.shape[1] == 784
        assert 0 <= mnist.features.min() and mnist.features.max() <= 1
        assert set(np.unique(mnist.labels).tolist()) == set(range(10))

    def test_zero_one_count_full_set(self, mnist):
        if len(mnist) != 60_000:
            pytest.skip(f"only the {len(mnist)}-image MNIST subset is installed")
        assert len(binary_task(mnist, 0, 1)) == 12_665
