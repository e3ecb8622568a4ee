"""IDX/CIFAR loaders and the synthetic generators."""

import gzip
import struct

import numpy as np
import pytest

from axfault import datasets as ds


def _write_idx_quartet(d, n_train=12, n_test=6):
    r = np.random.default_rng(0)
    ds.save_idx(r.integers(0, 256, size=(n_train, 28, 28)).astype(np.uint8),
                d / "train-images-idx3-ubyte")
    ds.save_idx((np.arange(n_train) % 10).astype(np.uint8),
                d / "train-labels-idx1-ubyte")
    ds.save_idx(r.integers(0, 256, size=(n_test, 28, 28)).astype(np.uint8),
                d / "t10k-images-idx3-ubyte")
    ds.save_idx((np.arange(n_test) % 10).astype(np.uint8),
                d / "t10k-labels-idx1-ubyte")


def test_idx_round_trip(tmp_path):
    arr = np.arange(2 * 3 * 4, dtype=np.uint8).reshape(2, 3, 4)
    p = tmp_path / "a.idx"
    ds.save_idx(arr, p)
    assert np.array_equal(ds.load_idx(p), arr)


def test_idx_gzip_round_trip(tmp_path):
    arr = np.arange(30, dtype=np.uint8).reshape(5, 6)
    p = tmp_path / "a.idx.gz"
    ds.save_idx(arr, p)
    with gzip.open(p) as f:
        assert f.read(4)[:2] == b"\x00\x00"
    assert np.array_equal(ds.load_idx(p), arr)


def test_idx_hand_built_bytes(tmp_path):
    payload = bytes(range(8))
    raw = bytes([0, 0, 0x08, 2]) + struct.pack(">2I", 2, 4) + payload
    p = tmp_path / "h.idx"
    p.write_bytes(raw)
    got = ds.load_idx(p)
    assert got.shape == (2, 4)
    assert got[1, 3] == 7


def test_idx_error_cases(tmp_path):
    p = tmp_path / "bad.idx"
    p.write_bytes(b"\x01\x00\x08\x01" + struct.pack(">I", 1) + b"\x00")
    with pytest.raises(ValueError):
        ds.load_idx(p)
    p.write_bytes(bytes([0, 0, 0x0D, 1]) + struct.pack(">I", 1) + b"\x00")
    with pytest.raises(ValueError):
        ds.load_idx(p)
    p.write_bytes(bytes([0, 0, 0x08, 2]) + struct.pack(">2I", 2, 4) + b"\x00" * 5)
    with pytest.raises(ValueError):
        ds.load_idx(p)
    p.write_bytes(bytes([0, 0, 0x08, 3]) + struct.pack(">I", 1))
    with pytest.raises(ValueError):
        ds.load_idx(p)


def test_idx_pair_scales_to_unit_interval(tmp_path):
    ds.save_idx(np.full((3, 2, 2), 255, dtype=np.uint8), tmp_path / "i.idx")
    ds.save_idx(np.array([1, 2, 3], dtype=np.uint8), tmp_path / "l.idx")
    got = ds.load_idx_pair(tmp_path / "i.idx", tmp_path / "l.idx", "t")
    assert got.images.max() == 1.0
    assert list(got.labels) == [1, 2, 3]


def test_idx_pair_rejects_2d_labels(tmp_path):
    ds.save_idx(np.zeros((3, 2, 2), dtype=np.uint8), tmp_path / "i.idx")
    ds.save_idx(np.zeros((3, 2), dtype=np.uint8), tmp_path / "l.idx")
    with pytest.raises(ValueError):
        ds.load_idx_pair(tmp_path / "i.idx", tmp_path / "l.idx", "t")


def test_dataset_count_mismatch(tmp_path):
    with pytest.raises(ValueError):
        ds.Dataset("t", np.zeros((3, 4)), np.zeros(2, dtype=np.int64))


def test_find_idx_layout(tmp_path):
    assert ds.find_idx_layout(tmp_path) is None
    assert ds.find_idx_layout(None) is None
    _write_idx_quartet(tmp_path)
    layout = ds.find_idx_layout(tmp_path)
    assert layout is not None
    assert set(layout) == {"train-images", "train-labels",
                           "test-images", "test-labels"}


def test_mnist_or_synthetic_prefers_idx(tmp_path, monkeypatch):
    _write_idx_quartet(tmp_path)
    monkeypatch.delenv("AXFAULT_MNIST_DIR", raising=False)
    train, test, source = ds.mnist_or_synthetic(
        train_count=10, test_count=5, directory=tmp_path)
    assert source.startswith("idx:")
    assert len(train) == 10 and len(test) == 5
    assert train.images.shape[1:] == (28, 28)


def test_mnist_or_synthetic_env_dir(tmp_path, monkeypatch):
    _write_idx_quartet(tmp_path)
    monkeypatch.setenv("AXFAULT_MNIST_DIR", str(tmp_path))
    monkeypatch.chdir(tmp_path)
    _, _, source = ds.mnist_or_synthetic(train_count=4, test_count=2)
    assert source == f"idx:{tmp_path}"


def test_mnist_or_synthetic_fallback(tmp_path, monkeypatch):
    monkeypatch.delenv("AXFAULT_MNIST_DIR", raising=False)
    monkeypatch.chdir(tmp_path)
    train, test, source = ds.mnist_or_synthetic(train_count=40, test_count=20)
    assert source == "synthetic"
    assert len(train) == 40 and len(test) == 20
    # train and test must not share rendering state
    assert not np.array_equal(train.images[0], test.images[0])


def test_cifar_loader(tmp_path):
    rec = bytearray()
    for label in (3, 7):
        rec.append(label)
        plane = np.arange(1024, dtype=np.uint8)
        rec += bytes(plane)          # red
        rec += bytes(plane[::-1])    # green
        rec += bytes([label]) * 1024  # blue
    p = tmp_path / "b1.bin"
    p.write_bytes(bytes(rec))
    got = ds.load_cifar10_batches([p], "cifar-test")
    assert got.images.shape == (2, 32, 32, 3)
    assert list(got.labels) == [3, 7]
    assert got.images[0, 0, 1, 0] == 1 / 255.0           # red plane, row-major
    assert got.images[1, 0, 0, 2] == 7 / 255.0           # blue plane constant
    p.write_bytes(bytes(rec[:-1]))
    with pytest.raises(ValueError):
        ds.load_cifar10_batches([p], "cifar-test")


# --- synthetic generators ---------------------------------------------------


def test_blobs_deterministic():
    a = ds.synth_blobs(count=50, seed=3)
    b = ds.synth_blobs(count=50, seed=3)
    c = ds.synth_blobs(count=50, seed=4)
    assert np.array_equal(a.images, b.images)
    assert np.array_equal(a.labels, b.labels)
    assert not np.array_equal(a.images, c.images)


def test_blobs_share_class_means_across_seeds():
    # different seeds sample the same underlying problem, so per-class
    # centroids line up closely
    a = ds.synth_blobs(count=3000, seed=1)
    b = ds.synth_blobs(count=3000, seed=2)
    for k in range(3):
        ca = a.images[a.labels == k].mean(axis=0)
        cb = b.images[b.labels == k].mean(axis=0)
        assert np.linalg.norm(ca - cb) < 0.05


def test_blobs_range_and_validation():
    d = ds.synth_blobs(count=200, seed=0)
    assert d.images.min() >= 0.0 and d.images.max() <= 1.0
    assert d.images.shape == (200, 8)
    with pytest.raises(ValueError):
        ds.synth_blobs(count=0)


def test_blobs_centroid_classifier_works():
    train = ds.synth_blobs(count=600, seed=1)
    test = ds.synth_blobs(count=300, seed=2)
    means = np.stack([train.images[train.labels == k].mean(axis=0)
                      for k in range(3)])
    pred = np.argmin(
        ((test.images[:, None, :] - means[None]) ** 2).sum(axis=2), axis=1)
    assert (pred == test.labels).mean() >= 0.95


def test_digits_deterministic_and_balanced():
    a = ds.synth_digits(100, seed=5)
    b = ds.synth_digits(100, seed=5)
    assert np.array_equal(a.images, b.images)
    assert np.array_equal(a.labels, b.labels)
    counts = np.bincount(a.labels, minlength=10)
    assert list(counts) == [10] * 10


def test_digits_vary_across_seed_and_index():
    a = ds.synth_digits(40, seed=1)
    c = ds.synth_digits(40, seed=2)
    assert not np.array_equal(a.images, c.images)
    same = [i for i in range(40) if a.labels[i] == a.labels[0]]
    assert len(same) >= 2
    assert not np.array_equal(a.images[same[0]], a.images[same[1]])


def test_digits_pixel_conventions():
    d = ds.synth_digits(60, seed=3)
    assert d.images.shape == (60, 28, 28)
    assert d.images.min() == 0.0
    assert d.images.max() <= 1.0
    # ink is sparse on a black background
    assert (d.images > 0).mean() < 0.5
    # 8-bit amplitude grid
    assert np.allclose(d.images * 255, np.round(d.images * 255), atol=1e-9)
    with pytest.raises(ValueError):
        ds.synth_digits(0)


def test_subset():
    d = ds.synth_blobs(count=50, seed=0)
    s = d.subset(10)
    assert len(s) == 10
    assert np.array_equal(s.images, d.images[:10])


def test_parse_dataset_arg_forms(tmp_path):
    d = ds.parse_dataset_arg("digits:30:4")
    assert len(d) == 30
    b = ds.parse_dataset_arg("blobs:4:100:6:2")
    assert b.images.shape == (100, 6)
    assert b.n_classes == 4
    assert len(ds.parse_dataset_arg("blobs")) == 300

    ds.save_idx(np.zeros((3, 2, 2), dtype=np.uint8), tmp_path / "i.idx")
    ds.save_idx(np.zeros(3, dtype=np.uint8), tmp_path / "l.idx")
    got = ds.parse_dataset_arg(f"idx:{tmp_path / 'i.idx'}:{tmp_path / 'l.idx'}")
    assert len(got) == 3

    with pytest.raises(ValueError):
        ds.parse_dataset_arg("edgecase-corpus")
    with pytest.raises(ValueError):
        ds.parse_dataset_arg("digits:notanumber")


def test_parse_dataset_arg_mnist_shorthand(tmp_path, monkeypatch):
    _write_idx_quartet(tmp_path)
    monkeypatch.setenv("AXFAULT_MNIST_DIR", str(tmp_path))
    train = ds.parse_dataset_arg("mnist-train")
    test = ds.parse_dataset_arg(f"mnist-test:{tmp_path}")
    assert train.id.startswith("mnist-train")
    assert test.id.startswith("mnist-test")
    assert len(train) == 12 and len(test) == 6
