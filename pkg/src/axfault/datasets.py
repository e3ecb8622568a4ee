"""Dataset loading and synthesis.

Real data comes from files on disk (IDX image/label pairs, CIFAR-10 binary
batches); nothing here touches the network. For hermetic runs there are two
seeded generators: gaussian blob toy data, and a procedural 28x28
handwritten-digit renderer with MNIST-like statistics (10 classes, dark
background, anti-aliased strokes, per-sample affine jitter) that slots into
any pipeline expecting MNIST-shaped input.
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

IDX_UBYTE = 0x08


@dataclass
class Dataset:
    id: str
    images: np.ndarray
    labels: np.ndarray
    n_classes: int = 10

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.images) != len(self.labels):
            raise ValueError("images and labels disagree on sample count")

    def __len__(self):
        return len(self.images)

    def subset(self, count: int) -> "Dataset":
        return Dataset(f"{self.id}[:{count}]", self.images[:count],
                       self.labels[:count], self.n_classes)


# ---------------------------------------------------------------------------
# IDX files (big-endian, as published)


def _open_maybe_gz(path, mode):
    if str(path).endswith(".gz"):
        return gzip.open(path, mode)
    return open(path, mode)


def load_idx(path) -> np.ndarray:
    with _open_maybe_gz(path, "rb") as f:
        data = f.read()
    if len(data) < 4 or data[0] != 0 or data[1] != 0:
        raise ValueError(f"{path}: not an IDX file")
    if data[2] != IDX_UBYTE:
        raise ValueError(f"{path}: only ubyte IDX payloads are supported")
    ndim = data[3]
    if len(data) < 4 + 4 * ndim:
        raise ValueError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", data[4 : 4 + 4 * ndim])
    count = int(np.prod(dims))
    payload = data[4 + 4 * ndim :]
    if len(payload) != count:
        raise ValueError(f"{path}: payload is {len(payload)} bytes, header says {count}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def save_idx(arr: np.ndarray, path) -> None:
    arr = np.ascontiguousarray(arr, dtype=np.uint8)
    with _open_maybe_gz(path, "wb") as f:
        f.write(bytes([0, 0, IDX_UBYTE, arr.ndim]))
        f.write(struct.pack(f">{arr.ndim}I", *arr.shape))
        f.write(arr.tobytes())


def load_idx_pair(images_path, labels_path, dataset_id: str,
                  n_classes: int = 10) -> Dataset:
    images = load_idx(images_path)
    labels = load_idx(labels_path)
    if labels.ndim != 1:
        raise ValueError("label file must be 1-d")
    return Dataset(dataset_id, images.astype(np.float64) / 255.0,
                   labels.astype(np.int64), n_classes)


_MNIST_NAMES = {
    "train-images": ["train-images-idx3-ubyte", "train-images.idx3-ubyte"],
    "train-labels": ["train-labels-idx1-ubyte", "train-labels.idx1-ubyte"],
    "test-images": ["t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte",
                    "test-images-idx3-ubyte", "test-images.idx"],
    "test-labels": ["t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte",
                    "test-labels-idx1-ubyte", "test-labels.idx"],
}


def find_idx_layout(directory) -> dict | None:
    """Locate a standard MNIST-style IDX file quartet (plain or .gz)."""
    if not directory or not os.path.isdir(directory):
        return None
    found = {}
    for key, names in _MNIST_NAMES.items():
        for name in names:
            for suffix in ("", ".gz"):
                p = os.path.join(str(directory), name + suffix)
                if os.path.exists(p):
                    found[key] = p
                    break
            if key in found:
                break
        if key not in found:
            return None
    return found


# ---------------------------------------------------------------------------
# CIFAR-10 binary batches


def load_cifar10_batches(paths, dataset_id: str) -> Dataset:
    """Each record is 1 label byte + 3072 bytes of channel-planar 32x32 RGB."""
    images, labels = [], []
    for path in paths:
        with _open_maybe_gz(path, "rb") as f:
            raw = f.read()
        if len(raw) % 3073:
            raise ValueError(f"{path}: size is not a multiple of 3073")
        rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3073)
        labels.append(rec[:, 0])
        images.append(rec[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1))
    img = np.concatenate(images).astype(np.float64) / 255.0
    lab = np.concatenate(labels).astype(np.int64)
    return Dataset(dataset_id, img, lab, 10)


# ---------------------------------------------------------------------------
# synthetic data


def synth_blobs(n_classes: int = 3, count: int = 300, dim: int = 8,
                seed: int = 0) -> Dataset:
    """Seeded gaussian blobs scaled into [0, 1]; tiny and fast.

    Class means depend only on (n_classes, dim), so two calls with
    different seeds sample train and test sets of the same problem.
    """
    if count <= 0:
        raise ValueError("count must be positive")
    mean_rng = np.random.default_rng([n_classes, dim, 0xB10B])
    means = mean_rng.uniform(-2.0, 2.0, size=(n_classes, dim))
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, n_classes, size=count)
    x = means[labels] + rng.normal(0.0, 0.45, size=(count, dim))
    x = np.clip((x + 3.35) / 6.7, 0.0, 1.0)  # fixed affine into [0, 1]
    return Dataset(f"blobs-{n_classes}c-{count}-s{seed}", x, labels, n_classes)


def _arc(cx, cy, rx, ry, a0, a1, steps=14):
    t = np.linspace(a0, a1, steps)
    return np.stack([cx + rx * np.cos(t), cy + ry * np.sin(t)], axis=1)


def _digit_strokes() -> dict:
    """Stroke templates per digit: one or more handwriting styles, each a
    list of polylines in a unit box (y grows down)."""
    pi = np.pi
    s = {
        0: [[_arc(0.50, 0.50, 0.30, 0.40, 0, 2 * pi, 22)],
            [_arc(0.50, 0.50, 0.24, 0.42, 0, 2 * pi, 22)]],
        1: [[np.array([[0.33, 0.26], [0.55, 0.10], [0.55, 0.90]])],
            [np.array([[0.50, 0.10], [0.50, 0.90]])]],
        2: [[np.concatenate([
            _arc(0.50, 0.32, 0.28, 0.22, -pi, 0.0, 12),
            np.array([[0.74, 0.42], [0.22, 0.90], [0.80, 0.90]]),
        ])]],
        3: [[_arc(0.45, 0.30, 0.28, 0.20, -pi, 0.5 * pi, 14),
             _arc(0.45, 0.68, 0.30, 0.24, -0.5 * pi, pi, 14)]],
        4: [[np.array([[0.60, 0.10], [0.18, 0.62], [0.85, 0.62]]),
             np.array([[0.64, 0.30], [0.64, 0.92]])],
            [np.array([[0.30, 0.10], [0.25, 0.55], [0.80, 0.55]]),
             np.array([[0.65, 0.10], [0.62, 0.92]])]],
        5: [[np.concatenate([
            np.array([[0.75, 0.10], [0.28, 0.10], [0.27, 0.45], [0.45, 0.45]]),
            _arc(0.45, 0.68, 0.27, 0.23, -0.5 * pi, 0.95 * pi, 14),
        ])]],
        6: [[np.array([[0.68, 0.10], [0.45, 0.30], [0.33, 0.55]]),
             _arc(0.48, 0.70, 0.21, 0.20, 0, 2 * pi, 18)]],
        7: [[np.array([[0.20, 0.12], [0.80, 0.12], [0.42, 0.90]])],
            [np.array([[0.20, 0.12], [0.80, 0.12], [0.42, 0.90]]),
             np.array([[0.35, 0.50], [0.68, 0.50]])]],
        8: [[_arc(0.50, 0.30, 0.20, 0.19, 0, 2 * pi, 18),
             _arc(0.50, 0.70, 0.24, 0.21, 0, 2 * pi, 18)]],
        9: [[_arc(0.50, 0.32, 0.21, 0.21, 0, 2 * pi, 18),
             np.array([[0.71, 0.35], [0.66, 0.60], [0.55, 0.90]])],
            [_arc(0.50, 0.30, 0.21, 0.20, 0, 2 * pi, 18),
             np.array([[0.71, 0.33], [0.71, 0.90]])]],
    }
    return s


def _blur3(img: np.ndarray) -> np.ndarray:
    pad = np.pad(img, 1)
    out = (
        4 * pad[1:-1, 1:-1]
        + 2 * (pad[:-2, 1:-1] + pad[2:, 1:-1] + pad[1:-1, :-2] + pad[1:-1, 2:])
        + pad[:-2, :-2] + pad[:-2, 2:] + pad[2:, :-2] + pad[2:, 2:]
    )
    return out / 16.0


_GRID = None


def _pixel_grid():
    global _GRID
    if _GRID is None:
        ys, xs = np.mgrid[0:28, 0:28]
        _GRID = np.stack([xs.reshape(-1) + 0.5, ys.reshape(-1) + 0.5], axis=1)
    return _GRID


def _warp_points(px: np.ndarray, rng, amp: float) -> np.ndarray:
    """Displace points by a smooth random field (coarse grid, bilinear)."""
    coarse = rng.normal(0.0, 1.0, size=(2, 4, 4))
    u = np.clip(px / 28.0 * 3.0, 0.0, 3.0 - 1e-9)
    i0 = np.floor(u).astype(int)
    f = u - i0
    out = px.copy()
    for ax in range(2):
        g = coarse[ax]
        out[:, ax] += amp * (
            g[i0[:, 1], i0[:, 0]] * (1 - f[:, 0]) * (1 - f[:, 1])
            + g[i0[:, 1], i0[:, 0] + 1] * f[:, 0] * (1 - f[:, 1])
            + g[i0[:, 1] + 1, i0[:, 0]] * (1 - f[:, 0]) * f[:, 1]
            + g[i0[:, 1] + 1, i0[:, 0] + 1] * f[:, 0] * f[:, 1]
        )
    return out


def _render_digit(styles, rng) -> np.ndarray:
    strokes = styles[int(rng.integers(len(styles)))]
    theta = rng.uniform(-0.25, 0.25)
    sx, sy = rng.uniform(0.78, 1.16, size=2)
    shear = rng.uniform(-0.22, 0.22)
    tx, ty = rng.uniform(-2.5, 2.5, size=2)
    thick = rng.uniform(0.8, 2.0)
    peak = rng.uniform(0.65, 1.0)
    amp = rng.uniform(0.8, 2.0)

    ct, st = np.cos(theta), np.sin(theta)
    rot = np.array([[ct, -st], [st, ct]])
    segs_a, segs_b = [], []
    for pts in strokes:
        p = pts + rng.normal(0.0, 0.025, size=pts.shape)
        p = (p - 0.5) @ np.array([[sx, 0.0], [shear * sx, sy]]).T
        p = p @ rot.T + 0.5
        px = p * 20.0 + 4.0 + np.array([tx, ty])
        segs_a.append(px[:-1])
        segs_b.append(px[1:])
    a = np.concatenate(segs_a)
    b = np.concatenate(segs_b)
    nseg = len(a)
    joined = _warp_points(np.concatenate([a, b]), rng, amp)
    a = joined[:nseg][:, None, :]
    b = joined[nseg:][:, None, :]
    grid = _pixel_grid()[None, :, :]

    ab = b - a
    denom = np.maximum((ab * ab).sum(-1), 1e-12)
    t = np.clip(((grid - a) * ab).sum(-1) / denom, 0.0, 1.0)
    nearest = a + t[:, :, None] * ab
    dist = np.sqrt(((grid - nearest) ** 2).sum(-1)).min(axis=0)

    aa = 0.7
    img = np.clip((thick + aa - dist) / (2 * aa), 0.0, 1.0).reshape(28, 28)
    img = _blur3(img)
    img = np.clip(img * (1.0 + rng.normal(0.0, 0.08, img.shape)), 0.0, 1.0)
    img *= peak
    # store with 8-bit precision, like camera-captured corpora
    return np.round(img * 255.0) / 255.0


def synth_digits(count: int, seed: int = 0, split: str = "train") -> Dataset:
    """Procedural 28x28 grayscale digits, deterministic in (count, seed).

    Classes are balanced (round-robin, then shuffled). Useful wherever
    MNIST-shaped data is needed but no corpus files are available.
    """
    if count <= 0:
        raise ValueError("count must be positive")
    rng = np.random.default_rng([seed, 0xD161])
    labels = rng.permutation(np.arange(count) % 10)
    strokes = _digit_strokes()
    images = np.empty((count, 28, 28))
    for i in range(count):
        images[i] = _render_digit(strokes[int(labels[i])], rng)
    return Dataset(f"digits-{split}-{count}-s{seed}", images, labels, 10)


def mnist_or_synthetic(train_count: int = 10000, test_count: int = 2000,
                       seed: int = 7, directory=None):
    """(train, test, source) preferring real IDX files when present.

    Looks in ``directory``, then $AXFAULT_MNIST_DIR, then ./data/mnist.
    Falls back to the procedural digit generator.
    """
    candidates = [directory, os.environ.get("AXFAULT_MNIST_DIR"), "data/mnist"]
    for cand in candidates:
        layout = find_idx_layout(cand)
        if layout:
            train = load_idx_pair(layout["train-images"], layout["train-labels"],
                                  "mnist-train")
            test = load_idx_pair(layout["test-images"], layout["test-labels"],
                                 "mnist-test")
            return train.subset(train_count), test.subset(test_count), f"idx:{cand}"
    train = synth_digits(train_count, seed=seed, split="train")
    test = synth_digits(test_count, seed=seed + 1, split="test")
    return train, test, "synthetic"


def parse_dataset_arg(spec: str) -> Dataset:
    """CLI dataset shorthand.

    digits:<count>:<seed> | blobs:<classes>:<count>:<dim>:<seed> |
    idx:<images_path>:<labels_path> | cifar:<batch1>[,<batch2>...] |
    mnist-train[:<dir>] | mnist-test[:<dir>]
    """
    parts = spec.split(":")
    kind = parts[0]
    if kind in ("mnist-train", "mnist-test"):
        directory = parts[1] if len(parts) > 1 else None
        train, test, _ = mnist_or_synthetic(directory=directory)
        return train if kind == "mnist-train" else test
    if kind == "digits":
        count = int(parts[1]) if len(parts) > 1 else 2000
        seed = int(parts[2]) if len(parts) > 2 else 0
        return synth_digits(count, seed)
    if kind == "blobs":
        vals = [int(p) for p in parts[1:]]
        classes, count, dim, seed = (vals + [3, 300, 8, 0][len(vals):])[:4]
        return synth_blobs(classes, count, dim, seed)
    if kind == "idx":
        if len(parts) != 3:
            raise ValueError("idx dataset needs idx:<images>:<labels>")
        return load_idx_pair(parts[1], parts[2], f"idx:{os.path.basename(parts[1])}")
    if kind == "cifar":
        paths = ",".join(parts[1:]).split(",")
        return load_cifar10_batches(paths, "cifar10")
    raise ValueError(f"unknown dataset spec {spec!r}")
