"""Datasets: IDX (MNIST) and CIFAR binary parsers, task construction helpers.

Features are always float64 in [0, 1] (raw bytes divided by 255).
"""

from __future__ import annotations

import gzip
import importlib.util
import logging
import os
import struct
import urllib.request
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

IDX_IMAGE_MAGIC = 2051  # 0x00000803
IDX_LABEL_MAGIC = 2049  # 0x00000801
CIFAR_PIXELS = 3072

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
MNIST_MIRRORS = (
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
    "https://storage.googleapis.com/cvdf-datasets/mnist/",
)


class ParseError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    class_count: int
    provenance: str = "synthetic"

    def __post_init__(self):
        if len(self.features) != len(self.labels):
            raise ValueError(f"{len(self.features)} feature rows but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ValueError("labels outside [0, class_count)")

    # the optimizers only need .x / .y / len()
    @property
    def x(self):
        return self.features

    @property
    def y(self):
        return self.labels

    def __len__(self):
        return len(self.labels)

    def subset(self, idx):
        return Dataset(self.features[idx], self.labels[idx], self.class_count, self.provenance)


def data_root(default="data"):
    """Dataset root: ``$APDATA`` when set, else ``default``."""
    return Path(os.environ.get("APDATA", default))


def _read_bytes(path):
    path = Path(path)
    if not path.exists() and Path(str(path) + ".gz").exists():
        path = Path(str(path) + ".gz")
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def parse_idx_images(raw):
    if len(raw) < 16:
        raise ParseError(f"image file truncated in header at offset {len(raw)} (need 16 bytes)")
    magic, n, rows, cols = struct.unpack(">iiii", raw[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise ParseError(f"bad image magic {magic:#010x} at offset 0 (expected {IDX_IMAGE_MAGIC:#010x})")
    need = 16 + n * rows * cols
    if len(raw) != need:
        raise ParseError(f"image payload ends at offset {len(raw)}, header implies {need}")
    return np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(n, rows * cols)


def parse_idx_labels(raw):
    if len(raw) < 8:
        raise ParseError(f"label file truncated in header at offset {len(raw)} (need 8 bytes)")
    magic, n = struct.unpack(">ii", raw[:8])
    if magic != IDX_LABEL_MAGIC:
        raise ParseError(f"bad label magic {magic:#010x} at offset 0 (expected {IDX_LABEL_MAGIC:#010x})")
    if len(raw) != 8 + n:
        raise ParseError(f"label payload ends at offset {len(raw)}, header implies {8 + n}")
    return np.frombuffer(raw, dtype=np.uint8, offset=8)


def encode_idx_images(images):
    images = np.asarray(images, dtype=np.uint8)
    n, side = len(images), int(round(np.sqrt(images.reshape(len(images), -1).shape[1])))
    return struct.pack(">iiii", IDX_IMAGE_MAGIC, n, side, side) + images.tobytes()


def encode_idx_labels(labels):
    labels = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">ii", IDX_LABEL_MAGIC, len(labels)) + labels.tobytes()


def load_mnist(path, split="train"):
    """Load an MNIST split from IDX files (optionally gzipped) under ``path``."""
    img_name, lbl_name = MNIST_FILES[split]
    images = parse_idx_images(_read_bytes(Path(path) / img_name))
    labels = parse_idx_labels(_read_bytes(Path(path) / lbl_name))
    if len(images) != len(labels):
        raise ParseError(f"{len(images)} images but {len(labels)} labels")
    return Dataset(images.astype(np.float64) / 255.0, labels.astype(np.int64), 10, "mnist")


def mnist_available(path):
    img, lbl = MNIST_FILES["train"]
    return all((Path(path) / f).exists() or (Path(path) / (f + ".gz")).exists() for f in (img, lbl))


def _bundled_mnist_subset():
    """The 5000-image MNIST sample shipped inside the mlxtend wheel (500 per digit)."""
    spec = importlib.util.find_spec("mlxtend")
    if spec is None or not spec.submodule_search_locations:
        return None
    csv_path = Path(spec.submodule_search_locations[0]) / "data" / "data" / "mnist_5k.csv.gz"
    if not csv_path.exists():
        return None
    table = np.loadtxt(gzip.open(csv_path), delimiter=",")
    return table[:, :-1].astype(np.uint8), table[:, -1].astype(np.uint8)


def fetch_mnist(root, try_download=True):
    """Make the MNIST training IDX files available under ``root``.

    Tries the public mirrors first; without network access falls back to
    the bundled 5000-image subset, written out as IDX files.  Returns a
    short tag naming the source used.
    """
    root = Path(root)
    if mnist_available(root):
        return "present"
    root.mkdir(parents=True, exist_ok=True)
    if try_download:
        for base in MNIST_MIRRORS:
            try:
                for split in ("train", "test"):
                    for name in MNIST_FILES[split]:
                        with urllib.request.urlopen(base + name + ".gz", timeout=10) as resp:
                            (root / (name + ".gz")).write_bytes(resp.read())
                return "download"
            except OSError as exc:
                log.info("mirror %s unavailable: %s", base, exc)
    subset = _bundled_mnist_subset()
    if subset is None:
        raise FileNotFoundError(
            f"MNIST not found under {root}. Place train-images-idx3-ubyte and "
            "train-labels-idx1-ubyte there (or set APDATA), or `pip install mlxtend` "
            "for the bundled 5000-image subset."
        )
    images, labels = subset
    img_name, lbl_name = MNIST_FILES["train"]
    (root / img_name).write_bytes(encode_idx_images(images))
    (root / lbl_name).write_bytes(encode_idx_labels(labels))
    return "mlxtend-subset"


def binary_task(dataset, class_a, class_b):
    """Keep two classes, relabelled ``class_a -> 0`` and ``class_b -> 1``."""
    if class_a == class_b:
        raise ValueError("binary task needs two distinct classes")
    return class_task(dataset, [class_a, class_b])


def class_task(dataset, classes):
    """Keep the listed classes, relabelled ``0..len(classes)-1`` in list order."""
    classes = list(classes)
    if len(set(classes)) != len(classes):
        raise ValueError(f"duplicate classes in {classes}")
    present = set(np.unique(dataset.labels).tolist())
    missing = [c for c in classes if c not in present]
    if missing:
        raise ValueError(f"classes {missing} not present in dataset")
    keep = np.isin(dataset.labels, classes)
    lut = np.full(dataset.class_count, -1, dtype=np.int64)
    lut[classes] = np.arange(len(classes))
    return Dataset(dataset.features[keep], lut[dataset.labels[keep]], len(classes), dataset.provenance)


def balanced_subsample(dataset, classes, n_per_class, seed):
    """Exactly ``n_per_class`` random examples of each listed class (labels unchanged)."""
    rng = np.random.default_rng(seed)
    picks = []
    for c in classes:
        idx = np.flatnonzero(dataset.labels == c)
        if len(idx) < n_per_class:
            raise ValueError(f"class {c} has {len(idx)} examples, {n_per_class} requested")
        picks.append(rng.choice(idx, n_per_class, replace=False))
    idx = np.sort(np.concatenate(picks)) if picks else np.zeros(0, dtype=np.int64)
    return dataset.subset(idx)


def split(dataset, test_fraction, seed, stratified=True):
    """Seed-fixed disjoint (retrain, test) split."""
    rng = np.random.default_rng(seed)
    if stratified:
        test = []
        for c in np.unique(dataset.labels):
            idx = rng.permutation(np.flatnonzero(dataset.labels == c))
            test.append(idx[: int(round(test_fraction * len(idx)))])
        test = np.sort(np.concatenate(test))
    else:
        test = np.sort(rng.permutation(len(dataset))[: int(round(test_fraction * len(dataset)))])
    train = np.setdiff1d(np.arange(len(dataset)), test)
    return dataset.subset(train), dataset.subset(test)


def parse_cifar(raw, variant="c10"):
    """Parse CIFAR binary records; CIFAR-100 records carry (coarse, fine) and we keep fine."""
    if variant not in ("c10", "c100"):
        raise ValueError(f"variant must be 'c10' or 'c100', got {variant!r}")
    header = 1 if variant == "c10" else 2
    rec = header + CIFAR_PIXELS
    if len(raw) == 0 or len(raw) % rec:
        raise ParseError(f"{len(raw)} bytes is not a positive multiple of the {rec}-byte record")
    table = np.frombuffer(raw, dtype=np.uint8).reshape(-1, rec)
    labels = table[:, header - 1].astype(np.int64)
    return Dataset(table[:, header:].astype(np.float64) / 255.0, labels,
                   10 if variant == "c10" else 100, "cifar10" if variant == "c10" else "cifar100")


def load_cifar(path, variant="c10"):
    """Load one CIFAR binary batch file, or every ``*.bin`` file in a directory."""
    path = Path(path)
    files = sorted(path.glob("*.bin")) if path.is_dir() else [path]
    if not files:
        raise FileNotFoundError(f"no CIFAR .bin files under {path}")
    parts = [parse_cifar(_read_bytes(f), variant) for f in files]
    return Dataset(np.concatenate([p.features for p in parts]), np.concatenate([p.labels for p in parts]),
                   parts[0].class_count, parts[0].provenance)


def synthetic(n, n_features, n_classes, seed, informative=None, noise=0.5):
    """Gaussian-blob classification data squashed into [0, 1].

    Only the first ``informative`` features carry class signal.
    """
    rng = np.random.default_rng(seed)
    informative = n_features if informative is None else informative
    centers = np.zeros((n_classes, n_features))
    centers[:, :informative] = rng.normal(0.0, 1.0, (n_classes, informative))
    labels = np.arange(n) % n_classes
    rng.shuffle(labels)
    raw = centers[labels] + rng.normal(0.0, noise, (n, n_features))
    return Dataset(1.0 / (1.0 + np.exp(-raw)), labels.astype(np.int64), n_classes, "synthetic")
