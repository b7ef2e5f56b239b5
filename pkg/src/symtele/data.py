"""Datasets: IDX (MNIST) parsing and seeded synthetic regression instances.

Matrices follow the network convention of one sample per column.
"""
import gzip
import struct
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .mlp import DEFAULT_SLOPE, random_params

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
NUM_CLASSES = 10
RNG_NAME = "numpy.random.PCG64"

# 5000 real MNIST training images (500 per class), shipped with the package.
_BUNDLED = "mnist5k"
_BUNDLED_IMAGES = "images-idx3-ubyte.gz"
_BUNDLED_LABELS = "labels-idx1-ubyte.gz"


@dataclass(frozen=True)
class Dataset:
    """Inputs (features x samples) and targets (outputs x samples)."""

    inputs: np.ndarray
    targets: np.ndarray
    split: str = "train"

    def __post_init__(self):
        if self.inputs.ndim != 2 or self.targets.ndim != 2:
            raise ValueError("inputs and targets must be 2-D")
        if self.inputs.shape[1] != self.targets.shape[1]:
            raise ValueError(
                f"sample counts differ: {self.inputs.shape[1]} inputs, "
                f"{self.targets.shape[1]} targets")

    def __len__(self):
        return self.inputs.shape[1]

    def subset(self, cols, split=None):
        return Dataset(self.inputs[:, cols], self.targets[:, cols],
                       self.split if split is None else split)


def make_rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def _open(path):
    path = str(path)
    return gzip.open(path, "rb") if path.endswith(".gz") else open(path, "rb")


def _read_idx(path, magic, ndim):
    with _open(path) as fh:
        raw = fh.read()
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise ValueError(f"{path}: truncated IDX header")
    found = struct.unpack(">I", raw[:4])[0]
    if found != magic:
        raise ValueError(f"{path}: bad magic 0x{found:08x}, expected 0x{magic:08x}")
    shape = struct.unpack(f">{ndim}I", raw[4:header])
    size = int(np.prod(shape))
    body = raw[header:]
    if len(body) < size:
        raise ValueError(f"{path}: truncated, expected {size} data bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8, count=size).reshape(shape)


def one_hot(labels, classes=NUM_CLASSES):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ValueError(f"labels must lie in [0, {classes})")
    out = np.zeros((classes, labels.size))
    out[labels, np.arange(labels.size)] = 1.0
    return out


def load_idx(path_images, path_labels, limit=None):
    """Read an IDX image/label pair (optionally gzipped).

    Images are flattened to columns and scaled by 1/255; labels become
    one-hot columns over 10 classes. ``limit`` keeps the first samples.
    """
    images = _read_idx(path_images, IMAGE_MAGIC, 3)
    labels = _read_idx(path_labels, LABEL_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise ValueError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    if limit is not None:
        if limit < 0:
            raise ValueError("limit must be nonnegative")
        images, labels = images[:limit], labels[:limit]
    n = images.shape[0]
    x = images.reshape(n, images.shape[1] * images.shape[2]).T.astype(np.float64) / 255.0
    return Dataset(x, one_hot(labels))


def write_idx(path_images, path_labels, images, labels):
    """Write uint8 ``images`` (n x rows x cols) and ``labels`` (n,) as IDX files."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    if images.ndim != 3 or labels.ndim != 1:
        raise ValueError("images must be n x rows x cols and labels a vector")
    img = struct.pack(">IIII", IMAGE_MAGIC, *images.shape) + images.tobytes()
    lab = struct.pack(">II", LABEL_MAGIC, labels.size) + labels.tobytes()
    for path, payload in ((path_images, img), (path_labels, lab)):
        path = str(path)
        if path.endswith(".gz"):
            with gzip.GzipFile(path, "wb", mtime=0) as fh:
                fh.write(payload)
        else:
            with open(path, "wb") as fh:
                fh.write(payload)


def bundled_mnist_paths():
    root = resources.files("symtele") / "_data" / _BUNDLED
    return str(root / _BUNDLED_IMAGES), str(root / _BUNDLED_LABELS)


def mnist_split(seed, train_size=4096, holdout=None, path_images=None, path_labels=None):
    """Shuffled train/holdout split of an MNIST IDX pair.

    Defaults to the bundled 5000-image subset. The permutation depends only
    on ``seed``; ``holdout=None`` keeps every remaining sample for validation.
    """
    if path_images is None or path_labels is None:
        path_images, path_labels = bundled_mnist_paths()
    full = load_idx(path_images, path_labels)
    n = len(full)
    holdout = n - train_size if holdout is None else holdout
    if train_size < 1 or holdout < 0 or train_size + holdout > n:
        raise ValueError(f"cannot take {train_size} + {holdout} samples from {n}")
    order = make_rng(seed).permutation(n)
    train = full.subset(order[:train_size], "train")
    val = full.subset(order[train_size:train_size + holdout], "holdout")
    return train, val


def synth_regression(seed, d0, dims, n, slope=DEFAULT_SLOPE):
    """Uniform ``[0, 1)`` regression data and weights for hidden/output widths ``dims``.

    Draw order is X, Y, then the weights layer by layer, so a seed pins the
    whole instance.
    """
    dims = [int(d) for d in dims]
    if d0 < 1 or n < 1 or not dims or min(dims) < 1:
        raise ValueError("widths and sample count must be positive")
    rng = make_rng(seed)
    x = rng.uniform(size=(d0, n))
    y = rng.uniform(size=(dims[-1], n))
    params = random_params(rng, [d0] + dims, slope)
    return Dataset(x, y), params
