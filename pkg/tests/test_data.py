import gzip

import numpy as np
import pytest
from hypothesis import given, strategies as st

from symtele.data import (Dataset, bundled_mnist_paths, load_idx, mnist_split, one_hot,
                          synth_regression, write_idx)

# Two 2x3 images: first all black except one white pixel, second a ramp.
# Header: magic, count, rows, cols, each a big-endian uint32.
IMAGE_BYTES = bytes([
    0x00, 0x00, 0x08, 0x03,
    0x00, 0x00, 0x00, 0x02,
    0x00, 0x00, 0x00, 0x02,
    0x00, 0x00, 0x00, 0x03,
    0, 0, 255, 0, 0, 0,
    0, 51, 102, 153, 204, 255,
])
LABEL_BYTES = bytes([
    0x00, 0x00, 0x08, 0x01,
    0x00, 0x00, 0x00, 0x02,
    7, 0,
])


@pytest.fixture
def fixture_paths(tmp_path):
    img, lab = tmp_path / "img.idx", tmp_path / "lab.idx"
    img.write_bytes(IMAGE_BYTES)
    lab.write_bytes(LABEL_BYTES)
    return img, lab


def test_fixture_pixels(fixture_paths):
    ds = load_idx(*fixture_paths)
    assert ds.inputs.shape == (6, 2)
    np.testing.assert_array_equal(ds.inputs[:, 0], [0, 0, 1, 0, 0, 0])
    np.testing.assert_allclose(ds.inputs[:, 1], [0, 0.2, 0.4, 0.6, 0.8, 1.0], rtol=1e-15)
    assert ds.inputs[2, 0] == 1.0 and ds.inputs[0, 0] == 0.0


def test_fixture_labels(fixture_paths):
    ds = load_idx(*fixture_paths)
    assert ds.targets.shape == (10, 2)
    np.testing.assert_array_equal(ds.targets[:, 0], np.eye(10)[7])
    np.testing.assert_array_equal(ds.targets[:, 1], np.eye(10)[0])


def test_limit(fixture_paths):
    empty = load_idx(*fixture_paths, limit=0)
    assert len(empty) == 0 and empty.inputs.shape == (6, 0) and empty.targets.shape == (10, 0)
    assert len(load_idx(*fixture_paths, limit=1)) == 1
    assert len(load_idx(*fixture_paths, limit=50)) == 2
    with pytest.raises(ValueError):
        load_idx(*fixture_paths, limit=-1)


def test_bad_magic(tmp_path, fixture_paths):
    img, lab = fixture_paths
    bad = tmp_path / "bad.idx"
    bad.write_bytes(LABEL_BYTES)
    with pytest.raises(ValueError, match="magic"):
        load_idx(bad, lab)
    with pytest.raises(ValueError, match="magic"):
        load_idx(img, img)


@pytest.mark.parametrize("cut", [3, 10, len(IMAGE_BYTES) - 1])
def test_truncated_images(tmp_path, fixture_paths, cut):
    bad = tmp_path / "short.idx"
    bad.write_bytes(IMAGE_BYTES[:cut])
    with pytest.raises(ValueError, match="truncated"):
        load_idx(bad, fixture_paths[1])


def test_count_mismatch(tmp_path, fixture_paths):
    lab = tmp_path / "one.idx"
    lab.write_bytes(bytes([0, 0, 8, 1, 0, 0, 0, 1, 3]))
    with pytest.raises(ValueError, match="labels"):
        load_idx(fixture_paths[0], lab)


def test_missing_file(tmp_path, fixture_paths):
    with pytest.raises(OSError):
        load_idx(tmp_path / "nope", fixture_paths[1])


def test_write_idx_reproduces_fixture_bytes(tmp_path):
    images = np.frombuffer(IMAGE_BYTES[16:], dtype=np.uint8).reshape(2, 2, 3)
    write_idx(tmp_path / "i", tmp_path / "l", images, [7, 0])
    assert (tmp_path / "i").read_bytes() == IMAGE_BYTES
    assert (tmp_path / "l").read_bytes() == LABEL_BYTES


@given(st.integers(0, 2**32 - 1), st.integers(0, 6), st.integers(1, 4), st.integers(1, 4),
       st.booleans())
def test_idx_round_trip(tmp_path_factory, seed, n, rows, cols, gz):
    r = np.random.default_rng(seed)
    images = r.integers(0, 256, size=(n, rows, cols), dtype=np.uint8)
    labels = r.integers(0, 10, size=n)
    d = tmp_path_factory.mktemp("idx")
    suffix = ".gz" if gz else ""
    write_idx(d / f"i{suffix}", d / f"l{suffix}", images, labels)
    ds = load_idx(d / f"i{suffix}", d / f"l{suffix}")
    np.testing.assert_array_equal(ds.inputs * 255.0, images.reshape(n, rows * cols).T)
    np.testing.assert_array_equal(ds.targets.argmax(axis=0) if n else labels, labels)
    assert np.all(ds.targets.sum(axis=0) == 1.0)
    assert np.all((ds.targets != 0).sum(axis=0) == 1)


def test_gzip_is_detected_by_suffix(tmp_path):
    with gzip.open(tmp_path / "i.gz", "wb") as fh:
        fh.write(IMAGE_BYTES)
    with gzip.open(tmp_path / "l.gz", "wb") as fh:
        fh.write(LABEL_BYTES)
    assert len(load_idx(tmp_path / "i.gz", tmp_path / "l.gz")) == 2


def test_one_hot_rejects_out_of_range():
    with pytest.raises(ValueError):
        one_hot([10])
    with pytest.raises(ValueError):
        one_hot([-1])


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 3)), np.zeros((1, 4)))
    with pytest.raises(ValueError):
        Dataset(np.zeros(3), np.zeros((1, 3)))


def test_bundled_subset():
    ds = load_idx(*bundled_mnist_paths())
    assert ds.inputs.shape == (784, 5000)
    assert ds.inputs.min() == 0.0 and ds.inputs.max() == 1.0
    np.testing.assert_array_equal(ds.targets.sum(axis=1), np.full(10, 500.0))


def test_mnist_split():
    train, val = mnist_split(0)
    assert (len(train), len(val)) == (4096, 904)
    assert (train.split, val.split) == ("train", "holdout")
    train2, _ = mnist_split(0)
    np.testing.assert_array_equal(train.inputs, train2.inputs)
    assert not np.array_equal(mnist_split(1)[0].inputs, train.inputs)
    assert len(mnist_split(0, 100, 10)[1]) == 10
    with pytest.raises(ValueError):
        mnist_split(0, 4096, 1000)


def test_synth_regression_reference_shapes():
    ds, params = synth_regression(0, 5, [6, 7, 8], 4)
    assert ds.inputs.shape == (5, 4) and ds.targets.shape == (8, 4)
    assert [w.shape for w in params.weights] == [(6, 5), (7, 6), (8, 7)]


@given(st.integers(0, 2**32 - 1))
def test_synth_regression_deterministic_and_bounded(seed):
    a, pa = synth_regression(seed, 5, [6, 7, 8], 4)
    b, pb = synth_regression(seed, 5, [6, 7, 8], 4)
    assert a.inputs.tobytes() == b.inputs.tobytes()
    assert a.targets.tobytes() == b.targets.tobytes()
    assert pa.to_vec().tobytes() == pb.to_vec().tobytes()
    for arr in (a.inputs, a.targets, pa.to_vec()):
        assert arr.min() >= 0.0 and arr.max() < 1.0


def test_synth_regression_rejects_bad_widths():
    with pytest.raises(ValueError):
        synth_regression(0, 5, [], 4)
    with pytest.raises(ValueError):
        synth_regression(0, 5, [3, 0], 4)
