import struct

import numpy as np
import pytest

from egbench import (
    FixtureSpec,
    evaluate_accuracy,
    load_csv,
    load_idx,
    make_synthetic,
    train_fixture,
)


def write_idx_pair(tmp_path, images, labels, image_magic=0x00000803, label_magic=0x00000801,
                   truncate_pixels=0):
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    img_path = tmp_path / "images.idx"
    payload = images.tobytes()
    if truncate_pixels:
        payload = payload[:-truncate_pixels]
    img_path.write_bytes(struct.pack(">IIII", image_magic, n, rows, cols) + payload)
    lab_path = tmp_path / "labels.idx"
    lab_path.write_bytes(struct.pack(">II", label_magic, len(labels)) +
                         bytes(int(v) for v in labels))
    return img_path, lab_path


def test_idx_two_image_fixture_scales_to_unit_interval(tmp_path):
    images = np.array([[[0, 255], [255, 0]], [[255, 255], [0, 0]]])
    img, lab = write_idx_pair(tmp_path, images, [3, 7])
    ds = load_idx(img, lab)
    assert ds.n == 2 and ds.d == 4
    assert np.array_equal(ds.X[0], [0.0, 1.0, 1.0, 0.0])
    assert np.array_equal(ds.X[1], [1.0, 1.0, 0.0, 0.0])
    assert list(ds.y) == [3, 7]


def test_idx_loading_is_bit_identical_across_calls(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(5, 3, 3))
    img, lab = write_idx_pair(tmp_path, images, rng.integers(0, 10, 5))
    a, b = load_idx(img, lab), load_idx(img, lab)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)


def test_idx_bad_image_magic(tmp_path):
    img, lab = write_idx_pair(tmp_path, np.zeros((1, 2, 2)), [0], image_magic=0x00000804)
    with pytest.raises(ValueError, match="bad IDX magic"):
        load_idx(img, lab)


def test_idx_bad_label_magic(tmp_path):
    img, lab = write_idx_pair(tmp_path, np.zeros((1, 2, 2)), [0], label_magic=0x00000802)
    with pytest.raises(ValueError, match="bad IDX magic"):
        load_idx(img, lab)


def test_idx_count_mismatch(tmp_path):
    img, lab = write_idx_pair(tmp_path, np.zeros((2, 2, 2)), [0])
    with pytest.raises(ValueError, match="does not match"):
        load_idx(img, lab)


def test_idx_truncated_payload(tmp_path):
    img, lab = write_idx_pair(tmp_path, np.zeros((2, 2, 2)), [0, 1], truncate_pixels=3)
    with pytest.raises(ValueError, match="truncated"):
        load_idx(img, lab)


def test_idx_full_test_set_scale(tmp_path):
    # a 10000-image, 28x28 file pair parses to d=784 with labels 0-9
    rng = np.random.default_rng(7)
    images = rng.integers(0, 256, size=(10000, 28, 28))
    img, lab = write_idx_pair(tmp_path, images, rng.integers(0, 10, 10000))
    ds = load_idx(img, lab)
    assert ds.n == 10000 and ds.d == 784
    assert ds.y.min() >= 0 and ds.y.max() <= 9
    assert ds.X.min() >= 0.0 and ds.X.max() <= 1.0


def test_csv_three_row_fixture(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("a,b,label\n0.1,0.2,0\n0.3,0.4,1\n0.5,0.6,1\n")
    ds = load_csv(path, "label")
    assert ds.n == 3 and ds.d == 2
    assert np.allclose(ds.X, [[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]])
    assert list(ds.y) == [0, 1, 1]


def test_csv_missing_label_column_names_header(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("a,b\n0.1,0.2\n")
    with pytest.raises(ValueError, match="'label'"):
        load_csv(path, "label")


def test_csv_out_of_bounds_lists_offending_row(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("a,label\n0.5,0\n1.5,1\n")
    with pytest.raises(ValueError, match="row 3"):
        load_csv(path, "label")


def test_csv_ragged_row(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("a,b,label\n0.1,0.2,0\n0.3,1\n")
    with pytest.raises(ValueError, match="ragged"):
        load_csv(path, "label")


def test_csv_non_numeric_cell(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("a,label\noops,0\n")
    with pytest.raises(ValueError, match="non-numeric"):
        load_csv(path, "label")


def test_synthetic_is_deterministic():
    a = make_synthetic(seed=9, d=5, n_per_class=12, classes=3, separation=4.0)
    b = make_synthetic(seed=9, d=5, n_per_class=12, classes=3, separation=4.0)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)


def test_synthetic_zero_separation_means_coincide():
    ds = make_synthetic(seed=1, d=4, n_per_class=400, classes=2, separation=0.0)
    m0 = ds.X[ds.y == 0].mean(axis=0)
    m1 = ds.X[ds.y == 1].mean(axis=0)
    # class-conditional means coincide up to sampling noise
    assert np.abs(m0 - m1).max() < 0.02


def test_synthetic_wide_separation_is_learnable():
    ds = make_synthetic(seed=5, d=8, n_per_class=50, classes=3, separation=6.0)
    model = train_fixture(FixtureSpec(8, 3, (16,)), ds, epochs=300, lr=0.3, seed=0)
    assert evaluate_accuracy(model, ds) >= 0.99


def test_synthetic_stays_in_unit_box():
    ds = make_synthetic(seed=8, d=3, n_per_class=200, classes=4, separation=10.0)
    assert ds.X.min() >= 0.0 and ds.X.max() <= 1.0


def test_synthetic_parameter_validation():
    with pytest.raises(ValueError):
        make_synthetic(seed=0, d=0, n_per_class=5, classes=2, separation=1.0)
    with pytest.raises(ValueError):
        make_synthetic(seed=0, d=3, n_per_class=5, classes=1, separation=1.0)
