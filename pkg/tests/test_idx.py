import struct

import numpy as np
import pytest

from application.core.errors import BadMagic, DimMismatch, IoFailure, LabelOutOfRange, Truncated
from application.data import (
    load_raw_digits,
    parse_idx_images,
    parse_idx_labels,
    serialize_idx_images,
    serialize_idx_labels,
)


def image_header(n, rows=28, cols=28, magic=0x803):
    return struct.pack(">IIII", magic, n, rows, cols)


def label_header(n, magic=0x801):
    return struct.pack(">II", magic, n)


class TestParseImages:
    def test_single_zero_image(self):
        images = parse_idx_images(image_header(1) + bytes(784))
        assert images.shape == (1, 28, 28)
        assert not images.any()

    def test_truncated_payload(self):
        with pytest.raises(Truncated):
            parse_idx_images(image_header(2) + bytes(784))

    def test_truncated_header(self):
        with pytest.raises(Truncated):
            parse_idx_images(struct.pack(">II", 0x803, 1))

    def test_bad_magic(self):
        with pytest.raises(BadMagic):
            parse_idx_images(image_header(1, magic=0x801) + bytes(784))

    def test_wrong_side(self):
        with pytest.raises(DimMismatch):
            parse_idx_images(image_header(1, 32, 32) + bytes(32 * 32))

    def test_other_side_allowed_when_not_required(self):
        images = parse_idx_images(image_header(1, 2, 3) + bytes(6), required_side=None)
        assert images.shape == (1, 2, 3)

    def test_pixel_scaling(self):
        payload = bytearray(784)
        payload[0], payload[1] = 255, 51
        images = parse_idx_images(image_header(1) + bytes(payload))
        assert images[0, 0, 0] == 1.0
        assert images[0, 0, 1] == 51 / 255
        assert images[0, 0, 1] == pytest.approx(0.2)


class TestParseLabels:
    def test_identity_decode(self):
        assert parse_idx_labels(label_header(3) + bytes([0, 5, 9])).tolist() == [0, 5, 9]

    def test_label_out_of_range(self):
        with pytest.raises(LabelOutOfRange):
            parse_idx_labels(label_header(1) + bytes([12]))

    def test_empty(self):
        assert parse_idx_labels(label_header(0)).tolist() == []

    def test_bad_magic(self):
        with pytest.raises(BadMagic):
            parse_idx_labels(label_header(1, magic=0x803) + bytes([1]))

    def test_truncated(self):
        with pytest.raises(Truncated):
            parse_idx_labels(label_header(4) + bytes([1, 2]))


def test_round_trip(raw_train):
    images = parse_idx_images(serialize_idx_images(raw_train.images))
    labels = parse_idx_labels(serialize_idx_labels(raw_train.labels))
    np.testing.assert_array_equal(np.rint(images * 255), np.rint(raw_train.images * 255))
    np.testing.assert_array_equal(labels, raw_train.labels)


def test_load_raw_digits(idx_files, raw_train):
    raw = load_raw_digits(idx_files["train_images"], idx_files["train_labels"], "train")
    assert len(raw) == len(raw_train)
    assert raw.split_tag == "train"
    assert raw.images.min() >= 0.0 and raw.images.max() <= 1.0


def test_missing_file_is_io_failure(tmp_path):
    with pytest.raises(IoFailure):
        load_raw_digits(tmp_path / "nope", tmp_path / "nope-labels", "train")


def test_count_mismatch(tmp_path):
    (tmp_path / "img").write_bytes(image_header(1) + bytes(784))
    (tmp_path / "lbl").write_bytes(label_header(2) + bytes([1, 2]))
    with pytest.raises(DimMismatch):
        load_raw_digits(tmp_path / "img", tmp_path / "lbl", "test")
