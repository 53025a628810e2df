import gzip
import struct

import numpy as np
import pytest

from memqnn.data import (
    TaskSchedule,
    TaskSpec,
    batches,
    fetch_dataset,
    load_dataset,
    load_idx,
)
from memqnn.errors import ConfigError, IdxFormatError

from conftest import write_idx_images, write_idx_labels


@pytest.fixture
def fixture_pair(tmp_path):
    """Two hand-built images with known pixel values plus labels."""
    imgs = np.zeros((2, 3, 4), dtype=np.uint8)
    imgs[0, 0, 0] = 255
    imgs[0, 2, 3] = 51
    imgs[1, 1, 2] = 102
    labels = np.array([7, 2], dtype=np.uint8)
    ip, lp = tmp_path / "imgs", tmp_path / "lbls"
    write_idx_images(ip, imgs)
    write_idx_labels(lp, labels)
    return ip, lp, imgs, labels


class TestLoadIdx:
    def test_fixture_roundtrip(self, fixture_pair):
        ip, lp, imgs, labels = fixture_pair
        split = load_idx(ip, lp, name="fix", dtype=np.float64)
        assert split.images.shape == (2, 12)
        assert split.images[0, 0] == 1.0
        assert split.images[0, 11] == pytest.approx(51 / 255)
        assert split.images[1, 6] == pytest.approx(102 / 255)
        assert np.array_equal(split.labels, labels)
        assert split.name == "fix"

    def test_gzip_transparent(self, fixture_pair, tmp_path):
        ip, lp, _, labels = fixture_pair
        gz = tmp_path / "imgs.gz"
        gz.write_bytes(gzip.compress(ip.read_bytes()))
        split = load_idx(gz, lp)
        assert np.array_equal(split.labels, labels)

    def test_pixels_in_unit_interval(self, fixture_pair):
        ip, lp, _, _ = fixture_pair
        split = load_idx(ip, lp)
        assert split.images.min() >= 0.0 and split.images.max() <= 1.0

    def test_corrupt_magic_names_offset(self, fixture_pair, tmp_path):
        ip, lp, _, _ = fixture_pair
        raw = bytearray(ip.read_bytes())
        raw[0] = 0xAB
        bad = tmp_path / "bad"
        bad.write_bytes(raw)
        with pytest.raises(IdxFormatError) as e:
            load_idx(bad, lp)
        assert e.value.offset == 0

    def test_truncated_payload(self, fixture_pair, tmp_path):
        ip, lp, _, _ = fixture_pair
        bad = tmp_path / "trunc"
        bad.write_bytes(ip.read_bytes()[:-5])
        with pytest.raises(IdxFormatError):
            load_idx(bad, lp)

    def test_count_mismatch(self, fixture_pair, tmp_path):
        ip, lp, _, _ = fixture_pair
        lp3 = tmp_path / "three"
        write_idx_labels(lp3, np.array([1, 2, 3], dtype=np.uint8))
        with pytest.raises(ConfigError):
            load_idx(ip, lp3)

    def test_real_mnist_shapes(self, real_data_dir):
        train = load_dataset(real_data_dir / "mnist", "train")
        test = load_dataset(real_data_dir / "mnist", "test")
        assert len(train) == 60_000 and train.images.shape == (60_000, 784)
        assert len(test) == 10_000
        assert train.labels.min() == 0 and train.labels.max() == 9

    def test_real_fashion_mnist_shapes(self, real_data_dir):
        train = load_dataset(real_data_dir / "fashion-mnist", "train")
        assert len(train) == 60_000 and train.images.shape == (60_000, 784)


class TestBatches:
    @pytest.fixture
    def split(self, fixture_pair):
        ip, lp, _, _ = fixture_pair
        return load_idx(ip, lp)

    def test_every_index_once_per_epoch(self, synth_data_dir):
        split = load_dataset(synth_data_dir / "synthA", "train")
        seen = []
        for x, y in batches(split, 100, np.random.default_rng(0)):
            seen.append(x)
        total = sum(b.shape[0] for b in seen)
        assert total == len(split)
        stacked = np.vstack(seen)
        assert np.array_equal(np.sort(stacked[:, 0]), np.sort(split.images[:, 0]))

    def test_same_seed_same_order(self, synth_data_dir):
        split = load_dataset(synth_data_dir / "synthA", "train")
        a = [y for _, y in batches(split, 64, np.random.default_rng(5))]
        b = [y for _, y in batches(split, 64, np.random.default_rng(5))]
        for ya, yb in zip(a, b):
            assert np.array_equal(ya, yb)

    def test_full_batch(self, split):
        out = list(batches(split, len(split), np.random.default_rng(0)))
        assert len(out) == 1 and out[0][0].shape[0] == len(split)

    def test_short_final_batch_kept(self, synth_data_dir):
        split = load_dataset(synth_data_dir / "synthA", "test")
        out = list(batches(split, 500, np.random.default_rng(0)))
        assert out[-1][0].shape[0] == len(split) - 500 * (len(split) // 500)

    def test_bad_batch_size(self, split):
        with pytest.raises(ConfigError):
            list(batches(split, 0, np.random.default_rng(0)))


class TestTaskSchedule:
    def test_zero_epochs_rejected(self):
        with pytest.raises(ConfigError):
            TaskSpec("mnist", 0)

    def test_schedule_totals(self):
        s = TaskSchedule([TaskSpec("a", 5), TaskSpec("b", 7)], pretrain_epochs=2)
        assert s.total_epochs() == 12

    def test_dataset_alias(self):
        t = TaskSpec("fmnist", 3, dataset="fashion-mnist")
        assert t.data_name == "fashion-mnist"
        assert TaskSpec("mnist", 3).data_name == "mnist"


class TestFetch:
    def test_verify_existing(self, real_data_dir):
        paths = fetch_dataset("mnist", real_data_dir / "mnist", verify_only=True)
        assert len(paths) == 4

    def test_checksum_mismatch_detected(self, tmp_path):
        target = tmp_path / "mnist"
        target.mkdir()
        (target / "train-images-idx3-ubyte.gz").write_bytes(b"not the real thing")
        with pytest.raises(ConfigError):
            fetch_dataset("mnist", target, verify_only=True)

    def test_missing_in_verify_only(self, tmp_path):
        with pytest.raises(ConfigError):
            fetch_dataset("mnist", tmp_path / "empty", verify_only=True)

    def test_unknown_dataset(self, tmp_path):
        with pytest.raises(ConfigError):
            fetch_dataset("imagenet", tmp_path)
