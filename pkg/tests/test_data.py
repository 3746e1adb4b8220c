import gzip

import numpy as np
import pytest

from gcreg import data, nn, optim
from gcreg.data import Dataset, SyntheticSpec
from gcreg.errors import ConfigError, DimensionError, DomainError, FormatError
from gcreg.regularization import RegSchedule
from gcreg.tensor import Rng


def idx_bytes(magic, dims, payload):
    header = magic.to_bytes(4, "big") + b"".join(d.to_bytes(4, "big") for d in dims)
    return header + bytes(payload)


@pytest.fixture
def fixture_pair(tmp_path):
    images = tmp_path / "img.idx"
    labels = tmp_path / "lbl.idx"
    images.write_bytes(idx_bytes(0x803, (2, 2, 2), [0, 51, 102, 255, 255, 0, 204, 153]))
    labels.write_bytes(idx_bytes(0x801, (2,), [3, 1]))
    return images, labels


class TestDataset:
    def test_validation(self):
        with pytest.raises(DomainError):
            Dataset(np.zeros((2, 3)), [0, 5], 3)
        with pytest.raises(DimensionError):
            Dataset(np.zeros((2, 3)), [0, 1, 1], 3)
        with pytest.raises(DomainError):
            Dataset(np.array([[np.nan]]), [0], 2)
        with pytest.raises(DomainError):
            Dataset(np.zeros((0, 3)), [], 2)

    def test_dim_and_len(self):
        ds = Dataset(np.zeros((4, 7)), [0, 1, 0, 1], 2)
        assert (len(ds), ds.dim) == (4, 7)


class TestSynthetic:
    def test_same_seed_is_bitwise_identical(self):
        a = data.gen_synthetic(SyntheticSpec(per_class=20, test_per_class=5))
        b = data.gen_synthetic(SyntheticSpec(per_class=20, test_per_class=5))
        for x, y in zip(a, b):
            assert np.array_equal(x.features, y.features) and np.array_equal(x.labels, y.labels)

    def test_different_seeds_differ(self):
        a, _ = data.gen_synthetic(SyntheticSpec(per_class=5, seed=0))
        b, _ = data.gen_synthetic(SyntheticSpec(per_class=5, seed=1))
        assert not np.array_equal(a.features, b.features)

    def test_shapes_and_balance(self):
        train, test = data.gen_synthetic(SyntheticSpec(classes=4, per_class=30, test_per_class=7, dim=5))
        assert train.features.shape == (120, 5) and test.features.shape == (28, 5)
        assert np.bincount(train.labels).tolist() == [30] * 4
        assert train.split == "train" and test.split == "test"

    def test_noise_free_two_class_clusters_are_linearly_separable(self):
        train, test = data.gen_synthetic(SyntheticSpec(classes=2, per_class=50, test_per_class=50,
                                                       dim=8, noise=0.0))
        arch = nn.Architecture(8, (), 2, dropout=0.0)
        net = nn.init_params(arch, Rng(0))
        state = optim.OptimState.for_network(net)
        for _ in range(20):
            optim.run_epoch(net, train, state, optim.OptimizerConfig(), RegSchedule(), Rng(1), 16)
        assert nn.accuracy(net, test.features, test.labels) == 1.0

    def test_unit_variance_scaling(self):
        train, _ = data.gen_synthetic(SyntheticSpec(classes=10, per_class=2000, dim=16, noise=3.0))
        assert np.allclose(train.features.var(axis=0), 1.0, atol=0.35)

    def test_informative_dims(self):
        spec = SyntheticSpec(classes=3, per_class=4000, dim=6, noise=0.5, informative=2)
        train, _ = data.gen_synthetic(spec)
        means = np.array([train.features[train.labels == c].mean(axis=0) for c in range(3)])
        assert np.all(np.abs(means[:, 2:]) < 0.05)
        assert np.ptp(means[:, :2], axis=0).max() > 0.3

    def test_spirals(self):
        train, _ = data.gen_synthetic(SyntheticSpec(kind="two_spirals", classes=3, per_class=10, dim=4))
        assert train.features.shape == (30, 4)
        assert np.all(train.features[:, 2:] != 0)

    @pytest.mark.parametrize("field,value,key", [
        ("kind", "moons", "data.kind"), ("classes", 1, "data.classes"),
        ("per_class", 0, "data.per_class"), ("noise", -1.0, "data.noise"),
        ("dim", 0, "data.dim"), ("informative", 99, "data.informative"),
    ])
    def test_invalid_spec_names_key(self, field, value, key):
        with pytest.raises(ConfigError) as err:
            data.gen_synthetic(SyntheticSpec(**{field: value}))
        assert err.value.key == key


class TestIdx:
    def test_handcrafted_fixture(self, fixture_pair):
        ds = data.load_idx(*fixture_pair, classes=4)
        expected = np.array([[0, 51, 102, 255], [255, 0, 204, 153]]) / 255.0
        np.testing.assert_array_equal(ds.features, expected)
        assert ds.features[0, 3] == 1.0
        assert ds.labels.tolist() == [3, 1]

    def test_classes_inferred(self, fixture_pair):
        assert data.load_idx(*fixture_pair).classes == 4

    def test_gzip(self, tmp_path, fixture_pair):
        gz = []
        for p in fixture_pair:
            target = tmp_path / (p.name + ".gz")
            target.write_bytes(gzip.compress(p.read_bytes()))
            gz.append(target)
        a = data.load_idx(*gz)
        b = data.load_idx(*fixture_pair)
        assert np.array_equal(a.features, b.features)

    def test_writer_round_trip(self, tmp_path):
        imgs = np.arange(2 * 3 * 4, dtype=np.uint8).reshape(2, 3, 4)
        data.write_idx(tmp_path / "i.idx.gz", imgs)
        data.write_idx(tmp_path / "l.idx.gz", np.array([0, 1], dtype=np.uint8))
        ds = data.load_idx(tmp_path / "i.idx.gz", tmp_path / "l.idx.gz")
        np.testing.assert_array_equal(ds.features * 255, imgs.reshape(2, 12))

    def test_count_mismatch_names_both_counts(self, tmp_path):
        (tmp_path / "i").write_bytes(idx_bytes(0x803, (3, 1, 1), [1, 2, 3]))
        (tmp_path / "l").write_bytes(idx_bytes(0x801, (2,), [0, 1]))
        with pytest.raises(FormatError) as err:
            data.load_idx(tmp_path / "i", tmp_path / "l")
        assert "3" in str(err.value) and "2" in str(err.value)
        assert err.value.offset is not None

    def test_bad_magic(self, tmp_path, fixture_pair):
        bad = tmp_path / "bad"
        bad.write_bytes(idx_bytes(0x801, (2, 2, 2), [0] * 8))
        with pytest.raises(FormatError) as err:
            data.load_idx(bad, fixture_pair[1])
        assert err.value.offset == 0

    @pytest.mark.parametrize("cut", [2, 9, 20])
    def test_truncated(self, tmp_path, fixture_pair, cut):
        raw = fixture_pair[0].read_bytes()[:cut]
        short = tmp_path / "short"
        short.write_bytes(raw)
        with pytest.raises(FormatError) as err:
            data.load_idx(short, fixture_pair[1])
        assert "byte offset" in str(err.value)


class TestBatches:
    def ds(self, n):
        return Dataset(np.arange(n, dtype=float)[:, None], np.zeros(n, dtype=int), 1)

    def test_sizes(self):
        assert [len(y) for _, y in data.batches(self.ds(5), 2, 0)] == [2, 2, 1]

    def test_same_seed_same_order(self):
        a = [x[:, 0].tolist() for x, _ in data.batches(self.ds(20), 3, 4)]
        b = [x[:, 0].tolist() for x, _ in data.batches(self.ds(20), 3, Rng(4))]
        assert a == b

    def test_partition(self):
        seen = np.concatenate([x[:, 0] for x, _ in data.batches(self.ds(37), 8, 9)])
        assert sorted(seen.tolist()) == list(range(37))

    def test_bad_batch_size(self):
        with pytest.raises(DomainError):
            data.batches(self.ds(3), 0, 0)
