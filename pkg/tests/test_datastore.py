import tracemalloc

import numpy as np
import pytest

from icochem import augment, datastore
from icochem.datastore import NormalizationMode
from icochem.errors import (DatastoreError, FileFormatError, LabelMismatch,
                            MixedLevels, StatsMismatch)


def fake_records(n, level=1, rng=None, mol_per=60, values=None):
    """Synthetic NetRecords without running the projector."""
    faces = 20 * 4 ** level
    rng = rng or np.random.default_rng(0)
    records = []
    for i in range(n):
        if values is not None:
            data = values[i]
        else:
            data = np.abs(rng.normal(size=(faces, 3))).astype("<f4")
        records.append(augment.NetRecord(
            mol_id=f"mol{i // mol_per:03d}", conformer_idx=0,
            unfolding_idx=i % 60, jitter_applied=np.zeros(3),
            offset_applied=np.zeros(3), map=data.astype("<f4"), level=level))
    return records


@pytest.fixture(params=["hdf5", "flat"])
def fmt(request):
    return request.param


class TestContainer:
    def test_shapes_and_metadata(self, tmp_path, fmt):
        records = fake_records(120)
        labels = {"mol000": {"sol": -1.0}, "mol001": {"sol": 2.0}}
        path = tmp_path / "ds.bin"
        header = datastore.write_dataset(records, path, labels=labels,
                                         fmt=fmt)
        assert header.n_nets == 120
        assert header.n_molecules == 2
        with datastore.DatasetReader(path) as reader:
            assert reader.read(0, 120).shape == (120, 80, 3)
            assert reader.header.label_names == ["sol"]
            assert reader.mol_ids()[0] == "mol000"
            assert reader.labels()["sol"][0] == -1.0
            assert reader.labels()["sol"][-1] == 2.0
            assert (reader.int_column("unfolding_idx")[:3] == [0, 1, 2]).all()

    def test_roundtrip_bit_identical(self, tmp_path, fmt):
        records = fake_records(30)
        path = tmp_path / "ds.bin"
        datastore.write_dataset(records, path, fmt=fmt)
        with datastore.DatasetReader(path) as reader:
            stored = reader.read(0, 30)
        original = np.stack([r.map for r in records])
        assert stored.tobytes() == original.tobytes()

    def test_empty_stream_writes_nothing(self, tmp_path, fmt):
        path = tmp_path / "empty.bin"
        with pytest.raises(DatastoreError):
            datastore.write_dataset(iter(()), path, fmt=fmt)
        assert not path.exists()

    def test_mixed_levels_rejected(self, tmp_path):
        records = fake_records(5) + fake_records(5, level=2)
        with pytest.raises(MixedLevels):
            datastore.write_dataset(records, tmp_path / "x.h5")

    def test_missing_label_rejected(self, tmp_path):
        records = fake_records(120)
        with pytest.raises(LabelMismatch):
            datastore.write_dataset(records, tmp_path / "x.h5",
                                    labels={"mol000": {"sol": 1.0}})

    def test_inconsistent_label_columns(self, tmp_path):
        records = fake_records(60)
        with pytest.raises(LabelMismatch):
            datastore.write_dataset(
                records, tmp_path / "x.h5",
                labels={"mol000": {"a": 1.0}, "mol001": {"b": 2.0}})

    def test_batches_cover_everything(self, tmp_path, fmt):
        records = fake_records(100)
        path = tmp_path / "ds.bin"
        datastore.write_dataset(records, path, fmt=fmt)
        with datastore.DatasetReader(path) as reader:
            joined = np.concatenate(
                [batch for _, batch in reader.iter_batches(7)])
        assert joined.tobytes() == np.stack([r.map for r in records]).tobytes()

    def test_unknown_file_rejected(self, tmp_path):
        path = tmp_path / "garbage.bin"
        path.write_bytes(b"\x1f\x8b definitely not a dataset")
        with pytest.raises(FileFormatError):
            datastore.DatasetReader(path)


def load_all(path):
    with datastore.DatasetReader(path) as reader:
        return reader.read(0, reader.n_nets).astype(np.float64)


class TestPasses:
    def test_mean_max_toy_example(self, tmp_path):
        values = [np.zeros((80, 3)), np.full((80, 3), 2.0)]
        path = tmp_path / "toy.h5"
        datastore.write_dataset(fake_records(2, values=values), path)
        with datastore.DatasetReader(path) as reader:
            t, u = datastore.pass1_mean_max(reader)
        assert (t == 1.0).all()
        assert (u == 2.0).all()

    def test_max_floor_on_empty_dataset(self, tmp_path):
        values = [np.zeros((80, 3))] * 4
        path = tmp_path / "zeros.h5"
        datastore.write_dataset(fake_records(4, values=values), path)
        with datastore.DatasetReader(path) as reader:
            _, u = datastore.pass1_mean_max(reader)
        assert (u == 0.1).all()

    def test_streaming_matches_inmemory_oracle(self, tmp_path):
        rng = np.random.default_rng(4)
        records = fake_records(1000, rng=rng)
        path = tmp_path / "big.h5"
        datastore.write_dataset(records, path)
        data = np.stack([r.map for r in records]).astype(np.float64)

        with datastore.DatasetReader(path) as reader:
            for batch_size in (1, 7, 64):
                t, u = datastore.pass1_mean_max(reader, batch_size)
                sigma = datastore.pass2_norms_and_std(reader, t, u, batch_size)
                assert np.abs(t - data.mean(axis=0)).max() \
                    < 1e-6 * np.abs(data.mean(axis=0)).max()
                assert np.array_equal(
                    u, np.maximum(0.1, data.max(axis=0)))
                ref_sigma = data.std(axis=0)  # population convention
                assert np.abs(sigma - ref_sigma).max() < 1e-6 * ref_sigma.max()

    def test_batch_size_independence(self, tmp_path):
        records = fake_records(333, rng=np.random.default_rng(5))
        path = tmp_path / "b.h5"
        datastore.write_dataset(records, path)
        results = []
        with datastore.DatasetReader(path) as reader:
            for batch_size in (1, 7, 64):
                t, u = datastore.pass1_mean_max(reader, batch_size)
                sigma = datastore.pass2_norms_and_std(reader, t, u, batch_size)
                results.append((t, u, sigma))
        for t, u, sigma in results[1:]:
            assert np.abs(t - results[0][0]).max() < 1e-9
            assert np.array_equal(u, results[0][1])
            assert np.abs(sigma - results[0][2]).max() < 1e-9

    def test_pass2_formula_values(self, tmp_path):
        rng = np.random.default_rng(6)
        records = fake_records(50, rng=rng)
        path = tmp_path / "p2.h5"
        datastore.write_dataset(records, path)
        data = np.stack([r.map for r in records]).astype(np.float64)
        with datastore.DatasetReader(path) as reader:
            t, u = datastore.pass1_mean_max(reader)
            datastore.pass2_norms_and_std(reader, t, u,
                                          mean_out=tmp_path / "m.h5",
                                          l2_out=tmp_path / "l.h5")
        mean_norm = load_all(tmp_path / "m.h5")
        l2_norm = load_all(tmp_path / "l.h5")
        assert np.abs(mean_norm - (data - t)).max() < 1e-6
        assert np.abs(l2_norm - (2 * data / u - 1)).max() < 1e-6
        # train L2 output bounded by construction
        assert l2_norm.min() >= -1.0 - 1e-6
        assert l2_norm.max() <= 1.0 + 1e-6
        # mean-normalized train mean vanishes
        assert np.abs(mean_norm.mean(axis=0)).max() < 1e-6

    def test_l2_endpoint_values(self, tmp_path):
        # a pixel at its max maps to +1, an empty pixel maps to -1
        values = [np.full((80, 3), 0.0), np.full((80, 3), 3.0)]
        path = tmp_path / "ends.h5"
        datastore.write_dataset(fake_records(2, values=values), path)
        with datastore.DatasetReader(path) as reader:
            t, u = datastore.pass1_mean_max(reader)
            datastore.pass2_norms_and_std(reader, t, u,
                                          l2_out=tmp_path / "l.h5",
                                          mean_out=tmp_path / "m.h5")
        l2 = load_all(tmp_path / "l.h5")
        mean_norm = load_all(tmp_path / "m.h5")
        assert np.abs(l2[1] - 1.0).max() < 1e-6
        assert np.abs(l2[0] + 1.0).max() < 1e-6
        assert np.abs(mean_norm[0] + t).max() < 1e-6  # x = 0 gives -t

    def test_standardize(self, tmp_path):
        rng = np.random.default_rng(7)
        records = fake_records(400, rng=rng)
        # pin one pixel constant across the dataset
        for r in records:
            r.map[3, 1] = 5.0
        path = tmp_path / "s.h5"
        datastore.write_dataset(records, path)
        with datastore.DatasetReader(path) as reader:
            t, u = datastore.pass1_mean_max(reader)
            sigma = datastore.pass2_norms_and_std(reader, t, u)
            datastore.pass3_standardize(reader, t, sigma, tmp_path / "z.h5")
        z = load_all(tmp_path / "z.h5")
        assert np.abs(z[:, 3, 1]).max() == 0.0  # constant pixel pinned to 0
        live = sigma > datastore.SIGMA_EPSILON
        assert np.abs(z.std(axis=0)[live] - 1.0).max() < 1e-6
        assert np.abs(z.mean(axis=0)[live]).max() < 1e-6

    def test_two_net_standardization(self, tmp_path):
        values = [np.zeros((80, 3)), np.full((80, 3), 2.0)]
        path = tmp_path / "two.h5"
        datastore.write_dataset(fake_records(2, values=values), path)
        with datastore.DatasetReader(path) as reader:
            t, u = datastore.pass1_mean_max(reader)
            sigma = datastore.pass2_norms_and_std(reader, t, u)
            datastore.pass3_standardize(reader, t, sigma, tmp_path / "z.h5")
        z = load_all(tmp_path / "z.h5")
        assert np.abs(z[0] + 1.0).max() < 1e-6
        assert np.abs(z[1] - 1.0).max() < 1e-6

    def test_passes_work_on_flat_containers(self, tmp_path):
        rng = np.random.default_rng(13)
        records = fake_records(120, rng=rng)
        path = tmp_path / "flat.icd"
        datastore.write_dataset(records, path, fmt="flat")
        data = np.stack([r.map for r in records]).astype(np.float64)
        with datastore.DatasetReader(path) as reader:
            assert reader.format == "flat"
            t, u = datastore.pass1_mean_max(reader)
            sigma = datastore.pass2_norms_and_std(reader, t, u,
                                                  l2_out=tmp_path / "l.icd")
            datastore.pass3_standardize(reader, t, sigma, tmp_path / "z.icd")
        with datastore.DatasetReader(tmp_path / "l.icd") as reader:
            assert reader.format == "flat"  # output inherits the format
            l2 = reader.read(0, reader.n_nets).astype(np.float64)
        assert np.abs(l2 - (2 * data / u - 1)).max() < 1e-6
        with datastore.DatasetReader(tmp_path / "z.icd") as reader:
            z = reader.read(0, reader.n_nets).astype(np.float64)
        live = sigma > datastore.SIGMA_EPSILON
        assert np.abs(z.std(axis=0)[live] - 1.0).max() < 1e-6

    def test_shape_guard(self, tmp_path):
        records = fake_records(10)
        path = tmp_path / "g.h5"
        datastore.write_dataset(records, path)
        with datastore.DatasetReader(path) as reader:
            with pytest.raises(StatsMismatch):
                datastore.pass2_norms_and_std(reader, np.zeros((20, 3)),
                                              np.ones((20, 3)))


class TestTrainStats:
    def make_train_test(self, tmp_path, seed=8):
        rng = np.random.default_rng(seed)
        train = fake_records(200, rng=rng)
        test = fake_records(80, rng=rng)
        train_path, test_path = tmp_path / "train.h5", tmp_path / "test.h5"
        datastore.write_dataset(train, train_path)
        datastore.write_dataset(test, test_path)
        with datastore.DatasetReader(train_path) as reader:
            stats = datastore.compute_stats(reader)
        return train_path, test_path, stats

    def test_train_applied_to_itself_matches_passes(self, tmp_path):
        train_path, _, stats = self.make_train_test(tmp_path)
        with datastore.DatasetReader(train_path) as reader:
            datastore.apply_train_stats(reader, stats, NormalizationMode.MEAN,
                                        tmp_path / "a.h5")
            datastore.pass2_norms_and_std(reader, stats.mean, stats.max,
                                          mean_out=tmp_path / "b.h5")
        assert load_all(tmp_path / "a.h5").tobytes() == \
            load_all(tmp_path / "b.h5").tobytes()

    def test_disjoint_test_set_oracle(self, tmp_path):
        _, test_path, stats = self.make_train_test(tmp_path)
        with datastore.DatasetReader(test_path) as reader:
            for mode, expect in (
                (NormalizationMode.MEAN, lambda d: d - stats.mean),
                (NormalizationMode.L2, lambda d: 2 * d / stats.max - 1),
                (NormalizationMode.STANDARDIZE,
                 lambda d: np.where(stats.std > datastore.SIGMA_EPSILON,
                                    (d - stats.mean)
                                    / np.where(stats.std > 0, stats.std, 1),
                                    0.0)),
            ):
                out = tmp_path / f"{mode.value}.h5"
                datastore.apply_train_stats(reader, stats, mode, out)
                data = load_all(test_path)
                assert np.abs(load_all(out) - expect(data)).max() < 1e-6

    def test_test_values_beyond_train_max_allowed(self, tmp_path):
        values = [np.full((80, 3), 1.0)]
        train_path = tmp_path / "t.h5"
        datastore.write_dataset(fake_records(1, values=values), train_path)
        with datastore.DatasetReader(train_path) as reader:
            stats = datastore.compute_stats(reader)
        big = [np.full((80, 3), 4.0)]
        test_path = tmp_path / "x.h5"
        datastore.write_dataset(fake_records(1, values=big), test_path)
        with datastore.DatasetReader(test_path) as reader:
            datastore.apply_train_stats(reader, stats, NormalizationMode.L2,
                                        tmp_path / "o.h5")
        assert (load_all(tmp_path / "o.h5") > 1.0).all()

    def test_sidecar_roundtrip(self, tmp_path):
        _, _, stats = self.make_train_test(tmp_path)
        sidecar = tmp_path / "train.stats.h5"
        datastore.save_stats(stats, sidecar)
        again = datastore.load_stats(sidecar)
        assert np.array_equal(again.mean, stats.mean)
        assert np.array_equal(again.max, stats.max)
        assert np.array_equal(again.std, stats.std)
        assert again.batch_size == stats.batch_size

    def test_std_required_for_frozen_standardize(self, tmp_path):
        train_path, test_path, stats = self.make_train_test(tmp_path)
        stats.std = None
        with datastore.DatasetReader(test_path) as reader:
            with pytest.raises(StatsMismatch):
                datastore.apply_train_stats(
                    reader, stats, NormalizationMode.STANDARDIZE,
                    tmp_path / "no.h5")


class TestMemoryBudget:
    def test_passes_stay_sublinear_in_dataset_size(self, tmp_path):
        level, n = 2, 4000
        rng = np.random.default_rng(12)
        path = tmp_path / "mem.h5"
        datastore.write_dataset(fake_records(n, level=level, rng=rng), path)
        file_bytes = path.stat().st_size
        assert file_bytes > 12_000_000

        with datastore.DatasetReader(path) as reader:
            tracemalloc.start()
            t, u = datastore.pass1_mean_max(reader, batch_size=64)
            datastore.pass2_norms_and_std(reader, t, u, batch_size=64)
            _, peak = tracemalloc.get_traced_memory()
            tracemalloc.stop()
        assert peak < file_bytes / 3, (peak, file_bytes)


class TestUtilities:
    def test_minmax_scale(self):
        scaled, lo, hi = datastore.minmax_scale(np.array([2.0, 4.0, 6.0]))
        assert np.array_equal(scaled, [0.0, 0.5, 1.0])
        assert (lo, hi) == (2.0, 6.0)
        flat, *_ = datastore.minmax_scale(np.array([3.0, 3.0]))
        assert np.array_equal(flat, [0.0, 0.0])

    def test_seeded_split_partitions_molecules(self):
        ids = [f"m{i}" for i in range(100)] * 3
        split = datastore.seeded_split(ids, (0.8, 0.1, 0.1), seed=3)
        joined = split["train"] + split["val"] + split["test"]
        assert sorted(joined) == sorted(set(ids))
        assert len(split["train"]) == 80
        again = datastore.seeded_split(ids, (0.8, 0.1, 0.1), seed=3)
        assert again == split
        assert datastore.seeded_split(ids, (0.8, 0.1, 0.1), seed=4) != split
