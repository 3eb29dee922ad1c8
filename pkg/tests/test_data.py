import numpy as np
import pytest
from scipy.stats import ttest_ind

from promptgate.data import (
    EmbeddingFormatError,
    SyntheticStreamConfig,
    TaskStream,
    generate_stream,
    load_embeddings,
    read_embeddings,
    store_embeddings,
)


class TestGenerateStream:
    def test_disjoint_when_no_overlap(self):
        stream = generate_stream(SyntheticStreamConfig(
            tasks=2, overlap_fraction=0.0, seed=0))
        assert set(stream.tasks[0].classes) & set(stream.tasks[1].classes) == set()

    def test_full_overlap_reuses_generators(self):
        hits = 0
        for seed in range(5):
            cfg = SyntheticStreamConfig(tasks=2, dim=8, classes_per_task=2,
                                        overlap_fraction=1.0,
                                        samples_per_class_train=200, seed=seed)
            stream = generate_stream(cfg)
            assert set(stream.tasks[1].classes) <= set(stream.tasks[0].classes)
            # two-sample mean test per shared class: same generator -> p > 0.01
            ok = True
            for c in stream.tasks[1].classes:
                a = stream.tasks[0].train.features[stream.tasks[0].train.labels == c]
                b = stream.tasks[1].train.features[stream.tasks[1].train.labels == c]
                _, p = ttest_ind(a, b)
                ok &= bool(np.min(p) > 0.01)
            hits += ok
        assert hits >= 4

    def test_deterministic_in_seed(self):
        cfg = SyntheticStreamConfig(tasks=3, seed=17)
        a, b = generate_stream(cfg), generate_stream(cfg)
        for ta, tb in zip(a.tasks, b.tasks):
            assert ta.train.features.tobytes() == tb.train.features.tobytes()
            assert ta.test.labels.tobytes() == tb.test.labels.tobytes()
            assert ta.classes == tb.classes

    def test_sample_counts_match_config(self):
        cfg = SyntheticStreamConfig(tasks=3, classes_per_task=3,
                                    samples_per_class_train=17,
                                    samples_per_class_test=5, seed=1)
        stream = generate_stream(cfg)
        for task in stream.tasks:
            assert len(task.train) == 3 * 17
            assert len(task.test) == 3 * 5
            for c in task.classes:
                assert (task.train.labels == c).sum() == 17
                assert (task.test.labels == c).sum() == 5

    def test_mean_separation_controls_radius(self):
        cfg = SyntheticStreamConfig(tasks=1, classes_per_task=4, dim=16,
                                    mean_separation=6.0, noise_scale=0.5,
                                    samples_per_class_train=400, seed=2)
        stream = generate_stream(cfg)
        for c in stream.tasks[0].classes:
            mean = stream.tasks[0].train.features[
                stream.tasks[0].train.labels == c].mean(axis=0)
            assert np.linalg.norm(mean) == pytest.approx(3.0, rel=0.15)

    def test_train_test_disjoint(self):
        stream = generate_stream(SyntheticStreamConfig(tasks=1, seed=3))
        train = {row.tobytes() for row in stream.tasks[0].train.features}
        test = {row.tobytes() for row in stream.tasks[0].test.features}
        assert train & test == set()

    def test_partial_overlap_counts(self):
        cfg = SyntheticStreamConfig(tasks=4, classes_per_task=4,
                                    overlap_fraction=0.5, seed=5)
        stream = generate_stream(cfg)
        seen = set(stream.tasks[0].classes)
        for task in stream.tasks[1:]:
            assert len(set(task.classes) & seen) == 2
            seen |= set(task.classes)


class TestSubsample:
    def test_fraction_one_is_identity(self):
        stream = generate_stream(SyntheticStreamConfig(tasks=2, seed=0))
        assert stream.subsample(1.0, seed=0) is stream

    def test_fraction_shrinks_train_only(self):
        stream = generate_stream(SyntheticStreamConfig(
            tasks=2, samples_per_class_train=100, seed=0))
        half = stream.subsample(0.5, seed=0)
        for task, orig in zip(half.tasks, stream.tasks):
            assert len(task.train) == 100
            assert len(task.test) == len(orig.test)

    def test_invalid_fraction(self):
        stream = generate_stream(SyntheticStreamConfig(tasks=1, seed=0))
        for fraction in (0.0, -1.0, 1.5):
            with pytest.raises(ValueError, match="fraction"):
                stream.subsample(fraction, seed=0)


class TestEmbeddingFiles:
    def test_minimal_round_trip(self, tmp_path):
        path = tmp_path / "one.cleb"
        store_embeddings((np.array([[1.5, -2.5]], dtype=np.float32),
                          np.array([3]), None), path)
        stream = load_embeddings(path)
        assert len(stream.tasks) == 1 and stream.dim == 2
        total = len(stream.tasks[0].train) + len(stream.tasks[0].test)
        assert total == 1

    def test_byte_exact_round_trip(self, rng, tmp_path):
        path = tmp_path / "big.cleb"
        features = rng.standard_normal((1000, 7)).astype(np.float32)
        labels = rng.integers(0, 12, size=1000).astype(np.uint32)
        task_ids = rng.integers(0, 3, size=1000).astype(np.uint16)
        store_embeddings((features, labels, task_ids), path)
        rf, rl, rt = read_embeddings(path)
        assert rf.tobytes() == features.tobytes()
        assert rl.tobytes() == labels.tobytes()
        assert rt.tobytes() == task_ids.tobytes()

    def test_stream_round_trip_groups_by_task(self, rng, tmp_path):
        path = tmp_path / "stream.cleb"
        stream = generate_stream(SyntheticStreamConfig(tasks=3, seed=4))
        store_embeddings(stream, path)
        loaded = load_embeddings(path)
        assert len(loaded.tasks) == 3
        for orig, new in zip(stream.tasks, loaded.tasks):
            assert sorted(new.classes) == sorted(orig.classes)
            assert len(new.train) + len(new.test) == len(orig.train) + len(orig.test)

    def test_corrupted_magic(self, tmp_path):
        path = tmp_path / "bad.cleb"
        store_embeddings((np.zeros((1, 2), dtype=np.float32), np.array([0]), None),
                         path)
        raw = bytearray(path.read_bytes())
        raw[4] = ord("X")  # CLEB1 -> CLEBX
        path.write_bytes(bytes(raw))
        with pytest.raises(EmbeddingFormatError, match="not an embedding file"):
            load_embeddings(path)

    def test_truncated_payload_reports_sizes(self, tmp_path):
        path = tmp_path / "short.cleb"
        store_embeddings((np.zeros((4, 3), dtype=np.float32),
                          np.arange(4, dtype=np.uint32), None), path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-5])
        with pytest.raises(EmbeddingFormatError, match=r"expected \d+ bytes, got \d+"):
            load_embeddings(path)

    def test_empty_payload_rejected(self, tmp_path):
        import struct
        path = tmp_path / "empty.cleb"
        path.write_bytes(struct.pack("<5sIQB", b"CLEB1", 0, 0, 0))
        with pytest.raises(EmbeddingFormatError, match="empty payload"):
            load_embeddings(path)

    def test_refuses_mismatched_dimensions(self, tmp_path):
        with pytest.raises(ValueError, match="dimension mismatch"):
            store_embeddings((np.zeros((3, 2), dtype=np.float32),
                              np.zeros(2, dtype=np.uint32), None),
                             tmp_path / "x.cleb")

    def test_sidecar_manifest_grouping(self, rng, tmp_path):
        path = tmp_path / "flat.cleb"
        features = rng.standard_normal((40, 4)).astype(np.float32)
        labels = np.repeat([0, 1, 2, 3], 10).astype(np.uint32)
        store_embeddings((features, labels, None), path)
        (tmp_path / "flat.cleb.splits").write_text("[[0, 1], [2, 3]]")
        stream = load_embeddings(path)
        assert len(stream.tasks) == 2
        assert stream.tasks[0].classes == (0, 1)
        assert stream.tasks[1].classes == (2, 3)

    def test_missing_sidecar_single_task(self, rng, tmp_path):
        path = tmp_path / "flat2.cleb"
        store_embeddings((rng.standard_normal((10, 4)).astype(np.float32),
                          np.arange(10, dtype=np.uint32) % 2, None), path)
        stream = load_embeddings(path)
        assert len(stream.tasks) == 1
