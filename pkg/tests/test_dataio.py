"""Synthetic data generation and file round trips."""

import json

import numpy as np
import pytest

from idc.data import (
    Dataset,
    SampleRecord,
    SyntheticShiftSpec,
    default_benchmark_spec,
    generate,
    load_embeddings,
    load_model,
    save_embeddings,
    save_model,
)
from idc.errors import (
    CorruptFile,
    DuplicateId,
    FormatError,
    InvalidSpec,
    LabelOutOfRange,
    MissingEvalLabels,
    VersionMismatch,
)
from idc.inference import predict
from idc.training import TrainConfig, train


def small_spec(**overrides):
    base = dict(
        n_classes=4, input_dim=6, n_source_per_class=60,
        n_target_per_class=60, radius=3.0, sigma=1.0,
        rotation=np.radians(30.0), scale=1.2, translation=(),
        overlap=0.1, seed=0,
    )
    base.update(overrides)
    return SyntheticShiftSpec(**base)


class TestDataset:
    def _records(self):
        return [
            SampleRecord("s0", "source", 0, np.array([1.0, 0.0])),
            SampleRecord("s1", "source", 1, np.array([0.0, 1.0])),
            SampleRecord("t0", "target", -1, np.array([1.0, 1.0])),
        ]

    def test_partitions_by_domain(self):
        ds = Dataset(self._records(), 2, eval_labels={"t0": 1})
        assert [r.id for r in ds.source_records] == ["s0", "s1"]
        assert [r.id for r in ds.target_records] == ["t0"]
        assert ds.feature_dim == 2
        np.testing.assert_array_equal(ds.source_labels(), [0, 1])
        np.testing.assert_array_equal(ds.target_eval_labels(), [1])

    def test_duplicate_ids_rejected(self):
        records = self._records()
        records.append(SampleRecord("s0", "source", 1, np.array([2.0, 2.0])))
        with pytest.raises(DuplicateId):
            Dataset(records, 2)

    def test_source_label_out_of_range_rejected(self):
        records = [SampleRecord("s0", "source", 5, np.array([1.0, 0.0]))]
        with pytest.raises(LabelOutOfRange):
            Dataset(records, 2)

    def test_eval_labels_must_reference_targets(self):
        with pytest.raises(ValueError):
            Dataset(self._records(), 2, eval_labels={"s0": 1})

    def test_eval_label_values_validated(self):
        with pytest.raises(LabelOutOfRange):
            Dataset(self._records(), 2, eval_labels={"t0": 9})

    def test_missing_eval_labels_raise_on_access(self):
        ds = Dataset(self._records(), 2)
        assert not ds.has_eval_labels
        with pytest.raises(MissingEvalLabels):
            ds.target_eval_labels()

    def test_subset_sources_keeps_targets(self):
        ds = Dataset(self._records(), 2, eval_labels={"t0": 1})
        sub = ds.subset_sources({"s1"})
        assert [r.id for r in sub.source_records] == ["s1"]
        assert [r.id for r in sub.target_records] == ["t0"]
        assert sub.eval_label("t0") == 1


class TestSyntheticGeneration:
    def test_same_spec_bitwise_identical(self):
        a = generate(small_spec())
        b = generate(small_spec())
        assert [r.id for r in a.records] == [r.id for r in b.records]
        for ra, rb in zip(a.records, b.records):
            np.testing.assert_array_equal(ra.feature, rb.feature)
            assert ra.label == rb.label

    def test_different_seed_differs(self):
        a = generate(small_spec(seed=0))
        b = generate(small_spec(seed=1))
        assert not np.array_equal(a.records[0].feature, b.records[0].feature)

    def test_counts_and_ids(self):
        spec = small_spec()
        ds = generate(spec)
        assert len(ds.source_records) == 4 * 60
        assert len(ds.target_records) == 4 * 60
        assert ds.source_records[0].id == "src-c00-00000"
        assert ds.target_records[0].id == "tgt-00000"
        assert ds.n_classes == 4

    def test_source_class_means_recovered(self):
        # With zero overlap the per-class sample mean must approach the
        # configured circle layout within 3 sigma / sqrt(n).
        spec = small_spec(overlap=0.0, n_source_per_class=400, sigma=0.5)
        ds = generate(spec)
        tol = 3 * spec.sigma / np.sqrt(400)
        for c in range(spec.n_classes):
            angle = 2 * np.pi * c / spec.n_classes
            expected = np.zeros(spec.input_dim)
            expected[0] = spec.radius * np.cos(angle)
            expected[1] = spec.radius * np.sin(angle)
            rows = ds.source_features()[ds.source_labels() == c]
            np.testing.assert_allclose(rows.mean(axis=0), expected,
                                       atol=4 * tol)

    def test_identity_transform_keeps_domains_aligned(self):
        spec = small_spec(rotation=0.0, scale=1.0, translation=(),
                          overlap=0.0, sigma=0.4)
        ds = generate(spec)
        src_mean = ds.source_features().mean(axis=0)
        tgt_mean = ds.target_features().mean(axis=0)
        np.testing.assert_allclose(src_mean, tgt_mean, atol=0.3)

    def test_rotation_moves_per_class_target_means(self):
        # class means sit on a circle, so a 90 degree rotation moves each
        # class mean by radius*sqrt(2) while the overall mean stays put
        spec = small_spec(rotation=np.radians(90.0), scale=1.0,
                          overlap=0.0, sigma=0.2)
        ds = generate(spec)
        labels = ds.target_eval_labels()
        src_c0 = ds.source_features()[ds.source_labels() == 0].mean(axis=0)
        tgt_c0 = ds.target_features()[labels == 0].mean(axis=0)
        assert np.linalg.norm(src_c0 - tgt_c0) > spec.radius

    def test_translation_shifts_targets(self):
        shift = np.zeros(6)
        shift[2] = 5.0
        spec = small_spec(rotation=0.0, scale=1.0, translation=tuple(shift),
                          overlap=0.0)
        ds = generate(spec)
        tgt_mean = ds.target_features().mean(axis=0)
        assert tgt_mean[2] == pytest.approx(5.0, abs=0.3)

    def test_target_labels_hidden_but_evaluable(self):
        ds = generate(small_spec())
        assert all(r.label == -1 for r in ds.target_records)
        assert ds.has_eval_labels
        labels = ds.target_eval_labels()
        assert set(np.unique(labels)) <= set(range(4))

    def test_overlap_swaps_fraction_of_features(self):
        calm = generate(small_spec(overlap=0.0, sigma=0.3))
        noisy = generate(small_spec(overlap=0.5, sigma=0.3))
        # overlapped samples sit near another class's mean, so the mean
        # within-class spread grows substantially
        def spread(ds):
            feats, labels = ds.source_features(), ds.source_labels()
            return np.mean([
                np.linalg.norm(feats[labels == c]
                               - feats[labels == c].mean(axis=0), axis=1).mean()
                for c in range(4)
            ])

        assert spread(noisy) > spread(calm) * 1.5

    def test_default_benchmark_spec_shape(self):
        spec = default_benchmark_spec(seed=7)
        assert spec.n_classes == 8
        assert spec.input_dim == 16
        assert spec.seed == 7
        spec.validate()

    def test_default_benchmark_mixes_wide_and_tight_arcs(self):
        angles = np.degrees(default_benchmark_spec().class_angles())
        gaps = np.diff(np.concatenate([angles, [angles[0] + 360.0]]))
        assert np.all(gaps > 0)
        assert np.sum(gaps > 60.0) >= 4
        assert np.sum(gaps < 10.0) >= 3

    def test_custom_mean_angles_place_means(self):
        spec = small_spec(
            mean_angles_deg=(0.0, 90.0, 180.0, 270.0),
            sigma=1e-6, overlap=0.0,
        )
        ds = generate(spec)
        feats = ds.source_features()
        labels = ds.source_labels()
        expected = {
            0: (3.0, 0.0), 1: (0.0, 3.0), 2: (-3.0, 0.0), 3: (0.0, -3.0),
        }
        for c, (x, y) in expected.items():
            mean = feats[labels == c].mean(axis=0)
            assert mean[0] == pytest.approx(x, abs=1e-3)
            assert mean[1] == pytest.approx(y, abs=1e-3)

    def test_equal_spacing_is_the_angle_default(self):
        angles = small_spec().class_angles()
        np.testing.assert_allclose(
            angles, [0.0, np.pi / 2, np.pi, 3 * np.pi / 2], atol=1e-12
        )

    @pytest.mark.parametrize(
        "angles", [(0.0, 10.0), (0.0, 10.0, 20.0, 30.0, 40.0), (0.0, np.inf, 1.0, 2.0)]
    )
    def test_bad_mean_angles_rejected(self, angles):
        with pytest.raises(InvalidSpec):
            small_spec(mean_angles_deg=angles).validate()

    @pytest.mark.parametrize(
        "overrides",
        [
            {"n_classes": 1},
            {"input_dim": 1},
            {"n_source_per_class": 0},
            {"sigma": 0.0},
            {"overlap": 1.5},
            {"scale": 0.0},
            {"translation": (1.0, 2.0)},
        ],
    )
    def test_invalid_specs_rejected(self, overrides):
        with pytest.raises(InvalidSpec):
            small_spec(**overrides).validate()


class TestEmbeddingsRoundTrip:
    def test_round_trip_preserves_everything(self, tmp_path):
        ds = generate(small_spec())
        path = tmp_path / "embeddings.csv"
        save_embeddings(ds, path)
        loaded = load_embeddings(path)
        assert loaded.n_classes == ds.n_classes
        assert [r.id for r in loaded.records] == [r.id for r in ds.records]
        for ra, rb in zip(ds.records, loaded.records):
            assert ra.domain == rb.domain
            assert ra.label == rb.label
            np.testing.assert_array_equal(ra.feature, rb.feature)
        np.testing.assert_array_equal(loaded.target_eval_labels(),
                                      ds.target_eval_labels())

    def test_header_declares_shape(self, tmp_path):
        ds = generate(small_spec())
        path = tmp_path / "embeddings.csv"
        save_embeddings(ds, path)
        first = path.read_text().splitlines()[0]
        assert first == "idc-embeddings,v1,C=4,D=6"

    def test_rewrite_is_byte_identical(self, tmp_path):
        ds = generate(small_spec())
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        save_embeddings(ds, p1)
        save_embeddings(load_embeddings(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestEmbeddingsParsing:
    HEADER = "idc-embeddings,v1,C=5,D=2"
    COLUMNS = "id,domain,label,f0,f1"

    def _write(self, tmp_path, lines):
        path = tmp_path / "data.csv"
        path.write_text("\n".join(lines) + "\n")
        return path

    def test_minimal_file_parses(self, tmp_path):
        path = self._write(tmp_path, [
            self.HEADER, self.COLUMNS,
            "s0,source,0,1.5,-2.0",
            "t0,target,-1,0.5,0.5",
        ])
        ds = load_embeddings(path)
        assert ds.n_classes == 5
        assert ds.record("s0").label == 0
        assert not ds.has_eval_labels

    def test_target_label_column_feeds_eval_labels(self, tmp_path):
        path = self._write(tmp_path, [
            self.HEADER, self.COLUMNS,
            "s0,source,0,1.5,-2.0",
            "t0,target,3,0.5,0.5",
        ])
        ds = load_embeddings(path)
        assert ds.record("t0").label == -1
        assert ds.eval_label("t0") == 3

    def test_bad_magic_reports_line_one(self, tmp_path):
        path = self._write(tmp_path, ["nonsense,v1,C=5,D=2", self.COLUMNS])
        with pytest.raises(FormatError) as err:
            load_embeddings(path)
        assert err.value.line_number == 1

    def test_unsupported_version_raises(self, tmp_path):
        path = self._write(tmp_path, ["idc-embeddings,v9,C=5,D=2",
                                      self.COLUMNS])
        with pytest.raises(VersionMismatch):
            load_embeddings(path)

    def test_column_header_mismatch_reports_line_two(self, tmp_path):
        path = self._write(tmp_path, [self.HEADER, "id,domain,label,f0"])
        with pytest.raises(FormatError) as err:
            load_embeddings(path)
        assert err.value.line_number == 2

    def test_field_count_error_reports_data_line(self, tmp_path):
        path = self._write(tmp_path, [
            self.HEADER, self.COLUMNS,
            "s0,source,0,1.5,-2.0",
            "s1,source,0,1.5",
        ])
        with pytest.raises(FormatError) as err:
            load_embeddings(path)
        assert err.value.line_number == 4
        assert "line 4" in str(err.value)

    def test_source_label_out_of_range(self, tmp_path):
        path = self._write(tmp_path, [
            self.HEADER, self.COLUMNS,
            "s0,source,7,1.5,-2.0",
        ])
        with pytest.raises(LabelOutOfRange) as err:
            load_embeddings(path)
        assert "7" in str(err.value)

    def test_duplicate_id_rejected(self, tmp_path):
        path = self._write(tmp_path, [
            self.HEADER, self.COLUMNS,
            "s0,source,0,1.5,-2.0",
            "s0,source,1,2.5,0.0",
        ])
        with pytest.raises(DuplicateId):
            load_embeddings(path)

    def test_non_numeric_feature_rejected(self, tmp_path):
        path = self._write(tmp_path, [
            self.HEADER, self.COLUMNS,
            "s0,source,0,abc,-2.0",
        ])
        with pytest.raises(FormatError) as err:
            load_embeddings(path)
        assert err.value.line_number == 3

    def test_unknown_domain_rejected(self, tmp_path):
        path = self._write(tmp_path, [
            self.HEADER, self.COLUMNS,
            "s0,middle,0,1.5,-2.0",
        ])
        with pytest.raises(FormatError):
            load_embeddings(path)

    def test_blank_lines_skipped(self, tmp_path):
        path = self._write(tmp_path, [
            self.HEADER, self.COLUMNS,
            "s0,source,0,1.5,-2.0",
            "",
            "t0,target,-1,0.5,0.5",
        ])
        ds = load_embeddings(path)
        assert len(ds.records) == 2

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(FormatError):
            load_embeddings(path)


@pytest.fixture(scope="module")
def trained():
    spec = small_spec(n_source_per_class=40, n_target_per_class=40)
    dataset = generate(spec)
    config = TrainConfig(batch_size=16, max_iterations=60,
                         bank_capacity=48, seed=0)
    return train(config, dataset), dataset


class TestModelRoundTrip:
    def test_predictions_survive_round_trip(self, trained, tmp_path):
        model, dataset = trained
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        for record in dataset.target_records[:100]:
            a = predict(model, record.feature)
            b = predict(loaded, record.feature)
            np.testing.assert_array_equal(a.scores, b.scores)
            assert a.predicted_class == b.predicted_class

    def test_bank_state_preserved_slot_for_slot(self, trained, tmp_path):
        model, _ = trained
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        for ba, bb in zip(model.banks.banks, loaded.banks.banks):
            assert ba.size == bb.size
            assert ba.capacity == bb.capacity
            np.testing.assert_array_equal(ba.keys[: ba.size],
                                          bb.keys[: bb.size])
            np.testing.assert_array_equal(ba.values[: ba.size],
                                          bb.values[: bb.size])
            np.testing.assert_array_equal(ba.ages[: ba.size],
                                          bb.ages[: bb.size])
            np.testing.assert_array_equal(ba.write_seq[: ba.size],
                                          bb.write_seq[: bb.size])
            assert ba.provenance == bb.provenance
            np.testing.assert_array_equal(ba.adam_m[: ba.size],
                                          bb.adam_m[: bb.size])
            np.testing.assert_array_equal(ba.adam_v[: ba.size],
                                          bb.adam_v[: bb.size])

    def test_config_and_hash_preserved(self, trained, tmp_path):
        model, _ = trained
        path = tmp_path / "model.json"
        save_model(model, path, config_hash="feedface")
        payload = json.loads(path.read_text())
        assert payload["format_version"] == 1
        assert payload["config_hash"] == "feedface"
        loaded = load_model(path)
        assert loaded.config.seed == model.config.seed
        assert loaded.config.read_top_k == model.config.read_top_k

    def test_future_version_rejected(self, trained, tmp_path):
        model, _ = trained
        path = tmp_path / "model.json"
        save_model(model, path)
        payload = json.loads(path.read_text())
        payload["format_version"] = 99
        path.write_text(json.dumps(payload))
        with pytest.raises(VersionMismatch):
            load_model(path)

    def test_corrupt_json_rejected(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text("{not json")
        with pytest.raises(CorruptFile):
            load_model(path)

    def test_missing_sections_rejected(self, trained, tmp_path):
        model, _ = trained
        path = tmp_path / "model.json"
        save_model(model, path)
        payload = json.loads(path.read_text())
        del payload["banks"]
        path.write_text(json.dumps(payload))
        with pytest.raises(CorruptFile):
            load_model(path)

    def test_further_training_continues_after_load(self, trained, tmp_path):
        # Adam state and write counters survive, so a loaded trainer can
        # keep stepping without error and the write sequence keeps rising.
        model, _ = trained
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        bank = loaded.banks.bank(0)
        before = bank._write_counter
        bank.write(np.ones(loaded.config.feature_dim), 0.5, "resumed")
        assert bank._write_counter == before + 1
