"""CSV loading, categorical codes, scaling, and feature-map layout."""

import numpy as np
import pytest

from anomaly_pipeline.errors import ConfigError, DataError
from anomaly_pipeline.ingest import (
    ATTACK,
    NORMAL,
    DatasetSchema,
    FeatureRecord,
    MinMaxScaler,
    encode_and_scale,
    feature_map_stack,
    filter_normal,
    fit_categorical,
    fit_scaler,
    load_csv,
    numeralize,
    to_feature_map,
)


def tiny_schema(**overrides):
    kwargs = dict(
        name="tiny",
        column_names=("proto", "bytes", "rate", "label"),
        column_kinds=("categorical", "numeric", "numeric", "label"),
        label_mapping={"normal": "normal", "*": "attack"},
        has_header=False,
    )
    kwargs.update(overrides)
    return DatasetSchema(**kwargs)


def make_records(rows):
    schema = tiny_schema()
    return [
        FeatureRecord(raw=[str(c) for c in row], label=schema.map_label(str(row[-1])))
        for row in rows
    ]


class TestSchema:
    def test_duplicate_names_rejected(self):
        with pytest.raises(ConfigError):
            tiny_schema(column_names=("a", "a", "b", "label"))

    def test_two_label_columns_rejected(self):
        with pytest.raises(ConfigError):
            tiny_schema(column_kinds=("label", "numeric", "numeric", "label"))

    def test_all_ignore_rejected(self):
        with pytest.raises(ConfigError):
            tiny_schema(column_kinds=("ignore", "ignore", "ignore", "label"))

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            tiny_schema(column_kinds=("categorical", "numeric", "weird", "label"))

    def test_bad_mapping_target_rejected(self):
        with pytest.raises(ConfigError):
            tiny_schema(label_mapping={"normal": "benign"})

    def test_wildcard_fallback(self):
        schema = tiny_schema()
        assert schema.map_label("normal") == NORMAL
        assert schema.map_label("neptune") == ATTACK

    def test_unmapped_label_without_wildcard(self):
        schema = tiny_schema(label_mapping={"ok": "normal"})
        with pytest.raises(DataError):
            schema.map_label("other")

    def test_feature_columns_skip_label_and_ignore(self):
        schema = tiny_schema(column_kinds=("categorical", "ignore", "numeric", "label"))
        assert schema.feature_columns == (0, 2)
        assert schema.feature_count == 2

    def test_builtin_schemas_load(self):
        nsl = DatasetSchema.load("nsl-kdd")
        assert nsl.width == 43
        assert nsl.feature_count == 41
        assert not nsl.has_header
        assert nsl.map_label("smurf") == ATTACK
        unsw = DatasetSchema.load("unsw-nb15")
        assert unsw.width == 45
        assert unsw.feature_count == 42
        assert unsw.has_header
        assert unsw.map_label("0") == NORMAL
        assert unsw.map_label("1") == ATTACK

    def test_schema_from_file(self, tmp_path):
        doc = tmp_path / "custom.json"
        doc.write_text(
            '{"name": "c", "has_header": false, "columns": ['
            '{"name": "x", "kind": "numeric"}], "label_mapping": {}}'
        )
        schema = DatasetSchema.load(doc)
        assert schema.name == "c"
        assert schema.label_column is None

    def test_missing_schema(self):
        with pytest.raises(ConfigError):
            DatasetSchema.load("no-such-schema")


class TestLoadCsv:
    def test_loads_rows_and_maps_labels(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("tcp,100,0.5,normal\nudp,300,0.1,dos\n")
        records = load_csv(f, tiny_schema())
        assert len(records) == 2
        assert records[0].label == NORMAL
        assert records[1].label == ATTACK
        assert records[1].raw == ["udp", "300", "0.1", "dos"]

    def test_header_only_file_is_empty(self, tmp_path):
        schema = tiny_schema(has_header=True)
        f = tmp_path / "d.csv"
        f.write_text("proto,bytes,rate,label\n")
        assert load_csv(f, schema) == []

    def test_header_mismatch(self, tmp_path):
        schema = tiny_schema(has_header=True)
        f = tmp_path / "d.csv"
        f.write_text("a,b,c,d\ntcp,1,2,normal\n")
        with pytest.raises(DataError):
            load_csv(f, schema)

    def test_wrong_cell_count_names_row(self, tmp_path):
        f = tmp_path / "d.csv"
        f.write_text("tcp,100,0.5,normal\nudp,300,normal\n")
        with pytest.raises(DataError, match="row 2"):
            load_csv(f, tiny_schema())

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(tmp_path / "absent.csv", tiny_schema())

    def test_unlabeled_schema_gives_none_labels(self, tmp_path):
        schema = DatasetSchema(
            name="plain",
            column_names=("a", "b"),
            column_kinds=("numeric", "numeric"),
            label_mapping={},
            has_header=False,
        )
        f = tmp_path / "d.csv"
        f.write_text("1,2\n3,4\n")
        records = load_csv(f, schema)
        assert all(r.label is None for r in records)


class TestCategoricalEncoder:
    def test_lexicographic_codes_from_one(self):
        records = make_records(
            [["tcp", 1, 2, "normal"], ["udp", 1, 2, "normal"], ["icmp", 1, 2, "normal"]]
        )
        enc = fit_categorical(records, tiny_schema())
        assert enc.codes[0] == {"icmp": 1, "tcp": 2, "udp": 3}

    def test_singleton_column(self):
        records = make_records([["http", 1, 2, "normal"]])
        enc = fit_categorical(records, tiny_schema())
        assert enc.codes[0] == {"http": 1}

    def test_unseen_maps_to_zero(self):
        records = make_records([["tcp", 1, 2, "normal"]])
        enc = fit_categorical(records, tiny_schema())
        assert enc.code_for(0, "sctp") == 0

    def test_determinism(self):
        records = make_records(
            [["b", 1, 2, "normal"], ["a", 1, 2, "normal"], ["b", 3, 4, "normal"]]
        )
        schema = tiny_schema()
        assert fit_categorical(records, schema).codes == fit_categorical(records, schema).codes

    def test_empty_records_rejected(self):
        with pytest.raises(DataError):
            fit_categorical([], tiny_schema())


class TestScaling:
    def test_direct_arithmetic(self):
        records = make_records(
            [["tcp", 0, 7, "normal"], ["tcp", 5, 7, "normal"], ["tcp", 10, 7, "normal"]]
        )
        enc = fit_categorical(records, tiny_schema())
        scaler = fit_scaler(records, enc)
        encode_and_scale(records, enc, scaler)
        np.testing.assert_allclose([r.encoded[1] for r in records], [0.0, 0.5, 1.0])

    def test_out_of_range_clips(self):
        train = make_records([["tcp", 0, 0, "normal"], ["tcp", 10, 1, "normal"]])
        enc = fit_categorical(train, tiny_schema())
        scaler = fit_scaler(train, enc)
        test = make_records([["tcp", 12, -3, "dos"]])
        encode_and_scale(test, enc, scaler)
        np.testing.assert_allclose(test[0].encoded[1], 1.0)
        np.testing.assert_allclose(test[0].encoded[2], 0.0)

    def test_constant_feature_maps_to_zero(self):
        records = make_records([["tcp", 3, 1, "normal"], ["tcp", 3, 2, "normal"]])
        enc = fit_categorical(records, tiny_schema())
        scaler = fit_scaler(records, enc)
        encode_and_scale(records, enc, scaler)
        assert all(r.encoded[1] == 0.0 for r in records)

    def test_all_values_in_unit_interval(self):
        rng = np.random.default_rng(3)
        rows = [["tcp" if rng.random() < 0.5 else "udp",
                 float(rng.normal(0, 100)), float(rng.normal(5, 2)), "normal"]
                for _ in range(50)]
        records = make_records(rows)
        enc = fit_categorical(records, tiny_schema())
        scaler = fit_scaler(records, enc)
        encode_and_scale(records, enc, scaler)
        stacked = np.stack([r.encoded for r in records])
        assert stacked.min() >= 0.0 and stacked.max() <= 1.0

    def test_refit_on_scaled_data_is_idempotent(self):
        records = make_records(
            [["tcp", 0, 1, "normal"], ["udp", 5, 3, "normal"], ["tcp", 10, 2, "normal"]]
        )
        schema = tiny_schema()
        enc = fit_categorical(records, schema)
        scaler = fit_scaler(records, enc)
        once = np.stack([r.encoded for r in encode_and_scale(records, enc, scaler)])
        # Feed the scaled values back through a fresh fit; nothing should move.
        rescaled_rows = [
            ["tcp" if r.raw[0] == "tcp" else "udp", row[1], row[2], "normal"]
            for r, row in zip(records, once)
        ]
        again = make_records(rescaled_rows)
        enc2 = fit_categorical(again, schema)
        scaler2 = fit_scaler(again, enc2)
        twice = np.stack([r.encoded for r in encode_and_scale(again, enc2, scaler2)])
        np.testing.assert_allclose(twice, once, atol=1e-12)

    def test_nonnumeric_cell_in_numeric_column(self):
        records = make_records([["tcp", 1, 2, "normal"]])
        records[0].raw[1] = "oops"
        enc = fit_categorical(records, tiny_schema())
        with pytest.raises(DataError, match="bytes"):
            numeralize(records, enc)

    def test_scaler_validates_bounds(self):
        with pytest.raises(ConfigError):
            MinMaxScaler(mins=np.array([1.0]), maxs=np.array([0.0]))


class TestFeatureMap:
    def test_41_features_pack_into_7x6_with_one_pad(self):
        fm = to_feature_map(np.arange(41, dtype=float))
        assert fm.grid.shape == (7, 6)
        assert fm.pad_count == 1
        assert fm.grid[6, 5] == 0.0

    def test_perfect_square(self):
        fm = to_feature_map(np.ones(16))
        assert fm.grid.shape == (4, 4)
        assert fm.pad_count == 0

    def test_round_trip_identity(self):
        rng = np.random.default_rng(7)
        for d in [1, 2, 5, 12, 41, 42, 64]:
            v = rng.random(d)
            fm = to_feature_map(v)
            flat = fm.grid.reshape(-1)
            np.testing.assert_array_equal(flat[:d], v)
            assert np.all(flat[d:] == 0)
            assert fm.grid.size - d == fm.pad_count

    def test_stack_shape(self):
        records = make_records([["tcp", 1, 2, "normal"], ["udp", 3, 4, "dos"]])
        enc = fit_categorical(records, tiny_schema())
        scaler = fit_scaler(records, enc)
        encode_and_scale(records, enc, scaler)
        stack = feature_map_stack(records)
        assert stack.shape == (2, 1, 2, 2)

    def test_empty_vector_rejected(self):
        with pytest.raises(ValueError):
            to_feature_map(np.array([]))


class TestFilterNormal:
    def test_keeps_normals_in_order(self):
        records = make_records(
            [["tcp", 1, 2, "dos"], ["tcp", 3, 4, "normal"], ["udp", 5, 6, "normal"]]
        )
        kept = filter_normal(records)
        assert [r.raw[1] for r in kept] == ["3", "5"]

    def test_all_attack_gives_empty(self):
        records = make_records([["tcp", 1, 2, "dos"], ["udp", 3, 4, "probe"]])
        assert filter_normal(records) == []

    def test_unlabeled_record_rejected(self):
        records = [FeatureRecord(raw=["tcp", "1", "2", "x"])]
        with pytest.raises(DataError):
            filter_normal(records)
