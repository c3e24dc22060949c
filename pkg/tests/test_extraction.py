import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from datawords.errors import ConfigError, DataError
from datawords.extraction import (
    MeasurementFilter,
    PatternConfig,
    RollupPolicy,
    StructuredRecord,
    allowed_variables,
    extract_patterns,
    load_db_measurements,
    load_external_extractions,
    rollup,
    select_measurements,
)


def simple_config():
    return PatternConfig.from_dict(
        {
            "aliases": {"Temp": "Temp"},
            "lexicon": [
                {"phrase": "lung cancer", "name": "Previous_condition",
                 "value": "lung_cancer", "kind": "condition"}
            ],
        }
    )


class TestExtractPatterns:
    def test_numeric_alias_match(self):
        records = extract_patterns("Temp = 102.1 today", simple_config())
        assert len(records) == 1
        rec = records[0]
        assert rec.name == "Temp"
        assert rec.value == 102.1
        assert rec.kind == "measurement"
        text = "Temp = 102.1 today"
        assert text[rec.span[0] : rec.span[1]] == "Temp = 102.1"

    def test_lexicon_match(self):
        records = extract_patterns("history of lung cancer", simple_config())
        assert len(records) == 1
        rec = records[0]
        assert rec.name == "Previous_condition"
        assert rec.value == "lung_cancer"
        assert rec.kind == "condition"

    def test_no_match(self):
        assert extract_patterns("no vitals recorded", simple_config()) == []

    def test_case_insensitive(self):
        records = extract_patterns("temp was 99.1", simple_config())
        assert len(records) == 1 and records[0].name == "Temp"

    def test_explicit_numeric_pattern(self):
        config = PatternConfig.from_dict(
            {"numeric_patterns": [{"variable": "SpO2", "pattern": r"sat\s+(\d+)%"}]}
        )
        records = extract_patterns("sat 94% on room air", config)
        assert records[0].name == "SpO2" and records[0].value == 94.0

    def test_spans_never_overlap(self):
        config = simple_config()
        text = "Temp = 98.6 then Temp = 102.1 and lung cancer history"
        records = extract_patterns(text, config)
        spans = sorted(r.span for r in records)
        for (s1, e1), (s2, e2) in zip(spans, spans[1:]):
            assert e1 <= s2

    def test_pattern_without_group_rejected(self):
        with pytest.raises(ConfigError):
            PatternConfig.from_dict(
                {"numeric_patterns": [{"variable": "X", "pattern": r"\d+"}]}
            )

    def test_deterministic(self):
        text = "Temp 100.2, later Temp 101.5, known lung cancer"
        a = extract_patterns(text, simple_config())
        b = extract_patterns(text, simple_config())
        assert a == b


class TestRecordFiles:
    def write(self, tmp_path, rows):
        path = tmp_path / "records.jsonl"
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
        return path

    def test_numeric_record(self, tmp_path):
        path = self.write(
            tmp_path,
            [{"encounter_id": "e1", "doc_index": 0, "name": "Temp",
              "value": 104.3, "kind": "measurement"}],
        )
        records = load_external_extractions(path)
        assert len(records) == 1
        rec = records[0]
        assert rec.provenance == "external_extractor"
        assert rec.value == 104.3 and rec.doc_index == 0

    def test_categorical_test_result(self, tmp_path):
        path = self.write(
            tmp_path,
            [{"encounter_id": "e1", "name": "lime_disease_test",
              "value": "negative", "kind": "test_result"}],
        )
        rec = load_external_extractions(path)[0]
        assert rec.value == "negative" and rec.kind == "test_result"

    def test_missing_name_is_parse_error(self, tmp_path):
        path = self.write(tmp_path, [{"encounter_id": "e1", "value": 1.0}])
        with pytest.raises(DataError, match="line 1"):
            load_external_extractions(path)

    def test_unknown_kind_maps_to_other(self, tmp_path):
        path = self.write(
            tmp_path, [{"encounter_id": "e1", "name": "X", "value": "y", "kind": "weird"}]
        )
        assert load_external_extractions(path)[0].kind == "other"

    def test_db_rows_not_aggregated(self, tmp_path):
        rows = [
            {"encounter_id": "e1", "name": "Glucose", "value": v} for v in (90, 110, 130)
        ]
        path = self.write(tmp_path, rows)
        records = load_db_measurements(path)
        assert [r.value for r in records] == [90, 110, 130]
        assert all(r.provenance == "database" for r in records)

    def test_db_non_numeric_is_categorical(self, tmp_path):
        path = self.write(tmp_path, [{"encounter_id": "e1", "name": "Culture", "value": "negative"}])
        rec = load_db_measurements(path)[0]
        assert rec.kind == "other" and rec.value == "negative"

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("", encoding="utf-8")
        assert load_db_measurements(path) == []


COUNTS = {"A": 500, "B": 120, "C": 90}


class TestSelectMeasurements:
    def records(self):
        out = []
        for name, count in COUNTS.items():
            out.extend(
                StructuredRecord(name=name, value=float(i), encounter_id="e1")
                for i in range(count)
            )
        return out

    def test_count_range(self):
        filt = MeasurementFilter(mode="count_range", min_count=100, max_count=500)
        assert allowed_variables(COUNTS, filt) == {"A", "B"}

    def test_top_n(self):
        assert allowed_variables(COUNTS, MeasurementFilter(mode="top_n", n=1)) == {"A"}

    def test_top_n_excluding_top_m(self):
        filt = MeasurementFilter(mode="top_n_excluding_top_m", n=1, m=1)
        assert allowed_variables(COUNTS, filt) == {"B"}

    def test_filter_is_subset_order_preserving_idempotent(self):
        records = self.records()
        filt = MeasurementFilter(mode="count_range", min_count=100, max_count=500)
        kept = select_measurements(records, filt)
        assert all(r in records for r in kept)
        positions = [records.index(r) for r in kept]
        assert positions == sorted(positions)
        again = select_measurements(kept, filt, counts=COUNTS)
        assert again == kept

    def test_training_counts_apply_to_test_records(self):
        test_records = [StructuredRecord(name="C", value=1.0, encounter_id="t1")]
        filt = MeasurementFilter(mode="count_range", min_count=100, max_count=500)
        assert select_measurements(test_records, filt, counts=COUNTS) == []

    def test_invalid_filter(self):
        with pytest.raises(ConfigError):
            MeasurementFilter(mode="top_n", n=0)
        with pytest.raises(ConfigError):
            MeasurementFilter(mode="count_range", min_count=5, max_count=1)


class TestRollup:
    def glucose(self, values):
        return [
            StructuredRecord(name="Glucose", value=v, provenance="database", encounter_id="e1")
            for v in values
        ]

    def test_mean_min_max(self):
        out = rollup(self.glucose([90, 110, 130]), RollupPolicy(("mean", "min", "max")))
        by_name = {r.name: r.value for r in out}
        assert by_name == {"Glucose_mean": 110.0, "Glucose_min": 90.0, "Glucose_max": 130.0}

    def test_single_reading_identity(self):
        out = rollup(
            [StructuredRecord(name="Temp", value=98.8, encounter_id="e1")],
            RollupPolicy(("mean",)),
        )
        assert len(out) == 1 and out[0].name == "Temp_mean" and out[0].value == 98.8

    def test_categorical_passes_through(self):
        rec = StructuredRecord(name="Prior", value="diabetes", kind="condition", encounter_id="e1")
        out = rollup([rec], RollupPolicy(("mean", "min", "max")))
        assert out == [rec]

    def test_groups_by_encounter(self):
        records = [
            StructuredRecord(name="Glucose", value=90.0, encounter_id="e1"),
            StructuredRecord(name="Glucose", value=130.0, encounter_id="e2"),
        ]
        out = rollup(records, RollupPolicy(("mean",)))
        assert [(r.encounter_id, r.value) for r in out] == [("e1", 90.0), ("e2", 130.0)]

    def test_provenance_scoping(self):
        records = [
            StructuredRecord(name="Temp", value=99.0, provenance="text_extraction",
                             encounter_id="e1", doc_index=0),
            StructuredRecord(name="Glucose", value=90.0, provenance="database", encounter_id="e1"),
            StructuredRecord(name="Glucose", value=110.0, provenance="database", encounter_id="e1"),
        ]
        out = rollup(records, RollupPolicy(("mean",)), provenances=("database",))
        assert [r.name for r in out] == ["Temp", "Glucose_mean"]
        assert out[1].value == 100.0

    def test_median_first_last_count(self):
        out = rollup(self.glucose([130, 90, 110]), RollupPolicy(("median", "first", "last", "count")))
        by_name = {r.name: r.value for r in out}
        assert by_name == {
            "Glucose_median": 110.0,
            "Glucose_first": 130.0,
            "Glucose_last": 110.0,
            "Glucose_count": 3.0,
        }

    def test_empty_policy_rejected(self):
        with pytest.raises(ConfigError):
            RollupPolicy(())

    @given(st.lists(st.floats(min_value=-1e6, max_value=1e6), min_size=1, max_size=20))
    @settings(max_examples=100)
    def test_aggregate_bounds(self, values):
        out = rollup(self.glucose(values), RollupPolicy(("mean", "median", "min", "max")))
        by_name = {r.name: r.value for r in out}
        assert len(out) == 4
        assert by_name["Glucose_min"] <= by_name["Glucose_mean"] + 1e-9
        assert by_name["Glucose_mean"] <= by_name["Glucose_max"] + 1e-9
        assert by_name["Glucose_min"] <= by_name["Glucose_median"] <= by_name["Glucose_max"]
