import json
import math

import pandas as pd
import pytest

from nvo.errors import DatasetError
from nvo.file_io import (
    histogram_from_doc,
    histogram_to_doc,
    load_histogram,
    load_json,
    load_plan,
    load_report,
    plan_from_doc,
    plan_to_doc,
    read_column,
    report_to_doc,
    restore_float,
    save_json,
    save_samples,
)
from nvo.game import evaluate_plan
from nvo.mechanism import action_set
from nvo.preprocess import compute_normalization, from_bins, normalize_and_bin


def write_csv(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_read_column_picks_named_column(tmp_path):
    path = write_csv(tmp_path / "d.csv", "name,height\na,180.5\nb, 175\nc,190\n")
    data = read_column(path, "height")
    assert data.values == [180.5, 175.0, 190.0]
    assert data.label == "height"


def test_read_column_reports_csv_line_numbers(tmp_path):
    path = write_csv(tmp_path / "d.csv", "height\n180\n181\nabc\n182\ninf\n")
    with pytest.raises(DatasetError) as excinfo:
        read_column(path, "height")
    message = str(excinfo.value)
    assert "line 4 ('abc')" in message
    assert "line 6" in message


def test_read_column_missing_column(tmp_path):
    path = write_csv(tmp_path / "d.csv", "weight\n80\n90\n")
    with pytest.raises(DatasetError, match="no column 'height'"):
        read_column(path, "height")


def test_non_finite_floats_survive_json(tmp_path):
    path = str(tmp_path / "out" / "doc.json")
    save_json({"values": [1.5, math.inf, -math.inf, math.nan]}, path)
    raw = json.loads(open(path, encoding="utf-8").read())
    assert raw["format_version"] == 1
    assert raw["values"][1:] == ["inf", "-inf", "nan"]
    values = [restore_float(v) for v in load_json(path)["values"]]
    assert values[:3] == [1.5, math.inf, -math.inf]
    assert math.isnan(values[3])


def test_restore_float_rejects_other_text():
    with pytest.raises(DatasetError, match="expected a number"):
        restore_float("infinity")


@pytest.mark.parametrize("label", ["nan", "inf", "-inf"])
def test_text_fields_that_look_non_finite_stay_text(tmp_path, label):
    binned = from_bins([1, 2, 2], k=5).model_copy(update={"label": label})
    path = str(tmp_path / "histogram.json")
    save_json(histogram_to_doc(binned), path)
    restored = load_histogram(path)
    assert restored.label == label
    assert restored == binned


def test_report_with_infinite_loss_round_trips(tmp_path):
    binned = from_bins([0, 0, 0, 0, 0, 10], k=11)
    plan = action_set(1.0, 1.0, (0.001,)).with_assignment([0] * 6)
    report = evaluate_plan(binned, plan, 1.0)
    assert any(math.isinf(r.epsilon_exact) for r in report.per_instance)
    path = str(tmp_path / "report.json")
    save_json(report_to_doc(report), path)
    assert load_report(path) == report


def test_unknown_format_version_rejected(tmp_path):
    path = tmp_path / "doc.json"
    path.write_text(json.dumps({"format_version": 99}), encoding="utf-8")
    with pytest.raises(DatasetError, match="format_version"):
        load_json(str(path))


@pytest.mark.parametrize("body", ["[1, 2, 3]", "{not json", '"text"'])
def test_non_object_documents_name_the_file(tmp_path, body):
    path = tmp_path / "doc.json"
    path.write_text(body, encoding="utf-8")
    with pytest.raises(DatasetError, match="doc.json"):
        load_json(str(path))


def test_plan_missing_a_key_names_the_file(tmp_path, four_instances):
    _, actions, _ = four_instances
    doc = plan_to_doc(actions.with_assignment([0, 1, 2, 2]), "brd")
    del doc["scales"]
    path = str(tmp_path / "plan.json")
    save_json(doc, path)
    with pytest.raises(DatasetError, match=r"plan\.json: missing key 'scales'"):
        load_plan(path)


def test_histogram_with_wrong_field_type_names_the_file(tmp_path):
    doc = histogram_to_doc(from_bins([1, 2, 2], k=5))
    doc["bin_of"] = "oops"
    path = str(tmp_path / "histogram.json")
    save_json(doc, path)
    with pytest.raises(DatasetError, match="histogram.json"):
        load_histogram(path)


def test_histogram_document_restores_dataset(tmp_path, bimodal):
    binned = normalize_and_bin(bimodal, compute_normalization(bimodal, 1.0, 0.9, 1.0), 101)
    path = str(tmp_path / "histogram.json")
    save_json(histogram_to_doc(binned), path)
    restored = histogram_from_doc(load_json(path))
    assert restored == binned


def test_plan_document_records_solver_outcome(four_instances):
    _, actions, _ = four_instances
    plan = actions.with_assignment([0, 1, 2, 2])
    doc = plan_to_doc(plan, "baseline")
    assert "solver" not in doc
    assert plan_from_doc(doc) == plan


def test_samples_written_as_single_column(tmp_path):
    path = str(tmp_path / "samples.csv")
    save_samples([0.25, 0.5], path)
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["value"]
    assert frame["value"].tolist() == [0.25, 0.5]
    assert open(path, encoding="utf-8").read() == "value\n0.25\n0.5\n"


def test_default_action_set_serializes_scales():
    doc = plan_to_doc(action_set(1.0), "brd")
    assert doc["scales"] == pytest.approx([3.0, 2.0, 1.0, 0.33, 0.2])
    assert doc["assignment"] == []
