import json
import pickle

import numpy as np
import pytest

from nnvp.core.exceptions import DataFormatError
from nnvp.models import Dataset
from nnvp.schemas import DatasetSchema, SplitPlan
from nnvp.services.dataset import (
    apply_normalization,
    count_steps,
    fit_normalization,
    holdout_size,
    invert_normalization,
    load_csv,
    load_presets,
    online_stream,
    split,
    split_indices,
)


# --- LOADING ---

def test_load_csv_maps_labels_in_order_of_appearance(write_csv):
    path = write_csv("iris.csv", "5.1,3.5,setosa\n7.0,3.2,versicolor\n4.9,3.0,setosa\n")
    data = load_csv(path)

    assert len(data) == 3
    assert data.num_attributes == 2
    assert data.class_names == ("setosa", "versicolor")
    assert data.y.tolist() == [0, 1, 0]
    assert data.X[1].tolist() == [7.0, 3.2]


def test_load_csv_header_and_dropped_id_column(write_csv):
    path = write_csv("glass.csv", "id,ri,na,type\n1,1.52,13.6,1\n2,1.51,13.8,2\n")
    data = load_csv(path, DatasetSchema(has_header=True, drop_columns=[0]))

    assert data.num_attributes == 2
    assert data.X[:, 0].tolist() == [1.52, 1.51]


def test_load_csv_whitespace_delimited(write_csv):
    path = write_csv("ecoli.data", "AAT_ECOLI  0.49  0.29  cp\nACEA_ECOLI 0.07  0.40  im\n")
    data = load_csv(path, DatasetSchema(delimiter=None, drop_columns=[0]))

    assert data.X.tolist() == [[0.49, 0.29], [0.07, 0.40]]
    assert data.class_names == ("cp", "im")


def test_load_csv_reports_row_of_non_numeric_attribute(write_csv):
    path = write_csv("bad.csv", "1.0,2.0,a\n1.5,oops,b\n")

    with pytest.raises(DataFormatError, match="row 2") as exc:
        load_csv(path)
    assert exc.value.row == 2


def test_load_csv_row_numbers_count_blank_lines(write_csv):
    path = write_csv("gaps.csv", "1,2,a\n\n3,4,b\n5,x,a\n")

    with pytest.raises(DataFormatError, match="row 4") as exc:
        load_csv(path)
    assert exc.value.row == 4


def test_load_csv_row_numbers_after_header_and_gap(write_csv):
    path = write_csv("gaps.csv", "x1,x2,label\n\n1,2,a\n3,?,b\n")

    with pytest.raises(DataFormatError) as exc:
        load_csv(path, DatasetSchema(has_header=True))
    assert exc.value.row == 4


def test_load_csv_rejects_ragged_row(write_csv):
    path = write_csv("ragged.csv", "1.0,2.0,a\n1.5,b\n")

    with pytest.raises(DataFormatError) as exc:
        load_csv(path)
    assert exc.value.row == 2


def test_load_csv_empty_file(write_csv):
    with pytest.raises(DataFormatError, match="empty"):
        load_csv(write_csv("empty.csv", ""))


def test_load_csv_single_class_is_rejected(write_csv):
    with pytest.raises(DataFormatError, match="two classes"):
        load_csv(write_csv("one.csv", "1,2,a\n3,4,a\n"))


def test_load_csv_missing_file(tmp_path):
    with pytest.raises(DataFormatError, match="not found"):
        load_csv(tmp_path / "nope.csv")


def test_dataset_arrays_are_read_only(blobs):
    with pytest.raises(ValueError):
        blobs.X[0, 0] = 1.0


# --- NORMALIZATION ---

def test_normalization_zero_mean_unit_std(blobs):
    normalized = apply_normalization(fit_normalization(blobs), blobs)

    np.testing.assert_allclose(normalized.X.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(normalized.X.std(axis=0), 1.0, atol=1e-12)


def test_constant_attribute_keeps_std_one():
    data = Dataset(X=np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]), y=[0, 1, 0], class_names=["a", "b"])
    stats = fit_normalization(data)

    assert stats.std_devs[1] == 1.0
    assert apply_normalization(stats, data).X[:, 1].tolist() == [0.0, 0.0, 0.0]


def test_invert_normalization_restores_attributes(blobs):
    stats = fit_normalization(blobs)
    restored = invert_normalization(stats, apply_normalization(stats, blobs))

    np.testing.assert_allclose(restored.X, blobs.X, atol=1e-12)


def test_normalization_dimension_mismatch(blobs):
    other = Dataset(X=np.zeros((3, 2)), y=[0, 1, 0], class_names=["a", "b"])

    with pytest.raises(DataFormatError):
        apply_normalization(fit_normalization(blobs), other)


# --- SPLITTING ---

@pytest.mark.parametrize("total, fraction, expected", [(151, 0.1, 15), (214, 0.1, 21), (336, 0.1, 34), (846, 0.1, 85)])
def test_holdout_size_rounds(total, fraction, expected):
    assert holdout_size(total, fraction) == expected


def test_split_is_a_partition_and_reproducible():
    plan = SplitPlan(seed=4, test_fraction=0.1, num_repeats=10)
    train, test = split_indices(151, plan, 3)

    assert test.size == 15
    assert sorted(np.concatenate([train, test]).tolist()) == list(range(151))
    again_train, again_test = split_indices(151, plan, 3)
    assert np.array_equal(test, again_test) and np.array_equal(train, again_train)


def test_split_differs_between_repeats():
    plan = SplitPlan(seed=4, test_fraction=0.1, num_repeats=10)
    assert not np.array_equal(split_indices(214, plan, 0)[1], split_indices(214, plan, 1)[1])


def test_split_rejects_empty_test_set(blobs):
    plan = SplitPlan(seed=0, test_fraction=0.001, num_repeats=1)
    with pytest.raises(DataFormatError):
        split(blobs, plan, 0)


def test_split_rejects_repeat_out_of_range(blobs):
    with pytest.raises(DataFormatError):
        split(blobs, SplitPlan(num_repeats=2), 2)


# --- ON-LINE STREAM ---

def test_online_stream_prefixes(blobs):
    steps = list(online_stream(blobs, initial_size=50, seed=9))

    assert [s.n for s in steps] == list(range(51, 61))
    assert [len(s.train) for s in steps] == list(range(50, 60))
    # each step's training set extends the previous one by the previous example
    for previous, current in zip(steps, steps[1:]):
        assert np.array_equal(current.train.X[:-1], previous.train.X)
        assert np.array_equal(current.train.X[-1], previous.example.attributes)


def test_online_stream_is_a_permutation(blobs):
    last = list(online_stream(blobs, initial_size=1, seed=2))[-1]
    all_x = np.vstack([last.train.X, last.example.attributes])

    assert sorted(map(tuple, all_x)) == sorted(map(tuple, blobs.X))


def test_online_stream_limit(blobs):
    assert len(list(online_stream(blobs, initial_size=10, limit=5))) == 5
    assert count_steps(len(blobs), 10, 5) == 5
    assert count_steps(151, 50) == 101


@pytest.mark.parametrize("initial_size", [0, 60, 61])
def test_online_stream_rejects_bad_initial_size(blobs, initial_size):
    with pytest.raises(DataFormatError):
        online_stream(blobs, initial_size=initial_size)


# --- PRESETS ---

def test_presets_match_benchmark_counts():
    presets = load_presets()

    assert set(presets) == {"tae", "glass", "ecoli", "vehicle"}
    assert (presets["glass"].examples, presets["glass"].attributes, presets["glass"].classes) == (214, 9, 6)
    assert [presets[n].hidden_units for n in ("tae", "glass", "ecoli", "vehicle")] == [5, 5, 10, 11]
    assert presets["vehicle"].bins == 200
    assert presets["ecoli"].data_schema.delimiter is None
    assert all(list(p.reference.accuracy) == ["NN", "V1", "V2", "V3", "V4", "V5"] for p in presets.values())
    assert presets["ecoli"].reference.accuracy["V5"] == 89.41
    assert presets["vehicle"].reference.reliability["V2"] == 0.0086


def test_presets_invalid_json(tmp_path):
    path = tmp_path / "datasets.json"
    path.write_text("{not json", encoding="utf-8")

    with pytest.raises(DataFormatError):
        load_presets(path)


def test_presets_roundtrip_custom_file(tmp_path):
    path = tmp_path / "datasets.json"
    path.write_text(json.dumps([{
        "name": "toy", "title": "Toy", "file": "toy.csv", "hidden_units": 2,
        "examples": 10, "attributes": 2, "classes": 2, "schema": {"has_header": True},
    }]), encoding="utf-8")

    toy = load_presets(path)["toy"]
    assert toy.data_schema.has_header is True
    assert toy.bins == 100
    assert toy.reference is None


# --- EDGE CASES ---

def test_two_point_column_has_unit_population_std():
    data = Dataset(X=np.array([[1.0], [3.0]]), y=[0, 1], class_names=["a", "b"])
    stats = fit_normalization(data)

    assert stats.means.tolist() == [2.0]
    assert stats.std_devs.tolist() == [1.0]


def test_half_split_of_two_examples():
    data = Dataset(X=np.array([[1.0], [3.0]]), y=[0, 1], class_names=["a", "b"])
    train, test = split(data, SplitPlan(seed=0, test_fraction=0.5, num_repeats=1), 0)

    assert (len(train), len(test)) == (1, 1)


def test_last_possible_initial_size_gives_one_step(blobs):
    assert len(list(online_stream(blobs, initial_size=len(blobs) - 1))) == 1


def test_data_error_survives_process_boundary():
    error = pickle.loads(pickle.dumps(DataFormatError("bad value", row=4)))

    assert error.row == 4
    assert str(error) == "row 4: bad value"
