import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fshar import data
from fshar.exceptions import (
    InsufficientSamplesError,
    InvalidConfigurationError,
    InvalidInputError,
    NumericInputError,
    ParseError,
)

SCHEMA = data.RecordingSchema(",", label_col=2, channel_cols=[0, 1], sample_rate_hz=10.0)


def write(tmp_path, text, name="rec.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def recording(labels, C=1, rate=1.0):
    labels = np.asarray(labels)
    values = np.arange(labels.size * C, dtype=float).reshape(labels.size, C)
    return data.RawRecording(values, labels, rate)


# -- ingestion -------------------------------------------------------------

def test_load_well_formed_file(tmp_path):
    rec = data.load_recording(write(tmp_path, "0.1,0.2,1\n0.3,0.4,1\n0.5,0.6,2\n"), SCHEMA)
    assert len(rec) == 3 and rec.dropped == 0
    np.testing.assert_array_equal(rec.values, [[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]])
    np.testing.assert_array_equal(rec.labels, [1, 1, 2])
    assert rec.sample_rate == 10.0


def test_nan_rows_are_dropped(tmp_path):
    rec = data.load_recording(write(tmp_path, "0.1,NaN,1\n0.3,0.4,1\nnan,inf,1\n"), SCHEMA)
    assert len(rec) == 1 and rec.dropped == 2


def test_header_rows_are_skipped(tmp_path):
    schema = data.RecordingSchema(";", 0, [1], 5.0, skip_header=1)
    rec = data.load_recording(write(tmp_path, "label;x\n3;1.5\n"), schema)
    np.testing.assert_array_equal(rec.labels, [3])


def test_label_column_out_of_range(tmp_path):
    schema = data.RecordingSchema(",", 7, [0], 1.0)
    with pytest.raises(InvalidConfigurationError):
        data.load_recording(write(tmp_path, "1.0,2\n"), schema)


def test_malformed_row_reports_line(tmp_path):
    with pytest.raises(ParseError) as info:
        data.load_recording(write(tmp_path, "0.1,0.2,1\n0.3,abc,1\n"), SCHEMA)
    assert info.value.line == 2
    assert "line 2" in str(info.value)


def test_empty_file(tmp_path):
    with pytest.raises(InvalidInputError):
        data.load_recording(write(tmp_path, ""), SCHEMA)


def test_schema_json_round_trip(tmp_path):
    schema = data.RecordingSchema("\t", 0, [1, 2], 30.0, skip_header=2, null_label=0)
    path = write(tmp_path, json.dumps(schema.to_dict()), "schema.json")
    assert data.RecordingSchema.from_json(path) == schema
    with pytest.raises(InvalidConfigurationError):
        data.RecordingSchema(",", 0, [1], 0.0)


# -- windowing -------------------------------------------------------------

def test_window_count_example():
    batch = data.sliding_window(recording(np.zeros(100, dtype=int), rate=30.0), 1.0, 0.5)
    assert batch.X.shape == (5, 30, 1)
    np.testing.assert_array_equal(batch.X[:, 0, 0], [0, 15, 30, 45, 60])


def test_zero_overlap_tiles():
    batch = data.sliding_window(recording(np.zeros(12, dtype=int), C=2), 4.0, 0.0)
    np.testing.assert_array_equal(batch.X.reshape(-1, 2), np.arange(24.0).reshape(12, 2))


def test_short_recording_gives_empty_batch():
    batch = data.sliding_window(recording([1, 1, 1]), 5.0, 0.5)
    assert len(batch) == 0 and batch.X.shape == (0, 5, 1)


def test_window_labels_majority_then_earliest():
    assert data.window_label(np.array([2, 1, 1, 2, 3])) == 2
    assert data.window_label(np.array([4, 1, 1, 4, 1])) == 1
    batch = data.sliding_window(recording([5, 5, 6, 6, 6, 6]), 2.0, 0.0)
    np.testing.assert_array_equal(batch.y, [5, 6, 6])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 60), st.integers(1, 15), st.floats(0, 0.95), st.integers(0, 9))
def test_windowing_preserves_uniform_labels(n, T, overlap, label):
    batch = data.sliding_window(recording(np.full(n, label)), float(T), overlap)
    stride = max(1, int(np.floor(T * (1 - overlap) + 1e-9)))
    assert len(batch) == (0 if n < T else (n - T) // stride + 1)
    assert np.all(batch.y == label)


def test_window_argument_errors():
    with pytest.raises(InvalidConfigurationError):
        data.sliding_window(recording([0, 0]), 1.0, 1.0)
    with pytest.raises(InvalidConfigurationError):
        data.sliding_window(recording([0, 0]), 0.1, 0.5)


# -- balancing, splits, episodes -------------------------------------------

def test_balance_classes_to_min_size():
    batch = data.synth_generate(3, 5, T=2, C=1, noise_sd=1, seed=0)
    keep = np.r_[0:5, 5:8, 10:15]
    out = data.balance_classes(batch.subset(keep), 3, seed=1)
    assert np.bincount(out.y).tolist() == [3, 3, 3]
    np.testing.assert_array_equal(out.X[out.y == 1], batch.X[5:8])


def test_balance_classes_opp_shaped():
    batch = data.synth_generate(17, 230, T=2, C=1, noise_sd=1, seed=0)
    out = data.balance_classes(batch, 202, seed=4)
    assert len(out) == 202 * 17
    again = data.balance_classes(batch, 202, seed=4)
    np.testing.assert_array_equal(out.X, again.X)


def test_balance_classes_names_short_class():
    batch = data.SequenceBatch(np.zeros((3, 2, 1)), [0, 0, 1])
    with pytest.raises(InsufficientSamplesError) as info:
        data.balance_classes(batch, 2)
    assert info.value.label == 1


def test_preset_splits():
    assert (len(data.OPP_SPLIT.source_classes), len(data.OPP_SPLIT.target_classes)) == (10, 7)
    assert (len(data.PAMAP2_SPLIT.source_classes), len(data.PAMAP2_SPLIT.target_classes)) == (7, 5)
    terms = data.OPP_SPLIT.terms("source") + data.OPP_SPLIT.terms("target")
    assert terms.count("open door") == 2
    assert data.PAMAP2_SPLIT.terms("target")[0] == "sitting"


def test_split_domains_partitions_and_reindexes():
    batch = data.synth_generate(5, 4, T=2, C=1, noise_sd=1, seed=0)
    src, trg = data.split_domains(batch, data.SplitSpec([3, 0, 1], [4, 2]))
    assert len(src) + len(trg) == len(batch)
    assert src.classes == (3, 0, 1) and trg.classes == (4, 2)
    np.testing.assert_array_equal(src.X[src.y == 0], batch.X[batch.y == 3])
    np.testing.assert_array_equal(trg.X[trg.y == 1], batch.X[batch.y == 2])


def test_split_spec_errors():
    with pytest.raises(InvalidConfigurationError):
        data.SplitSpec([0, 1], [1, 2])
    with pytest.raises(InvalidConfigurationError):
        data.SplitSpec([0, 1], [])
    with pytest.raises(InvalidInputError):
        data.split_domains(data.synth_generate(2, 2, 2, 1, 0, seed=0), data.SplitSpec([0], [5]))


def test_episode_counts_and_partition():
    pool = data.synth_generate(3, 10, T=2, C=1, noise_sd=1, seed=0)
    ep = data.sample_episode(pool, 1, seed=0)
    assert (len(ep.train), len(ep.test)) == (3, 27)
    assert sorted(np.r_[ep.train_index, ep.test_index].tolist()) == list(range(30))
    assert np.bincount(ep.train.y).tolist() == [1, 1, 1]
    assert set(ep.test.y.tolist()) == {0, 1, 2}


def test_episode_seeds():
    pool = data.synth_generate(3, 10, T=2, C=1, noise_sd=1, seed=0)
    first = data.sample_episode(pool, 2, seed=0).train_index
    np.testing.assert_array_equal(data.sample_episode(pool, 2, seed=0).train_index, first)
    others = [data.sample_episode(pool, 2, seed=s).train_index for s in range(1, 11)]
    assert any(not np.array_equal(o, first) for o in others)


def test_episode_needs_more_than_k():
    pool = data.synth_generate(2, 3, T=2, C=1, noise_sd=1, seed=0)
    with pytest.raises(InsufficientSamplesError):
        data.sample_episode(pool, 3, seed=0)


def test_drop_label_and_concat():
    a = data.SequenceBatch(np.zeros((3, 2, 1)), [0, 1, 0])
    b = data.SequenceBatch(np.ones((1, 2, 1)), [2])
    out = data.concat_batches([data.drop_label(a, 0), b])
    np.testing.assert_array_equal(out.y, [1, 2])


# -- synthetic data --------------------------------------------------------

def test_noise_free_samples_are_identical():
    batch = data.synth_generate(3, 4, T=6, C=2, noise_sd=0.0, seed=0)
    for c in range(3):
        X = batch.X[batch.y == c]
        assert np.all(X == X[0])
    assert not np.allclose(batch.X[0], batch.X[4])


def test_synth_seeded():
    a = data.synth_generate(3, 4, T=6, C=2, noise_sd=0.5, seed=3)
    b = data.synth_generate(3, 4, T=6, C=2, noise_sd=0.5, seed=3)
    np.testing.assert_array_equal(a.X, b.X)
    with pytest.raises(InvalidConfigurationError):
        data.synth_generate(0, 4, T=6, C=2, noise_sd=0.5)


def test_nearest_centroid_separates_low_noise():
    batch = data.synth_generate(4, 25, T=16, C=3, noise_sd=0.01, seed=0)
    flat = batch.X.reshape(len(batch), -1)
    centroids = np.stack([flat[batch.y == c].mean(axis=0) for c in range(4)])
    dist = ((flat[:, None, :] - centroids[None]) ** 2).sum(axis=2)
    assert np.mean(np.argmin(dist, axis=1) == batch.y) == 1.0


def test_first_class_offsets_patterns():
    a = data.synth_generate(2, 1, T=5, C=1, noise_sd=0, first_class=3)
    b = data.synth_generate(5, 1, T=5, C=1, noise_sd=0)
    np.testing.assert_array_equal(a.X, b.X[3:5])


# -- standardisation and cache ----------------------------------------------

def test_standardizer_uses_fit_statistics():
    rng = np.random.default_rng(0)
    X = rng.normal(3.0, 2.0, size=(20, 5, 2))
    scaler = data.ChannelStandardizer().fit(X)
    Z = scaler.transform(X)
    np.testing.assert_allclose(Z.mean(axis=(0, 1)), 0, atol=1e-12)
    np.testing.assert_allclose(Z.std(axis=(0, 1)), 1, atol=1e-12)
    np.testing.assert_allclose(scaler.transform(X[:1] + 1)[0], Z[0] + 1 / scaler.scale_)
    const = data.ChannelStandardizer().fit(np.ones((2, 3, 1)))
    np.testing.assert_array_equal(const.transform(np.ones((1, 3, 1))), 0)


def test_sequence_validation():
    with pytest.raises(NumericInputError):
        data.SequenceBatch(np.full((1, 2, 1), np.inf), [0])
    with pytest.raises(InvalidInputError):
        data.SequenceBatch(np.zeros((2, 2, 1)), [0])


def test_batch_cache_round_trip(tmp_path):
    batch = data.SequenceBatch(np.random.default_rng(0).normal(size=(4, 3, 2)), [0, 1, 1, 0], (7, 9))
    path = tmp_path / "batch.bin"
    data.save_batch(path, batch)
    back = data.load_batch(path)
    np.testing.assert_array_equal(back.X, batch.X)
    np.testing.assert_array_equal(back.y, batch.y)
    assert back.classes == (7, 9)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(InvalidInputError):
        data.load_batch(path)
