import math

import numpy as np
import pytest

from kiteupset.errors import SchemaError
from kiteupset.features import (
    FeatureMatrix,
    amplitude_spectrum,
    build_feature_matrix,
    extract_features,
    feature_names,
    load_feature_matrix,
    per_signal_names,
    save_feature_matrix,
    schema_hash,
    signal_features,
    time_reversal_stat,
)
from kiteupset.segments import SignalSegment


def test_constant_signal():
    feats = signal_features(np.full(50, 3.0), 10.0)
    assert feats["mean"] == pytest.approx(3.0)
    assert feats["variance"] == pytest.approx(0.0)
    assert feats["crest_factor"] == pytest.approx(1.0)
    assert feats["max_slope"] == 0.0
    assert feats["skewness"] == 0.0
    assert feats["peak_to_peak"] == 0.0


def test_ramp_slope_and_cumsum_range():
    x = np.arange(10) / 10.0
    feats = signal_features(x, 10.0, taus=(0.1,))
    assert feats["max_slope"] == pytest.approx(1.0)
    assert feats["cumsum_range"] == pytest.approx(np.sum(x) - x[0])
    assert feats["cumsum_range"] == pytest.approx(4.5)


def test_sinusoid_spectrum_peak():
    t = np.arange(50) / 10.0
    feats = signal_features(3.0 * np.sin(2 * math.pi * 2.0 * t), 10.0)
    assert feats["spec_max_above_1hz"] == pytest.approx(3.0, rel=0.05)
    freqs, amp = amplitude_spectrum(3.0 * np.sin(2 * math.pi * 2.0 * t), 10.0)
    assert freqs[int(np.argmax(amp))] == pytest.approx(2.0)
    assert freqs[0] > 0.0


def test_time_reversal_ramp_is_one():
    x = np.arange(100, dtype=float)
    for tau in (0.1, 0.5, 1.0):
        assert time_reversal_stat(x, tau, 10.0) == pytest.approx(1.0)


def test_time_reversal_is_odd():
    x = np.random.default_rng(1).standard_normal(500).cumsum()
    assert time_reversal_stat(-x, 0.5, 10.0) == pytest.approx(-time_reversal_stat(x, 0.5, 10.0))


def test_time_reversal_vanishes_for_iid_noise():
    x = np.random.default_rng(2).standard_normal(10_000)
    assert abs(time_reversal_stat(x, 1.0, 10.0)) < 0.05


def test_time_reversal_constant_is_zero():
    assert time_reversal_stat(np.ones(30), 0.5, 10.0) == 0.0


def test_time_reversal_rejects_fractional_lag():
    with pytest.raises(ValueError):
        time_reversal_stat(np.arange(30.0), 0.05, 10.0)


def test_short_or_nonfinite_windows_rejected():
    with pytest.raises(ValueError):
        signal_features(np.ones(4), 10.0)
    x = np.ones(30)
    x[3] = math.nan
    with pytest.raises(ValueError):
        signal_features(x, 10.0)


def test_feature_names_order():
    names = per_signal_names((0.5, 1.0))
    assert names[:3] == ("mean", "median", "rms")
    assert names[11:14] == ("cumsum_range", "trev_0.5", "trev_1")
    assert names[-1] == "spec_max_above_1hz"
    assert len(names) == 18
    full = feature_names(("F_t", "alpha"), (0.5, 1.0))
    assert full[0] == "F_t.mean"
    assert full[18] == "alpha.mean"


def test_extract_features_follows_schema():
    rng = np.random.default_rng(3)
    window = {"a": rng.standard_normal(50), "b": rng.standard_normal(50)}
    vec = extract_features(window, ("b", "a"), 10.0)
    assert vec.shape == (36,)
    assert vec[0] == pytest.approx(np.mean(window["b"]))
    with pytest.raises(SchemaError):
        extract_features(window, ("a", "c"), 10.0)


def test_schema_hash_depends_on_order():
    assert schema_hash(("a", "b")) != schema_hash(("b", "a"))


def test_feature_matrix_validation():
    with pytest.raises(SchemaError):
        FeatureMatrix(np.zeros((2, 3)), np.array([1, 1]), ("a", "b"))
    with pytest.raises(SchemaError):
        FeatureMatrix(np.zeros((2, 2)), np.array([1, 0]), ("a", "b"))
    with pytest.raises(SchemaError):
        FeatureMatrix(np.array([[0.0, math.inf]]), np.array([1]), ("a", "b"))


def test_build_and_persist_feature_matrix(tmp_path):
    rng = np.random.default_rng(4)
    segments = [
        SignalSegment({"F_t": rng.standard_normal(20)}, label, f"run{i}", 2.0 + i)
        for i, label in enumerate((-1, 1, 1))
    ]
    fm = build_feature_matrix(segments, ("F_t",), 10.0)
    assert fm.counts() == {-1: 1, 1: 2}
    extended = fm.extend(np.zeros((1, len(fm.names))), np.array([-1]))
    assert extended.synthetic.tolist() == [False, False, False, True]

    path = tmp_path / "features.csv"
    save_feature_matrix(path, extended, {"config_hash": "abc", "seed": 3})
    loaded, meta = load_feature_matrix(path)
    assert meta["config_hash"] == "abc"
    assert loaded.names == extended.names
    assert loaded.run_ids == extended.run_ids
    assert np.array_equal(loaded.y, extended.y)
    assert np.allclose(loaded.x, extended.x, rtol=0, atol=0)
    assert loaded.synthetic.tolist() == [False, False, False, True]


def test_load_rejects_tampered_schema(tmp_path):
    fm = FeatureMatrix(np.zeros((1, 2)), np.array([1]), ("a", "b"))
    path = tmp_path / "f.csv"
    save_feature_matrix(path, fm)
    text = path.read_text().replace("label,a,b", "label,b,a")
    path.write_text(text)
    with pytest.raises(SchemaError):
        load_feature_matrix(path)
