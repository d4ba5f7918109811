import logging

import numpy as np
import pytest

from kiteupset.closedloop import COMPLETED, INVALID, PREDICTOR_SIGNALS, RUPTURE, LimitFunction, RunLog
from kiteupset.errors import ConfigError
from kiteupset.segments import NOMINAL, UPSET, SegmentationConfig, segment_and_label, usable_for_training

LIMIT = LimitFunction(critical=2000.0)


def _log(duration=20.0, f_s=10.0, upset_at=None, outcome=COMPLETED):
    n = int(round(duration * f_s))
    times = np.arange(n) / f_s
    signals = {name: np.sin(times + i) for i, name in enumerate(PREDICTOR_SIGNALS)}
    force = np.full(n, 1500.0)
    if upset_at is not None:
        force[int(round(upset_at * f_s)) :] = 2100.0
    signals["F_t"] = force
    return RunLog(times, signals, [], outcome if upset_at is None else RUPTURE, {"theta_key": "abc"})


def test_nominal_run_segment_count():
    cfg = SegmentationConfig(window=5.0, stride=1.0)
    segments = segment_and_label(_log(), cfg, LIMIT)
    assert len(segments) == 16
    assert all(seg.label == NOMINAL for seg in segments)
    assert all(len(seg.signals["F_t"]) == 50 for seg in segments)
    assert segments[0].end_time == pytest.approx(19.9)


def test_upset_window_placement():
    cfg = SegmentationConfig(window=5.0, stride=0.5, reaction_shift=0.2)
    segments = segment_and_label(_log(upset_at=12.0), cfg, LIMIT)
    first = segments[0]
    assert first.label == UPSET
    assert first.end_time == pytest.approx(11.8)
    assert first.start_time == pytest.approx(6.9)
    assert np.all(first.signals["F_t"] < LIMIT.critical)
    assert [s.label for s in segments].count(UPSET) == 1
    assert all(s.label == NOMINAL for s in segments[1:])
    assert segments[1].end_time == pytest.approx(11.3)


def test_upset_too_early_yields_nothing(caplog):
    cfg = SegmentationConfig(window=5.0)
    with caplog.at_level(logging.WARNING):
        segments = segment_and_label(_log(upset_at=4.0), cfg, LIMIT)
    assert segments == []
    assert "no upset segment" in caplog.text


def test_run_id_defaults_to_theta_key():
    segments = segment_and_label(_log(), SegmentationConfig(), LIMIT)
    assert segments[0].run_id == "abc"
    assert segment_and_label(_log(), SegmentationConfig(), LIMIT, run_id="r1")[0].run_id == "r1"


def test_missing_signal_rejected():
    log = _log()
    del log.signals["alpha"]
    with pytest.raises(KeyError):
        segment_and_label(log, SegmentationConfig(), LIMIT)


def test_window_must_be_whole_samples():
    with pytest.raises(ConfigError):
        SegmentationConfig(window=5.05)
    with pytest.raises(ConfigError):
        SegmentationConfig(stride=6.0)


def test_invalid_runs_not_usable():
    assert usable_for_training(_log())
    assert not usable_for_training(_log(outcome=INVALID))
