import json

import numpy as np
import pytest

from kiteupset import campaign
from kiteupset.campaign import Campaign
from kiteupset.config import CampaignConfig, with_overrides
from kiteupset.errors import ConfigError
from kiteupset.io import read_csv, read_json, write_json


@pytest.fixture
def camp(tmp_path):
    return Campaign(CampaignConfig(), tmp_path, progress=False)


def test_stamp_carries_provenance(camp):
    meta = camp.stamp({"tag": "x"}, seed=9)
    assert meta["schema"] == campaign.ARTIFACT_SCHEMA
    assert meta["config_hash"] == camp.cfg.hash
    assert meta["seed"] == 9 and meta["tag"] == "x"


def test_json_safe_replaces_non_finite():
    assert campaign._json_safe({"a": float("inf"), "b": [1.0, float("nan")], "c": np.float64(2.0)}) == {
        "a": None,
        "b": [1.0, None],
        "c": 2.0,
    }


def test_draw_thetas_is_per_index_reproducible():
    cfg = CampaignConfig()
    a = campaign.draw_thetas(cfg, 3, seed=4)
    b = campaign.draw_thetas(cfg, 5, seed=4)
    assert a.shape == (3, cfg.simulation.dimension)
    assert np.array_equal(a, b[:3])
    assert not np.array_equal(a, campaign.draw_thetas(cfg, 3, seed=5))


def test_load_thetas(tmp_path):
    np.savez(tmp_path / "t.npz", thetas=np.zeros((2, 6)))
    assert campaign.load_thetas(tmp_path / "t.npz", 6).shape == (2, 6)
    with pytest.raises(ConfigError):
        campaign.load_thetas(tmp_path / "t.npz", 9)


def test_subsim_run_id_tracks_seed_and_physics():
    cfg = CampaignConfig()
    assert campaign.subsim_run_id(cfg, 1) == campaign.subsim_run_id(cfg, 1)
    assert campaign.subsim_run_id(cfg, 1) != campaign.subsim_run_id(cfg, 2)
    other = with_overrides(cfg, limit={"critical": 1800.0})
    assert campaign.subsim_run_id(other, 1) != campaign.subsim_run_id(cfg, 1)
    assert campaign.subsim_run_id(with_overrides(cfg, loss={"p_em": 0.1}), 1) == campaign.subsim_run_id(cfg, 1)


def test_evaluation_refuses_shared_subsim_run(camp):
    for tag in (campaign.TRAIN_TAG, campaign.EVAL_TAG):
        write_json(camp.path("subsim", tag, "result.json"), {"run_id": "same"})
    with pytest.raises(ConfigError, match="independent"):
        campaign.evaluate_stage(camp)


def test_simulate_writes_index_and_reuses_logs(short_cfg, tmp_path):
    camp = Campaign(short_cfg, tmp_path, progress=False)
    summary = campaign.simulate_runs(camp, zero_turbulence=True, name="calm")
    assert summary["runs"] == 1
    assert summary["outcomes"] == {"timeout": 1}
    meta, rows = read_csv(tmp_path / "runs" / "calm" / "index.csv")
    assert meta["config_hash"] == short_cfg.hash
    log_path = tmp_path / "runs" / "calm" / f"{rows[0]['run_id']}.jsonl"
    assert log_path.exists()
    before = log_path.stat().st_mtime_ns
    campaign.simulate_runs(camp, zero_turbulence=True, name="calm")
    assert log_path.stat().st_mtime_ns == before
    report = read_json(tmp_path / "reports" / "simulate_calm.json")
    assert report["power_kw"] == [None]


def test_loss_stage_ranks_against_no_predictor(camp):
    evaluation = camp.stamp(
        {
            "run_id": "abc",
            "p_f": 2e-7,
            "predictors": {
                "thr+8%": {"fn_conditional": 0.0, "fp_probability": 0.0048},
                "svm": {"fn_conditional": None, "fp_probability": 0.0},
            },
        }
    )
    write_json(camp.path("reports", "evaluation.json"), evaluation)
    out = campaign.loss_stage(camp)
    assert out["predictors"] == 2
    meta, rows = read_csv(camp.path("reports", "ranking.csv"))
    assert meta["eval_run_id"] == "abc"
    week = [r for r in rows if float(r["downtime_min"]) == 10080.0]
    assert [r["name"] for r in week] == ["thr+8%", "none"]
    assert float(week[1]["loss_rate"]) == pytest.approx(8.06e-4, rel=1e-3)
    loss = read_json(camp.path("reports", "loss.json"))
    assert loss["best"]["10080.0"] == "thr+8%"
    assert loss["breakdown"]["thr+8%"]["n_pc"] is None


def test_report_on_empty_campaign(camp):
    assert campaign.report_stage(camp)["sections"] == "none"
    summary = read_json(camp.path("reports", "summary.json"))
    assert summary["subsim"] == {}


def test_report_collects_subsim_levels(camp):
    write_json(camp.path("subsim", "train", "result.json"), {"p_f": 1e-6, "thresholds": [1200.0, 1500.0], "run_id": "r"})
    campaign.report_stage(camp)
    _, rows = read_csv(camp.path("reports", "level_thresholds.csv"))
    assert [(r["tag"], r["level"]) for r in rows] == [("train", "1"), ("train", "2")]


STAGE_FUNCTIONS = ("subsim_stage", "features_stage", "train_stage", "evaluate_stage", "loss_stage", "report_stage")


@pytest.fixture
def fake_stages(monkeypatch):
    calls = []
    for name in STAGE_FUNCTIONS:
        monkeypatch.setattr(campaign, name, lambda *args, _name=name, **kwargs: calls.append(_name))
    return calls


def test_pipeline_rerun_is_all_cache_hits(camp, fake_stages):
    first = campaign.pipeline(camp)
    assert set(first.values()) == {"built"}
    assert fake_stages.count("subsim_stage") == 2
    fake_stages.clear()
    second = campaign.pipeline(camp)
    assert set(second.values()) == {"hit"}
    assert fake_stages == []


def test_pipeline_rebuilds_downstream_of_a_change(camp, fake_stages, tmp_path):
    campaign.pipeline(camp)
    changed = Campaign(with_overrides(camp.cfg, training={"k_neighbors": 3}), tmp_path, progress=False)
    status = campaign.pipeline(changed)
    assert status["subsim_train"] == "hit" and status["subsim_eval"] == "hit"
    for stage in ("features", "train", "evaluate", "loss", "report"):
        assert status[stage] == "built"


def test_pipeline_rebuilds_on_stage_version_bump(camp, fake_stages, monkeypatch):
    campaign.pipeline(camp)
    monkeypatch.setitem(campaign.STAGE_VERSIONS, "train", campaign.STAGE_VERSIONS["train"] + 1)
    status = campaign.pipeline(camp)
    assert status["features"] == "hit"
    assert status["train"] == "built" and status["report"] == "built"


def test_synthetic_dataset_layout(rng):
    fm = campaign.make_synthetic_dataset(100, 0.1, 2, 3, 4.0, rng)
    assert fm.names == ("noise0", "noise1", "noise2", "informative0", "informative1")
    assert fm.counts() == {-1: 10, 1: 90}
    upset = fm.x[fm.y == -1]
    assert np.mean(upset[:, 3:]) > 2.0
    assert abs(np.mean(upset[:, :3])) < 1.0


@pytest.mark.slow
def test_synthetic_pipeline_end_to_end(tmp_path):
    cfg = with_overrides(
        CampaignConfig(),
        training={"selection": {"folds": 5, "c_grid": [10.0], "sigma2_scale_grid": [1.0], "max_features": 2}},
    )
    camp = Campaign(cfg, tmp_path, progress=False)
    out = campaign.synthetic_pipeline(camp, n_train=200, n_test=500, noise=4)
    assert out["mcc_test"] >= 0.9
    report = json.loads((tmp_path / "reports" / "synthetic.json").read_text())
    assert report["selected"][0].startswith("informative")
    assert report["config_hash"] == cfg.hash
    assert report["train_rows"] == 380
