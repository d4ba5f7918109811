"""Campaign stages over one output directory.

Layout: runs/, subsim/, features/, models/, reports/, stamps/. Every artifact records
the config hash, the seed it was produced with and a schema tag.
"""
from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .closedloop import (
    COMPLETED,
    CycleObjective,
    RunLog,
    average_cycle_power,
    evaluate_limit,
    first_upset_index,
    load_run_log,
    max_cross_track,
    run_pumping_cycle,
    save_run_log,
    theta_key,
)
from .config import CampaignConfig, to_dict, with_overrides
from .errors import ConfigError, SchemaError
from .features import FeatureMatrix, build_feature_matrix, load_feature_matrix, save_feature_matrix
from .io import canonical_json, read_csv, read_json, short_hash, write_csv, write_json
from .losseval import LossModelParams, fn_rate, fp_prob_counts, fp_prob_threshold, loss_breakdown, rank_predictors
from .predictor import OnlineSvmPredictor, ThresholdPredictor, threshold_family
from .scoring import ConfusionCounts, mcc
from .segments import segment_and_label, usable_for_training
from .selection import greedy_forward_select
from .smote import balance
from .subsim import LinearLimit, SubsetSimConfig, SubsetSimResult, level_table, run_subset_simulation
from .svm import load_model, save_model, train_svm
from .windfield import NoiseSeedVector
from .workpool import ordered_map

LOGGER = logging.getLogger(__name__)

ARTIFACT_SCHEMA = "kiteupset/1"
TRAIN_TAG = "train"
EVAL_TAG = "eval"

STAGE_VERSIONS = {
    "subsim_train": 1,
    "subsim_eval": 1,
    "features": 1,
    "train": 1,
    "evaluate": 1,
    "loss": 1,
    "report": 1,
}

_PHYSICS_SECTIONS = (
    "wind",
    "aircraft",
    "actuators",
    "tether",
    "winch",
    "path",
    "guidance",
    "control",
    "simulation",
    "limit",
)


@dataclass(frozen=True)
class Campaign:
    cfg: CampaignConfig
    root: Path
    workers: int = 1
    progress: bool = True
    overwrite: bool = False

    def path(self, *parts: str) -> Path:
        return self.root.joinpath(*parts)

    def stamp(self, extra: Optional[Dict[str, Any]] = None, seed: Optional[int] = None) -> Dict[str, Any]:
        meta = {"schema": ARTIFACT_SCHEMA, "config_hash": self.cfg.hash, "seed": self.cfg.seed if seed is None else seed}
        meta.update(extra or {})
        return meta


def _json_safe(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.generic):
        return _json_safe(value.item())
    return value


def theta_from_samples(samples: np.ndarray, cfg: CampaignConfig) -> NoiseSeedVector:
    return NoiseSeedVector(np.asarray(samples, dtype=float), cfg.simulation.channels, cfg.simulation.f_s)


def run_summary(log: RunLog, cfg: CampaignConfig) -> Dict[str, Any]:
    ev = evaluate_limit(log, cfg.limit)
    return {
        "run_id": log.meta["theta_key"],
        "outcome": log.outcome,
        "g": ev.g,
        "invalid": int(ev.invalid),
        "duration": float(log.times[-1]) if len(log) else 0.0,
        "power_kw": average_cycle_power(log) if log.outcome == COMPLETED else math.nan,
        "cross_track_max": max_cross_track(log),
    }


@dataclass(frozen=True)
class _SimulateTask:
    cfg: CampaignConfig
    out_dir: str
    seed: int
    overwrite: bool = False

    def log_for(self, samples: np.ndarray) -> RunLog:
        path = Path(self.out_dir) / f"{theta_key(samples)}.jsonl"
        if path.exists() and not self.overwrite:
            return load_run_log(path)
        log = run_pumping_cycle(theta_from_samples(samples, self.cfg), self.cfg)
        save_run_log(path, log, {"seed": self.seed})
        return log

    def __call__(self, samples: np.ndarray) -> Dict[str, Any]:
        return run_summary(self.log_for(samples), self.cfg)


def draw_thetas(cfg: CampaignConfig, n: int, seed: int) -> np.ndarray:
    dim = cfg.simulation.dimension
    rows = [np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,))).standard_normal(dim) for i in range(n)]
    return np.vstack(rows) if rows else np.zeros((0, dim))


def load_thetas(path: str | Path, dim: int) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".npz":
        with np.load(path) as data:
            if "thetas" not in data:
                raise SchemaError(f"{path}: no 'thetas' array")
            thetas = data["thetas"]
    else:
        thetas = np.load(path)
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    if thetas.shape[1] != dim:
        raise ConfigError(f"{path}: noise vectors have {thetas.shape[1]} entries, config needs {dim}")
    return thetas


def simulate_runs(
    camp: Campaign,
    n: Optional[int] = None,
    seed: Optional[int] = None,
    zero_turbulence: bool = False,
    theta_file: Optional[str] = None,
    scale: float = 1.0,
    name: str = "nominal",
) -> Dict[str, Any]:
    cfg = camp.cfg
    seed = cfg.seed if seed is None else seed
    if theta_file is not None:
        thetas = load_thetas(theta_file, cfg.simulation.dimension)
    elif zero_turbulence:
        thetas = np.zeros((1, cfg.simulation.dimension))
    else:
        thetas = draw_thetas(cfg, cfg.campaign.nominal_runs if n is None else n, seed)
    thetas = thetas * scale
    out_dir = camp.path("runs", name)
    task = _SimulateTask(cfg, str(out_dir), seed, camp.overwrite)
    rows = ordered_map(task, list(thetas), camp.workers, desc="simulate", progress=camp.progress)
    fields = ["run_id", "outcome", "g", "invalid", "duration", "power_kw", "cross_track_max"]
    write_csv(out_dir / "index.csv", rows, fields, camp.stamp(seed=seed))
    outcomes = Counter(r["outcome"] for r in rows)
    summary = camp.stamp(
        {
            "runs": len(rows),
            "outcomes": dict(sorted(outcomes.items())),
            "max_g": sorted(r["g"] for r in rows if not r["invalid"]),
            "power_kw": [r["power_kw"] for r in rows],
        },
        seed=seed,
    )
    write_json(camp.path("reports", f"simulate_{name}.json"), _json_safe(summary))
    return summary


# -- subset simulation ------------------------------------------------------------------


def subsim_run_id(cfg: CampaignConfig, seed: int) -> str:
    physics = {k: to_dict(getattr(cfg, k)) for k in _PHYSICS_SECTIONS}
    return short_hash(canonical_json({"physics": physics, "subsim": to_dict(replace(cfg.subsim, seed=seed))}))


def _write_subsim(out: Path, result: SubsetSimResult, meta: Dict[str, Any]) -> Dict[str, Any]:
    rows = level_table(result)
    fields = ["level", "threshold", "scaling", "acceptance", "chain_failures", "n_above_g_star", "invalid", "g_max", "g_median"]
    write_csv(out / "levels.csv", rows, fields, meta)
    failures = result.failure_thetas
    np.savez(
        out / "failures.npz",
        thetas=failures,
        g=result.failure_g,
        invalid=result.levels[-1].invalid[result.failure_mask],
        keys=np.array([theta_key(t) for t in failures], dtype=str),
    )
    payload = dict(meta)
    payload.update(
        {
            "p_f": result.p_f,
            "p_f_valid": result.p_f_valid,
            "m_s": result.m_s,
            "n_f": result.n_f,
            "n_samples": result.n_samples,
            "p_s": result.p_s,
            "g_star": result.g_star,
            "converged": result.converged,
            "invalid_count": result.invalid_count,
            "thresholds": result.thresholds,
            "acceptance": result.acceptance,
        }
    )
    write_json(out / "result.json", _json_safe(payload))
    return payload


def subsim_stage(camp: Campaign, tag: str, seed: int, n_samples: Optional[int] = None, p_s: Optional[float] = None, g_star: Optional[float] = None) -> Dict[str, Any]:
    cfg = camp.cfg
    overrides: Dict[str, Any] = {"seed": seed}
    if n_samples is not None:
        overrides["n_samples"] = n_samples
    if p_s is not None:
        overrides["p_s"] = p_s
    ss_cfg = SubsetSimConfig(**{**to_dict(cfg.subsim), **overrides})
    g_star = cfg.limit.critical if g_star is None else g_star
    out = camp.path("subsim", tag)
    run_id = subsim_run_id(cfg, seed)
    result = run_subset_simulation(
        CycleObjective(cfg),
        g_star,
        ss_cfg,
        cfg.simulation.dimension,
        checkpoint_dir=out / "checkpoint",
        workers=camp.workers,
        progress=camp.progress,
        tag=run_id,
    )
    return _write_subsim(out, result, camp.stamp({"tag": tag, "run_id": run_id}, seed=seed))


def benchmark_stage(
    out: Path,
    dim: int,
    beta: float,
    ss_cfg: SubsetSimConfig,
    workers: int = 1,
    progress: bool = False,
) -> Dict[str, Any]:
    from scipy import stats

    result = run_subset_simulation(LinearLimit(dim), beta, ss_cfg, dim, workers=workers, progress=progress)
    meta = {"schema": ARTIFACT_SCHEMA, "seed": ss_cfg.seed, "benchmark": "linear", "dim": dim, "beta": beta}
    payload = _write_subsim(out, result, meta)
    payload["p_f_exact"] = float(stats.norm.sf(beta))
    payload["ratio"] = payload["p_f"] / payload["p_f_exact"] if payload["p_f"] > 0 else None
    write_json(out / "result.json", _json_safe(payload))
    return payload


def _load_subsim(camp: Campaign, tag: str) -> Tuple[Dict[str, Any], np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    out = camp.path("subsim", tag)
    if not (out / "result.json").exists():
        raise ConfigError(f"no subset-simulation result under {out}; run `kiteupset subsim --tag {tag}` first")
    result = read_json(out / "result.json")
    with np.load(out / "checkpoint" / "level_00.npz") as level0:
        nominal_thetas, nominal_g, nominal_invalid = level0["thetas"], level0["g"], level0["invalid"]
    with np.load(out / "failures.npz") as failures:
        failure_thetas = failures["thetas"]
    return result, nominal_thetas, nominal_g, nominal_invalid, failure_thetas


def _unique_rows(thetas: np.ndarray) -> np.ndarray:
    seen = set()
    keep = []
    for i, t in enumerate(thetas):
        key = theta_key(t)
        if key not in seen:
            seen.add(key)
            keep.append(i)
    return thetas[keep] if keep else thetas[:0]


# -- features and training --------------------------------------------------------------


@dataclass(frozen=True)
class _FeatureTask:
    sim: _SimulateTask

    def __call__(self, samples: np.ndarray) -> Optional[FeatureMatrix]:
        cfg = self.sim.cfg
        log = self.sim.log_for(samples)
        if not usable_for_training(log):
            return None
        segments = segment_and_label(log, cfg.segmentation, cfg.limit)
        return build_feature_matrix(segments, cfg.segmentation.signals, cfg.segmentation.f_s, cfg.training.taus)


def features_stage(camp: Campaign, tag: str = TRAIN_TAG) -> Dict[str, Any]:
    cfg = camp.cfg
    result, nominal, _, _, failures = _load_subsim(camp, tag)
    thetas = np.vstack([nominal[: cfg.campaign.nominal_runs], _unique_rows(failures)])
    thetas = _unique_rows(thetas)
    task = _FeatureTask(_SimulateTask(cfg, str(camp.path("runs", tag)), int(result["seed"]), camp.overwrite))
    parts = ordered_map(task, list(thetas), camp.workers, desc="features", progress=camp.progress)
    skipped = sum(p is None for p in parts)
    if skipped:
        LOGGER.info("features: %d invalid run(s) skipped", skipped)
    kept = [p for p in parts if p is not None and len(p)]
    if not kept:
        raise ValueError(f"no segments extracted for tag {tag!r}")
    fm = FeatureMatrix(
        np.vstack([p.x for p in kept]),
        np.concatenate([p.y for p in kept]),
        kept[0].names,
        tuple(r for p in kept for r in p.run_ids),
        np.concatenate([p.end_times for p in kept]),
        np.concatenate([p.synthetic for p in kept]),
    )
    meta = camp.stamp({"tag": tag, "run_id": result["run_id"]}, seed=int(result["seed"]))
    save_feature_matrix(camp.path("features", f"{tag}.csv"), fm, meta)
    counts = fm.counts()
    return {"segments": len(fm), "upset": counts[-1], "nominal": counts[1], "skipped_runs": skipped, "features": len(fm.names)}


def train_on_matrix(fm: FeatureMatrix, cfg: CampaignConfig, progress: bool = False) -> Tuple[Any, FeatureMatrix, Any]:
    rng = np.random.default_rng(np.random.SeedSequence(cfg.training.smote_seed))
    balanced = balance(fm, cfg.training.k_neighbors, rng, cfg.training.balance_ratio)
    selection = greedy_forward_select(balanced.x, balanced.y, balanced.names, cfg.training.selection, progress=progress)
    if not selection.selected:
        raise ValueError("feature selection selected nothing")
    model = train_svm(
        balanced.x,
        balanced.y,
        selection.sigma2,
        selection.c,
        cfg.training.selection.tolerance,
        balanced.names,
        selection.selected,
    )
    return model, balanced, selection


def train_stage(camp: Campaign, tag: str = TRAIN_TAG) -> Dict[str, Any]:
    cfg = camp.cfg
    fm, meta = load_feature_matrix(camp.path("features", f"{tag}.csv"))
    model, balanced, selection = train_on_matrix(fm, cfg, camp.progress)
    stamp = camp.stamp({"tag": tag, "run_id": meta.get("run_id", "")}, seed=cfg.training.smote_seed)
    save_feature_matrix(camp.path("features", f"{tag}_balanced.csv"), balanced, stamp)
    save_model(camp.path("models", "svm.json"), model, stamp)
    write_json(
        camp.path("models", "selection.json"),
        _json_safe({**stamp, "selected": selection.names, "trace": selection.trace, "sigma2": selection.sigma2, "c": selection.c, "rounds": selection.rounds}),
    )
    write_csv(
        camp.path("models", "selection_trace.csv"),
        [{"round": i + 1, "feature": name, "mcc": value} for i, (name, value) in enumerate(zip(selection.names, selection.trace))],
        ["round", "feature", "mcc"],
        stamp,
    )
    return {"selected": ",".join(selection.names), "mcc": selection.mcc, "support_vectors": model.n_support}


# -- evaluation ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _ReplayTask:
    cfg: CampaignConfig
    post_window: float

    def __call__(self, job: Tuple[np.ndarray, Any, Optional[float]]) -> Dict[str, Any]:
        samples, predictor, t_upset = job
        log = run_pumping_cycle(theta_from_samples(samples, self.cfg), self.cfg, predictor=predictor, avoidance=True)
        trigger = log.first_event("avoidance_trigger")
        row: Dict[str, Any] = {
            "run_id": theta_key(samples),
            "predictor": getattr(predictor, "name", "predictor"),
            "outcome": log.outcome,
            "triggered": int(trigger is not None),
            "trigger_t": trigger.t if trigger is not None else math.nan,
            "upset_t": math.nan if t_upset is None else t_upset,
        }
        caught = trigger is not None and (t_upset is None or trigger.t <= t_upset)
        row["caught"] = int(caught)
        row["lead_time"] = (t_upset - trigger.t) if (caught and t_upset is not None) else math.nan
        if trigger is not None:
            mask = (log.times >= trigger.t) & (log.times <= trigger.t + self.post_window)
            row["min_force_after"] = float(np.min(log.signals["F_t"][mask])) if np.any(mask) else math.nan
        else:
            row["min_force_after"] = math.nan
        return row


def _predictors(camp: Campaign, nominal_max: np.ndarray) -> List[Any]:
    cfg = camp.cfg
    ev = cfg.evaluation
    family: List[Any] = threshold_family(cfg.guidance.force_traction, ev.threshold_percents, nominal_max, ev.quantile)
    model_path = camp.path("models", "svm.json")
    if model_path.exists():
        model = load_model(model_path)
        family.append(
            OnlineSvmPredictor(
                model,
                cfg.segmentation.signals,
                cfg.segmentation.window_samples,
                cfg.segmentation.f_s,
                cfg.training.taus,
            )
        )
    else:
        LOGGER.warning("no trained model at %s; evaluating threshold predictors only", model_path)
    return family


def _check_independent(camp: Campaign, eval_tag: str, train_tag: str) -> None:
    train_result = camp.path("subsim", train_tag, "result.json")
    if not train_result.exists():
        return
    if read_json(train_result)["run_id"] == read_json(camp.path("subsim", eval_tag, "result.json"))["run_id"]:
        raise ConfigError(
            f"subset-simulation runs {train_tag!r} and {eval_tag!r} are identical; "
            "evaluation needs a run independent of training"
        )


def evaluate_stage(camp: Campaign, tag: str = EVAL_TAG, train_tag: str = TRAIN_TAG) -> Dict[str, Any]:
    cfg = camp.cfg
    ev_cfg = cfg.evaluation
    _check_independent(camp, tag, train_tag)
    result, nominal, nominal_g, nominal_invalid, failures = _load_subsim(camp, tag)
    g_star = cfg.limit.critical
    valid = ~nominal_invalid
    nominal_max = nominal_g[valid]
    p_f = float(result["p_f"]) if cfg.loss.p_f is None else cfg.loss.p_f

    upsets = _unique_rows(failures)
    if ev_cfg.max_upset_replays is not None:
        upsets = upsets[: ev_cfg.max_upset_replays]
    sim = _SimulateTask(cfg, str(camp.path("runs", tag)), int(result["seed"]), camp.overwrite)
    baselines = ordered_map(sim.log_for, list(upsets), camp.workers, desc="baselines", progress=camp.progress)
    upset_times = []
    for log in baselines:
        idx = first_upset_index(log, cfg.limit)
        upset_times.append(None if idx is None else float(log.times[idx]))

    clean = nominal[valid & (nominal_g < g_star)][: ev_cfg.nominal_replays]
    predictors = _predictors(camp, nominal_max)
    replay = _ReplayTask(cfg, ev_cfg.post_trigger_window)
    jobs: List[Tuple[np.ndarray, Any, Optional[float]]] = []
    for pred in predictors:
        jobs.extend((theta, pred, t) for theta, t in zip(upsets, upset_times) if t is not None)
        if isinstance(pred, OnlineSvmPredictor):
            jobs.extend((theta, pred, None) for theta in clean)
    rows = ordered_map(replay, jobs, camp.workers, desc="replays", progress=camp.progress)

    report: Dict[str, Any] = camp.stamp({"tag": tag, "run_id": result["run_id"], "p_f": p_f, "predictors": {}}, seed=int(result["seed"]))
    for pred in predictors:
        name = pred.name
        upset_rows = [r for r in rows if r["predictor"] == name and math.isfinite(r["upset_t"])]
        n_tp = sum(r["caught"] for r in upset_rows)
        n_fn = len(upset_rows) - n_tp
        if isinstance(pred, ThresholdPredictor):
            fp = fp_prob_threshold(nominal_max, pred.q_star, p_f)
            fp_source = "cdf"
        else:
            nominal_rows = [r for r in rows if r["predictor"] == name and not math.isfinite(r["upset_t"])]
            fp = fp_prob_counts(sum(r["triggered"] for r in nominal_rows), len(nominal_rows))
            fp_source = "replays"
        entry: Dict[str, Any] = {
            "kind": "threshold" if isinstance(pred, ThresholdPredictor) else "svm",
            "q_star": getattr(pred, "q_star", None),
            "n_tp": n_tp,
            "n_fn": n_fn,
            "fn_conditional": n_fn / (n_tp + n_fn) if upset_rows else None,
            "lambda_fn": fn_rate(n_fn, n_tp, p_f) if upset_rows else None,
            "fp_probability": fp,
            "fp_source": fp_source,
            "avoidance": _avoidance_stats(upset_rows),
        }
        report["predictors"][name] = entry
    fields = ["run_id", "predictor", "outcome", "triggered", "caught", "trigger_t", "upset_t", "lead_time", "min_force_after"]
    write_csv(camp.path("reports", "replays.csv"), rows, fields, camp.stamp(seed=int(result["seed"])))
    write_json(camp.path("reports", "evaluation.json"), _json_safe(report))
    return {"predictors": len(predictors), "upset_replays": len(upsets), "nominal_replays": len(clean), "p_f": p_f}


def _avoidance_stats(rows: Sequence[Dict[str, Any]]) -> Dict[str, Any]:
    if not rows:
        return {"replays": 0}
    lead = [r["lead_time"] for r in rows if math.isfinite(r["lead_time"])]
    force = [r["min_force_after"] for r in rows if math.isfinite(r["min_force_after"])]
    return {
        "replays": len(rows),
        "triggered": sum(r["triggered"] for r in rows),
        "lead_time_mean": float(np.mean(lead)) if lead else None,
        "min_force_after_mean": float(np.mean(force)) if force else None,
        "outcomes": dict(sorted(Counter(r["outcome"] for r in rows).items())),
    }


# -- loss ------------------------------------------------------------------------------


def loss_entries(evaluation: Dict[str, Any], cfg: CampaignConfig) -> List[Tuple[str, LossModelParams]]:
    p_f = float(evaluation["p_f"])
    base = dict(p_em=cfg.loss.p_em, p_pc=cfg.loss.p_pc, t_pc=cfg.loss.t_pc, e_misc=cfg.loss.e_misc, p_f=p_f)
    entries = [("none", LossModelParams(fn_conditional=1.0, fp_probability=0.0, **base))]
    for name, entry in sorted(evaluation["predictors"].items()):
        if entry["fn_conditional"] is None:
            LOGGER.warning("predictor %s has no upset replays; left out of the ranking", name)
            continue
        entries.append((name, LossModelParams(fn_conditional=entry["fn_conditional"], fp_probability=entry["fp_probability"], **base)))
    return entries


RANKING_FIELDS = ["downtime_min", "rank", "name", "loss_rate", "lambda_fn", "lambda_fp", "n_pc", "n_fp", "n_mpc", "e_fp_rel", "e_fn_rel"]


def loss_stage(camp: Campaign) -> Dict[str, Any]:
    evaluation = read_json(camp.path("reports", "evaluation.json"))
    entries = loss_entries(evaluation, camp.cfg)
    rows = rank_predictors(entries, camp.cfg.loss.downtimes_min)
    stamp = camp.stamp({"eval_run_id": evaluation.get("run_id")}, seed=evaluation.get("seed"))
    write_csv(camp.path("reports", "ranking.csv"), rows, RANKING_FIELDS, stamp)
    best = {}
    for row in rows:
        if row["rank"] == 1:
            best[str(row["downtime_min"])] = row["name"]
    write_json(
        camp.path("reports", "loss.json"),
        _json_safe({**stamp, "best": best, "breakdown": {name: loss_breakdown(p) for name, p in entries}}),
    )
    return {"predictors": len(entries), "downtimes": len(camp.cfg.loss.downtimes_min)}


# -- transition bandwidth sweep ---------------------------------------------------------------


def sweep_stage(camp: Campaign, multiples: Optional[Sequence[float]] = None, with_subsim: bool = False) -> List[Dict[str, Any]]:
    cfg = camp.cfg
    multiples = list(cfg.campaign.bandwidth_multiples if multiples is None else multiples)
    rows: List[Dict[str, Any]] = []
    reference: Optional[float] = None
    for m in multiples:
        cfg_m = with_overrides(cfg, path={"omega_r": cfg.path.omega_r * m})
        log = run_pumping_cycle(theta_from_samples(np.zeros(cfg.simulation.dimension), cfg), cfg_m)
        power = average_cycle_power(log) if log.outcome == COMPLETED else math.nan
        if reference is None:
            reference = power
        row: Dict[str, Any] = {
            "multiple": float(m),
            "omega_r": cfg_m.path.omega_r,
            "outcome": log.outcome,
            "duration": float(log.times[-1]) if len(log) else 0.0,
            "power_kw": power,
            "gain_rel": (power / reference - 1.0) if reference and math.isfinite(reference) else math.nan,
        }
        if with_subsim:
            sub = Campaign(cfg_m, camp.root, camp.workers, camp.progress, camp.overwrite)
            row["p_f"] = subsim_stage(sub, f"sweep_{m:g}", cfg.campaign.eval_seed)["p_f"]
        rows.append(row)
    fields = ["multiple", "omega_r", "outcome", "duration", "power_kw", "gain_rel"] + (["p_f"] if with_subsim else [])
    write_csv(camp.path("reports", "bandwidth_sweep.csv"), rows, fields, camp.stamp())
    return rows


# -- report -------------------------------------------------------------------------------


def report_stage(camp: Campaign) -> Dict[str, Any]:
    summary: Dict[str, Any] = camp.stamp({"subsim": {}, "sections": []})
    thresholds: List[Dict[str, Any]] = []
    for result_path in sorted(camp.root.glob("subsim/*/result.json")):
        tag = result_path.parent.name
        result = read_json(result_path)
        summary["subsim"][tag] = {k: result.get(k) for k in ("p_f", "p_f_valid", "m_s", "n_f", "converged", "invalid_count", "seed", "run_id")}
        for level, value in enumerate(result.get("thresholds") or [], start=1):
            thresholds.append({"tag": tag, "level": level, "threshold": value})
    write_csv(camp.path("reports", "level_thresholds.csv"), thresholds, ["tag", "level", "threshold"], camp.stamp())

    eval_level0 = camp.path("subsim", EVAL_TAG, "checkpoint", "level_00.npz")
    if eval_level0.exists():
        with np.load(eval_level0) as data:
            g = np.sort(data["g"][~data["invalid"]])
        cdf = [{"g": float(v), "cdf": (i + 1) / g.size} for i, v in enumerate(g)]
        write_csv(camp.path("reports", "max_g_cdf.csv"), cdf, ["g", "cdf"], camp.stamp())
        summary["sections"].append("max_g_cdf")

    selection_path = camp.path("models", "selection.json")
    if selection_path.exists():
        selection = read_json(selection_path)
        summary["selection"] = {"selected": selection["selected"], "trace": selection["trace"]}
        summary["sections"].append("selection")

    evaluation_path = camp.path("reports", "evaluation.json")
    if evaluation_path.exists():
        evaluation = read_json(evaluation_path)
        summary["evaluation"] = evaluation["predictors"]
        summary["sections"].append("evaluation")

    ranking_path = camp.path("reports", "ranking.csv")
    if ranking_path.exists():
        _, rows = read_csv(ranking_path)
        write_csv(camp.path("reports", "loss_curves.csv"), rows, ["downtime_min", "name", "loss_rate"], camp.stamp())
        summary["sections"].append("loss_curves")

    write_json(camp.path("reports", "summary.json"), _json_safe(summary))
    return {"sections": ",".join(summary["sections"]) or "none", "subsim_runs": len(summary["subsim"])}


# -- pipeline ------------------------------------------------------------------------------


def _stage_key(camp: Campaign, stage: str, sections: Sequence[str], upstream: Sequence[str]) -> str:
    data = to_dict(camp.cfg)
    payload = {
        "stage": stage,
        "version": STAGE_VERSIONS[stage],
        "sections": {s: data[s] for s in sections},
        "upstream": list(upstream),
    }
    return short_hash(canonical_json(payload))


def _cached(camp: Campaign, stage: str, key: str, fn: Callable[[], Any]) -> bool:
    """Run `fn` unless the stage stamp already records `key`; True on a cache hit."""
    stamp_path = camp.path("stamps", f"{stage}.json")
    if stamp_path.exists() and not camp.overwrite:
        if read_json(stamp_path).get("key") == key:
            LOGGER.info("stage %s: cache hit", stage)
            return True
    fn()
    write_json(stamp_path, {"stage": stage, "version": STAGE_VERSIONS[stage], "key": key, "config_hash": camp.cfg.hash})
    return False


def pipeline(camp: Campaign) -> Dict[str, str]:
    cfg = camp.cfg
    physics = _PHYSICS_SECTIONS + ("subsim", "campaign")
    status: Dict[str, str] = {}

    def run(stage: str, sections: Sequence[str], upstream: Sequence[str], fn: Callable[[], Any]) -> str:
        key = _stage_key(camp, stage, sections, upstream)
        status[stage] = "hit" if _cached(camp, stage, key, fn) else "built"
        return key

    k_train = run("subsim_train", physics, [], lambda: subsim_stage(camp, TRAIN_TAG, cfg.campaign.train_seed))
    k_eval = run("subsim_eval", physics, [], lambda: subsim_stage(camp, EVAL_TAG, cfg.campaign.eval_seed))
    k_feat = run("features", ("segmentation", "training"), [k_train], lambda: features_stage(camp, TRAIN_TAG))
    k_model = run("train", ("training",), [k_feat], lambda: train_stage(camp, TRAIN_TAG))
    k_evaluate = run("evaluate", ("evaluation", "loss"), [k_model, k_eval], lambda: evaluate_stage(camp, EVAL_TAG, TRAIN_TAG))
    k_loss = run("loss", ("loss",), [k_evaluate], lambda: loss_stage(camp))
    run("report", (), [k_train, k_eval, k_loss], lambda: report_stage(camp))
    return status


# -- synthetic dataset mode ---------------------------------------------------------------------


def make_synthetic_dataset(
    n: int,
    minority_share: float,
    informative: int,
    noise: int,
    separation: float,
    rng: np.random.Generator,
) -> FeatureMatrix:
    """Two Gaussian classes; upsets are shifted by `separation` on the informative columns,
    which come last."""
    n_min = max(2, int(round(n * minority_share)))
    n_maj = n - n_min
    dim = noise + informative
    x = rng.standard_normal((n, dim))
    y = np.concatenate([np.ones(n_maj, dtype=int), -np.ones(n_min, dtype=int)])
    x[n_maj:, noise:] += separation
    names = tuple(f"noise{i}" for i in range(noise)) + tuple(f"informative{i}" for i in range(informative))
    return FeatureMatrix(x, y, names)


def synthetic_pipeline(
    camp: Campaign,
    n_train: int = 400,
    n_test: int = 2000,
    minority_share: float = 0.05,
    informative: int = 2,
    noise: int = 20,
    separation: float = 4.0,
) -> Dict[str, Any]:
    cfg = camp.cfg
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(7,)))
    train = make_synthetic_dataset(n_train, minority_share, informative, noise, separation, rng)
    test = make_synthetic_dataset(n_test, minority_share, informative, noise, separation, rng)
    model, balanced, selection = train_on_matrix(train, cfg, camp.progress)
    y_hat = np.where(model.decision(test.x) >= 0.0, 1, -1)
    counts = ConfusionCounts.from_labels(test.y, y_hat)
    report = camp.stamp(
        {
            "mode": "synthetic",
            "selected": selection.names,
            "trace": selection.trace,
            "counts": counts.to_dict(),
            "mcc_test": mcc(counts),
            "train_rows": len(balanced),
        }
    )
    write_json(camp.path("reports", "synthetic.json"), _json_safe(report))
    return {"selected": ",".join(selection.names), "mcc_test": report["mcc_test"]}
