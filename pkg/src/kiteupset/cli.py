from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

from . import campaign
from .config import CampaignConfig, load_config, with_overrides
from .errors import ConfigError, NumericalFailure, SchemaError
from .subsim import SubsetSimConfig
from .workpool import resolve_workers

LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3

DEFAULT_CONFIG = "configs/default.yaml"


def _summary(command: str, values: Dict[str, Any]) -> str:
    parts = [f"command={command}"]
    for key, value in values.items():
        if isinstance(value, float):
            value = f"{value:.6g}" if math.isfinite(value) else str(value)
        parts.append(f"{key}={value}")
    return " ".join(parts)


def _campaign(args: argparse.Namespace, cfg: Optional[CampaignConfig] = None) -> campaign.Campaign:
    cfg = cfg if cfg is not None else load_config(args.config or DEFAULT_CONFIG)
    root = Path(args.out) if args.out else Path(cfg.outdir)
    return campaign.Campaign(
        cfg=cfg,
        root=root,
        workers=resolve_workers(args.workers),
        progress=not args.quiet,
        overwrite=args.overwrite,
    )


def cmd_simulate(args: argparse.Namespace) -> Dict[str, Any]:
    camp = _campaign(args)
    summary = campaign.simulate_runs(
        camp,
        n=args.runs,
        seed=args.seed,
        zero_turbulence=args.zero_turbulence,
        theta_file=args.theta_file,
        scale=args.scale,
        name=args.name,
    )
    out: Dict[str, Any] = {"runs": summary["runs"], "config_hash": summary["config_hash"]}
    out.update({f"n_{k}": v for k, v in summary["outcomes"].items()})
    return out


def cmd_subsim(args: argparse.Namespace) -> Dict[str, Any]:
    if args.benchmark:
        base = load_config(args.config).subsim if args.config else SubsetSimConfig()
        ss_cfg = replace(
            base,
            n_samples=args.n_samples or base.n_samples,
            p_s=args.p0 or base.p_s,
            seed=base.seed if args.seed is None else args.seed,
        )
        out = Path(args.out or "campaign") / "subsim" / (args.tag or "benchmark")
        if args.dry_run:
            return {"dry_run": 1, "dim": args.dim, "beta": args.beta, "n_samples": ss_cfg.n_samples}
        result = campaign.benchmark_stage(out, args.dim, args.beta, ss_cfg, resolve_workers(args.workers), not args.quiet)
        return {"p_f": result["p_f"], "p_f_exact": result["p_f_exact"], "m_s": result["m_s"], "n_f": result["n_f"]}

    camp = _campaign(args)
    cfg = camp.cfg
    tag = args.tag or campaign.TRAIN_TAG
    if args.seed is not None:
        seed = args.seed
    else:
        seed = cfg.campaign.eval_seed if tag == campaign.EVAL_TAG else cfg.campaign.train_seed
    if args.dry_run:
        ss_cfg = replace(cfg.subsim, n_samples=args.n_samples or cfg.subsim.n_samples, p_s=args.p0 or cfg.subsim.p_s, seed=seed)
        return {
            "dry_run": 1,
            "n_samples": ss_cfg.n_samples,
            "p_s": ss_cfg.p_s,
            "config_hash": cfg.hash,
            "dim": cfg.simulation.dimension,
            "g_star": cfg.limit.critical if args.gstar is None else args.gstar,
        }
    result = campaign.subsim_stage(camp, tag, seed, args.n_samples, args.p0, args.gstar)
    return {
        "tag": tag,
        "seed": seed,
        "p_f": result["p_f"],
        "p_f_valid": result["p_f_valid"],
        "m_s": result["m_s"],
        "n_f": result["n_f"],
        "invalid": result["invalid_count"],
        "converged": int(result["converged"]),
    }


def cmd_features(args: argparse.Namespace) -> Dict[str, Any]:
    return campaign.features_stage(_campaign(args), args.tag)


def cmd_train(args: argparse.Namespace) -> Dict[str, Any]:
    return campaign.train_stage(_campaign(args), args.tag)


def cmd_evaluate(args: argparse.Namespace) -> Dict[str, Any]:
    return campaign.evaluate_stage(_campaign(args), args.tag, args.train_tag)


def cmd_loss(args: argparse.Namespace) -> Dict[str, Any]:
    camp = _campaign(args)
    if args.downtimes:
        camp = campaign.Campaign(
            with_overrides(camp.cfg, loss={"downtimes_min": list(args.downtimes)}),
            camp.root,
            camp.workers,
            camp.progress,
            camp.overwrite,
        )
    return campaign.loss_stage(camp)


def cmd_report(args: argparse.Namespace) -> Dict[str, Any]:
    return campaign.report_stage(_campaign(args))


def cmd_sweep(args: argparse.Namespace) -> Dict[str, Any]:
    rows = campaign.sweep_stage(_campaign(args), args.multiples, args.subsim)
    out: Dict[str, Any] = {"multiples": len(rows)}
    for row in rows:
        out[f"power_kw@{row['multiple']:g}"] = row["power_kw"]
    return out


def cmd_pipeline(args: argparse.Namespace) -> Dict[str, Any]:
    camp = _campaign(args)
    if args.synthetic:
        return campaign.synthetic_pipeline(camp)
    return campaign.pipeline(camp)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kiteupset", description="Rare upset generation, prediction and loss ranking.")
    ap.add_argument("--log-level", default="WARNING", help="Python logging level")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help=f"Campaign YAML file (default: {DEFAULT_CONFIG})")
    common.add_argument("--out", default=None, help="Campaign directory (default: outdir from the config)")
    common.add_argument("--workers", type=int, default=None, help="Worker processes (default: KITEUPSET_WORKERS or 1)")
    common.add_argument("--quiet", action="store_true", help="Disable progress bars")
    common.add_argument("--overwrite", action="store_true", help="Recompute existing per-run files")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="Run pumping cycles and write run logs")
    p.add_argument("--runs", type=int, default=None, help="Number of runs (default: campaign.nominal_runs)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--zero-turbulence", action="store_true", help="One run with all noise samples zero")
    p.add_argument("--theta-file", default=None, help=".npy or .npz (key 'thetas') with noise vectors")
    p.add_argument("--scale", type=float, default=1.0, help="Multiply every noise vector by this factor")
    p.add_argument("--name", default="nominal", help="Subdirectory under runs/")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("subsim", parents=[common], help="Subset simulation of the upset probability")
    p.add_argument("--tag", default=None, help="Run name under subsim/ (default: train)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n-samples", type=int, default=None)
    p.add_argument("--p0", type=float, default=None, help="Level probability p_s")
    p.add_argument("--gstar", type=float, default=None, help="Critical value (default: limit.critical)")
    p.add_argument("--dry-run", action="store_true", help="Validate inputs and stop")
    p.add_argument("--benchmark", action="store_true", help="Linear limit function with a known tail")
    p.add_argument("--dim", type=int, default=100)
    p.add_argument("--beta", type=float, default=3.0)
    p.set_defaults(func=cmd_subsim)

    p = sub.add_parser("features", parents=[common], help="Segment runs and extract features")
    p.add_argument("--tag", default=campaign.TRAIN_TAG)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", parents=[common], help="SMOTE, feature selection and SVM training")
    p.add_argument("--tag", default=campaign.TRAIN_TAG)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="Replay upsets with each predictor")
    p.add_argument("--tag", default=campaign.EVAL_TAG)
    p.add_argument("--train-tag", default=campaign.TRAIN_TAG)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("loss", parents=[common], help="Rank predictors by expected energy loss")
    p.add_argument("--downtimes", type=float, nargs="+", default=None, help="Downtimes in minutes")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("report", parents=[common], help="Collect summaries and plot data")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sweep", parents=[common], help="Transition-bandwidth sweep")
    p.add_argument("--multiples", type=float, nargs="+", default=None)
    p.add_argument("--subsim", action="store_true", help="Also estimate p_f per multiple")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("pipeline", parents=[common], help="All stages with content-hash caching")
    p.add_argument("--synthetic", action="store_true", help="Run selection and training on a synthetic dataset")
    p.set_defaults(func=cmd_pipeline)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        values = args.func(args)
    except NumericalFailure as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, SchemaError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        where = f"{e.filename}: " if e.filename else ""
        print(f"error: {where}{e.strerror or e}", file=sys.stderr)
        return EXIT_INVALID
    print(_summary(args.command, values))
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
