#!/usr/bin/env python3
"""
Freeze regression values of the zero-turbulence pumping cycle under tests/fixtures/golden.
"""

from __future__ import annotations

import argparse
import logging
from pathlib import Path

from kiteupset.config import load_config
from kiteupset.golden import DEFAULT_AVOID_PERCENT, freeze
from kiteupset.io import read_json

LOGGER = logging.getLogger("freeze_golden")

REPO_ROOT = Path(__file__).resolve().parents[1]


def main() -> int:
    ap = argparse.ArgumentParser(description="Freeze golden regression values of the calm pumping cycle.")
    ap.add_argument("--config", default=str(REPO_ROOT / "configs" / "default.yaml"))
    ap.add_argument("--out", default=str(REPO_ROOT / "tests" / "fixtures" / "golden"))
    ap.add_argument(
        "--avoid-percent",
        type=float,
        default=DEFAULT_AVOID_PERCENT,
        help="Threshold predictor at force_traction * (1 + p/100)",
    )
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    cfg = load_config(args.config)
    paths = freeze(cfg, args.out, args.avoid_percent)
    calm = read_json(paths["calm"])
    avoidance = read_json(paths["avoidance"])
    LOGGER.info("calm cycle: %s, %d samples, %s kW", calm["outcome"], calm["samples"], calm["power_kw"])
    LOGGER.info("avoidance cycle: %s, trigger at %s", avoidance["outcome"], avoidance["trigger_t"])
    print(f"Wrote {paths['calm']} and {paths['avoidance']}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
