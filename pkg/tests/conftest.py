from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from kiteupset.config import CampaignConfig, load_config, with_overrides

REPO_ROOT = Path(__file__).resolve().parents[1]
FIXTURES = Path(__file__).resolve().parent / "fixtures"


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def default_cfg() -> CampaignConfig:
    return load_config(REPO_ROOT / "configs" / "default.yaml")


@pytest.fixture(scope="session")
def smoke_cfg() -> CampaignConfig:
    return load_config(REPO_ROOT / "configs" / "smoke.yaml")


@pytest.fixture(scope="session")
def short_cfg() -> CampaignConfig:
    """Ten simulated seconds; enough to exercise the loop without a full cycle."""
    return with_overrides(
        CampaignConfig(),
        simulation={"t_sim": 10.0},
        segmentation={"window": 2.0},
    )


@pytest.fixture(scope="session")
def golden_dir() -> Path:
    return FIXTURES / "golden"
