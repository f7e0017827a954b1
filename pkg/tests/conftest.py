"""Shared fixtures: a small generated dataset reused across module tests."""

import pytest

from relapsense import pipeline
from relapsense.config import PipelineConfig


@pytest.fixture(scope="session")
def small_cfg() -> PipelineConfig:
    cfg = PipelineConfig()
    cfg.generator.n_subjects = 2
    cfg.generator.n_days = 30
    cfg.generator.relapse_fraction = 0.15
    cfg.generator.seed = 7
    cfg.seed = 7
    return cfg


@pytest.fixture(scope="session")
def small_run(tmp_path_factory, small_cfg):
    """Generated raw data + extracted features for a 2-subject month."""
    root = tmp_path_factory.mktemp("small")
    raw = root / "raw"
    feats = root / "feats"
    pipeline.run_generate(small_cfg, raw)
    pipeline.run_extract(small_cfg, raw, feats)
    return {"cfg": small_cfg, "raw": raw, "features": feats}
