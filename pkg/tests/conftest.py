"""Shared fixtures for the test suite."""
import os
import sys

project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, project_root)

import numpy as np
import pytest

from src.models.run_config import HFDOConfig, MCAConfig, ModelConfig, RunConfig, TrainConfig


@pytest.fixture
def rng():
    """Seeded generator so every test sees the same data."""
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_model_config():
    """16 channels, 8 groups (one scan head), 4 disparity bins."""
    return ModelConfig(
        feature_channels=16,
        groups=8,
        max_disparity=16,
        mca=MCAConfig(state_dim=4),
        hfdo=HFDOConfig(context_channels=4),
    )


@pytest.fixture
def tiny_run_config(tiny_model_config, tmp_path):
    return RunConfig(
        model=tiny_model_config,
        train=TrainConfig(crop_height=32, crop_width=64, steps=3, lr=1e-3, seed=7),
        paths={"checkpoint": str(tmp_path / "tiny.ckpt"), "output_dir": str(tmp_path / "out")},
    )


def away_from_zero(a, margin=0.1):
    """Push values away from kinks at 0 so finite differences stay on one branch."""
    return np.where(a >= 0, a + margin, a - margin)
