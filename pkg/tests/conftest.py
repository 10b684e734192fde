from __future__ import annotations

import numpy as np
import pytest

from momentrl.config import config_from_dict
from momentrl.synth import generate_dataset
from momentrl.system import build_system

TINY_CONFIG = {
    "seed": 7,
    "dataset": {
        "n_train": 6,
        "n_val": 8,
        "n_test": 8,
        "oos_fraction": 0.5,
        "n_frames": 16,
        "d_v": 6,
        "d_q": 4,
        "signal_noise_sigma": 0.3,
        "seed": 11,
    },
    "model": {
        "encoder_hidden": 8,
        "encoder_pool": 4,
        "local_dim": 6,
        "loc_dim": 4,
        "obs_dim": 10,
        "policy_hidden": 8,
        "fusion_evi_dim": 6,
        "fusion_iou_dim": 3,
        "fusion_loc_dim": 3,
        "fusion_hidden": 6,
    },
    "training": {"epochs": 1},
}


@pytest.fixture(scope="session")
def tiny_cfg():
    return config_from_dict(TINY_CONFIG)


@pytest.fixture(scope="session")
def tiny_splits(tiny_cfg):
    return generate_dataset(tiny_cfg.dataset)


@pytest.fixture(scope="session")
def tiny_system(tiny_cfg):
    return build_system(tiny_cfg)


@pytest.fixture()
def rng():
    return np.random.default_rng(123)
