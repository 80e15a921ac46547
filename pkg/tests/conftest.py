import copy
import pytest

from dual_level_forecaster.importers.synthetic import SyntheticSpec, synthetic_dataset
from dual_level_forecaster.model.predictor import PredictorConfig
from dual_level_forecaster.objectives.losses import LossConfig
from dual_level_forecaster.objectives.discriminators import DiscriminatorConfig
from dual_level_forecaster.training.trainer import TrainConfig

TINY_BLOCKS = {
    "training": {"batch_size": 2, "epochs": 2, "examples_per_epoch": 2, "M": 2, "future_len": 2,
                 "history_lens": [3], "rng_seed": 5},
    "loss": {"max_pseudo": 4},
    "predictor": {"layers": 1, "d_model": 8, "heads": 2, "ff_dim": 8},
    "discriminator": {"layers": 1, "d_model": 8, "heads": 2, "ff_dim": 8},
}


def make_tiny_config(**training) -> TrainConfig:
    """Two one-step epochs of a one-layer model; a fresh object on every call."""
    return TrainConfig(**{**TINY_BLOCKS["training"], **training},
                       loss=LossConfig(**TINY_BLOCKS["loss"]),
                       predictor=PredictorConfig(**TINY_BLOCKS["predictor"]),
                       discriminator=DiscriminatorConfig(**TINY_BLOCKS["discriminator"]))


@pytest.fixture
def tiny_config():
    return make_tiny_config()


@pytest.fixture(scope="session")
def tiny_scenes():
    return synthetic_dataset(SyntheticSpec(persons=2, scene_count=4, history_len=3, future_len=5, seed=3))


@pytest.fixture(scope="session")
def make_config():
    return make_tiny_config


@pytest.fixture
def tiny_blocks():
    return copy.deepcopy(TINY_BLOCKS)
