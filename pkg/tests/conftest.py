import os

import numpy as np
import pytest
import torch

from exinpaint import data
from exinpaint.config import ModelConfig, TrainConfig

torch.set_num_threads(1)

TINY_CHANNELS = {4: 32, 8: 32, 16: 16}


def tiny_train_config(run_dir: str, **overrides) -> TrainConfig:
    kwargs = dict(
        resolution=16,
        batch_size=4,
        total_steps=3,
        seed=11,
        channels=dict(TINY_CHANNELS),
        encoder_pretrain_steps=2,
        identity_pretrain_steps=2,
        checkpoint_every=0,
        run_dir=run_dir,
    )
    kwargs.update(overrides)
    return TrainConfig(**kwargs)


@pytest.fixture(scope="session")
def tiny_model_config() -> ModelConfig:
    return ModelConfig(resolution=16, channels=dict(TINY_CHANNELS))


@pytest.fixture(scope="session")
def toy_corpus_dir(tmp_path_factory) -> str:
    path = tmp_path_factory.mktemp("corpus")
    data.make_toy_corpus(path, n_images=32, n_identities=8, side=16, seed=5)
    return str(path)


@pytest.fixture(scope="session")
def toy_dataset(toy_corpus_dir):
    return data.load_image_folder(toy_corpus_dir, 16)


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory, toy_dataset):
    """A real (briefly trained) checkpoint for inference-layer tests."""
    from exinpaint.training import train

    run_dir = str(tmp_path_factory.mktemp("tinyrun"))
    cfg = tiny_train_config(run_dir)
    train(cfg, toy_dataset)
    return os.path.join(run_dir, "ckpt_final.ckpt")


def rand_image(rng: np.random.Generator, res: int, batch: int = 1) -> torch.Tensor:
    arr = rng.uniform(-1, 1, size=(batch, 3, res, res)).astype(np.float32)
    return torch.from_numpy(arr)
