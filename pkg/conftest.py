"""
Fixtures compartilhadas dos testes.
"""

import numpy as np
import pytest

from config import TrainConfig
from image_data import make_blob_dataset
from networks import init_discriminator, init_generator


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def gen(rng):
    return init_generator(8, 16, rng)


@pytest.fixture
def disc(rng):
    return init_discriminator(16, rng)


@pytest.fixture
def blob_dir(tmp_path):
    diretorio = tmp_path / "blobs"
    make_blob_dataset(diretorio, n=10, size=16, seed=0)
    return diretorio


@pytest.fixture
def tiny_config(blob_dir, tmp_path):
    """Configuração pequena para execuções rápidas do laço de treinamento."""
    return TrainConfig(
        latent_dim=8,
        image_size=16,
        steps=3,
        seed=7,
        dataset=str(blob_dir),
        out_dir=str(tmp_path / "run"),
        checkpoint_every=2,
        eval_every=2,
        eval_samples=4,
    )
