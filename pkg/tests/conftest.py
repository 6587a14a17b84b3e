import numpy as np
import pytest
import torch

from volsynth.nets import DiscriminatorConfig, EncoderConfig, GeneratorConfig
from volsynth.train import TrainConfig, TrainSetup
from volsynth.volume import Volume

torch.set_num_threads(2)


def tiny_setup(seed: int = 1, **train_kw) -> TrainSetup:
    """A minimal full pipeline for 16^3 volumes; fast enough for unit tests."""
    train_kw.setdefault("epochs", 1)
    train_kw.setdefault("batch_size", 2)
    train_kw.setdefault("checkpoint_every", 4)
    return TrainSetup(
        generator=GeneratorConfig(
            depth=2, base_channels=4, growth_rate=2, latent_dim=4, extra_plain_stage=False
        ),
        discriminator=DiscriminatorConfig(patch_size=8, channel_schedule=(4, 8)),
        encoder=EncoderConfig(block_schedule=(1, 1), base_channels=4, latent_dim=4),
        train=TrainConfig(seed=seed, **train_kw),
        feature_channels=(4, 8),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


@pytest.fixture
def random_volume(rng):
    def make(shape=(16, 16, 16), lo=-1.0, hi=1.0, seed=None):
        local = rng if seed is None else np.random.default_rng(seed)
        data = local.uniform(lo, hi, size=shape).astype(np.float32)
        return Volume(data)

    return make


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Six 16^3 phantom pairs with a 3-fold split, shared across tests."""
    from volsynth.dataset import generate_dataset

    root = tmp_path_factory.mktemp("tiny_data")
    return generate_dataset(
        root, n_samples=6, shape=(16, 16, 16), structure_count=3, seed=99, folds=3, fold_index=0
    )
