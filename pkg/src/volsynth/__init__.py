"""Volumetric cross-modality synthesis toolkit.

A latent-bridged 3D translation GAN (U-shaped dense generator, patch
discriminator, variational encoder), seeded synthetic paired phantoms, a
deterministic training harness, and an oracle-checked evaluation-metric
suite, all behind one CLI.
"""

__version__ = "0.1.0"

from .volume import Volume, load_volume, normalize, save_volume
from .phantom import PairedSample, generate_phantom_pair
from .dataset import DatasetManifest, generate_dataset, load_manifest, split_dataset

__all__ = [
    "__version__",
    "Volume",
    "PairedSample",
    "DatasetManifest",
    "generate_phantom_pair",
    "generate_dataset",
    "load_manifest",
    "split_dataset",
    "normalize",
    "save_volume",
    "load_volume",
]
