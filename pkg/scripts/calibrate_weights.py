"""Dev calibration: loss-weight balance for a live bidirectional mechanism.

Trains full and no_discriminator at candidate (lambda1, lambda2, kl)
settings and reports the criterion quantities: test metrics, latent
diversity, and the encoder's KL level (code informativeness).
"""

import itertools
import sys
import time
from pathlib import Path

import numpy as np
import torch

from volsynth.dataset import DatasetManifest, generate_dataset
from volsynth.evaluation import evaluate_generator
from volsynth.losses import FeatureExtractor, LossWeights
from volsynth.seeds import derive_seed
from volsynth.train import TrainConfig, TrainSetup, synthesize, train

torch.set_num_threads(2)

EPOCHS = int(sys.argv[1]) if len(sys.argv) > 1 else 12
CONFIGS = [
    ("l1=10,l2=1,kl=0.1", LossWeights(lambda1=10.0, lambda2=1.0, kl_weight=0.1)),
    ("l1=10,l2=1,kl=0.01", LossWeights(lambda1=10.0, lambda2=1.0, kl_weight=0.01)),
]
SEED = int(sys.argv[2]) if len(sys.argv) > 2 else 1

root = Path("/tmp/trend_data")
base = generate_dataset(root, n_samples=125, shape=(32, 32, 32), structure_count=5, seed=2024, folds=10, fold_index=0, force=True)
manifest = DatasetManifest(
    samples=base.samples,
    split={"train": list(range(100)), "test": list(range(100, 120)), "val": list(range(120, 125))},
    generator_params=base.generator_params,
    global_seed=base.global_seed,
    root=base.root,
)
extractor = FeatureExtractor()

def diversity(gen):
    deltas = []
    for i in manifest.indices("test")[:6]:
        src, _ = manifest.load_pair(i)
        outs = [synthesize(gen, src, z_mode="sample", z_seed=derive_seed(5, "d", i, k)).data for k in range(4)]
        deltas += [float(np.mean(np.abs(a - b))) for a, b in itertools.combinations(outs, 2)]
    return float(np.mean(deltas)), float(np.max(deltas))

for label, weights in CONFIGS:
    for ablation in ("full", "no_discriminator"):
        t0 = time.time()
        setup = TrainSetup(
            train=TrainConfig(epochs=EPOCHS, batch_size=2, seed=SEED, ablation=ablation,
                              loss_weights=weights, checkpoint_every=100000)
        )
        state = train(manifest, setup, out_dir=None, validate=False).state
        report = evaluate_generator(state.generator, manifest, "test", extractor=extractor, eval_seed=424242).report
        mean_d, max_d = diversity(state.generator)
        last = state.history[-1]
        print(
            f"{label:22s} {ablation:16s} {time.time()-t0:5.0f}s "
            f"mae={report.mae:.4f} psnr={report.psnr:.2f} ms_ssim={report.ms_ssim:.4f} fid={report.fid:.3f} "
            f"div_mean={mean_d:.4f} div_max={max_d:.4f} klf={last.kl_forward:.3f} l1={last.l1:.4f}",
            flush=True,
        )
