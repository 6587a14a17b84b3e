"""Dev diagnostic: what drives the Frechet score at desk scale.

Trains full and no_discriminator at one seed, then decomposes the score:
noise floor (real-vs-real split halves), mean-term vs trace-term, texture
energy of outputs vs targets, and the effect of zero-vs-sampled latents.
"""

import sys
import time
from pathlib import Path

import numpy as np
import torch
from scipy.ndimage import gaussian_filter

from volsynth.dataset import DatasetManifest, generate_dataset
from volsynth.evaluation import synthesize_split
from volsynth.losses import FeatureExtractor
from volsynth.metrics import fid, frechet_distance
from volsynth.train import TrainConfig, TrainSetup, load_checkpoint, save_checkpoint, train

torch.set_num_threads(2)
EPOCHS = int(sys.argv[1]) if len(sys.argv) > 1 else 20

root = Path("/tmp/trend_data")
base = generate_dataset(root, n_samples=125, shape=(32, 32, 32), structure_count=5, seed=2024, folds=10, fold_index=0, force=True)
manifest = DatasetManifest(
    samples=base.samples,
    split={"train": list(range(100)), "test": list(range(100, 120)), "val": list(range(120, 125))},
    generator_params=base.generator_params,
    global_seed=base.global_seed,
    root=base.root,
)

ex = FeatureExtractor()

models = {}
for name, ablation in (("full", "full"), ("nod", "no_discriminator")):
    ckpt = Path(f"/tmp/diag_{name}_{EPOCHS}.ckpt")
    setup = TrainSetup(train=TrainConfig(epochs=EPOCHS, batch_size=2, seed=1, ablation=ablation, checkpoint_every=100000))
    if ckpt.exists():
        state, _ = load_checkpoint(ckpt)
    else:
        t0 = time.time()
        state = train(manifest, setup, out_dir=None, validate=False).state
        print(f"trained {name}: {time.time()-t0:.0f}s", flush=True)
        save_checkpoint(ckpt, state, setup)
    models[name] = state.generator

reals, fakes_full, ids = synthesize_split(models["full"], manifest, "test", eval_seed=424242)
_, fakes_nod, _ = synthesize_split(models["nod"], manifest, "test", eval_seed=424242)
_, fakes_full_z0, _ = synthesize_split(models["full"], manifest, "test", z_mode="zero")
_, fakes_nod_z0, _ = synthesize_split(models["nod"], manifest, "test", z_mode="zero")

def hf_energy(vols):
    vals = []
    for v in vols:
        d = v.data.astype(np.float64)
        vals.append(float(np.mean((d - gaussian_filter(d, 1.5)) ** 2)))
    return np.mean(vals), np.std(vals)

print("\nhigh-frequency energy (mean, std over volumes):")
for label, vols in (("real", reals), ("full", fakes_full), ("nod", fakes_nod)):
    m, s = hf_energy(vols)
    print(f"  {label:6s} {m:.6f} +- {s:.6f}")

def embed_stats(vols):
    feats = ex.embed(vols)
    return feats, feats.mean(axis=0), np.atleast_2d(np.cov(feats, rowvar=False))

f_real, mu_r, c_r = embed_stats(reals)
print("\nfid noise floor real[0:10] vs real[10:20]:", f"{fid(reals[:10], reals[10:], ex):.4f}")

for label, vols in (("full", fakes_full), ("nod", fakes_nod), ("full z0", fakes_full_z0), ("nod z0", fakes_nod_z0)):
    feats, mu_g, c_g = embed_stats(vols)
    total = fid(reals, vols, ex)
    mean_term = float(np.sum((mu_r - mu_g) ** 2))
    print(f"  {label:8s} fid={total:.4f} mean_term={mean_term:.4f} trace_term={total-mean_term:.4f}")

# Per-volume feature variance: does z-sampling inflate the fake covariance?
print("\nper-set mean feature std (diag cov):")
for label, vols in (("real", reals), ("full", fakes_full), ("nod", fakes_nod)):
    feats = ex.embed(vols)
    print(f"  {label:6s} {np.sqrt(np.diag(np.atleast_2d(np.cov(feats, rowvar=False)))).mean():.5f}")
